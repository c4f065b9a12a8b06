#include "chainsim/mgmt.hpp"

#include <algorithm>

namespace chainsim {

////////////////////////////////////////////////////////////////////////////////
// Admission

void Manager::signal_instantiate(uint32_t app_idx) {
    AppRt& app = _sim._apps.at(app_idx);
    _sim._report.control_messages++;
    try {
        app.spec.check();
        VirtualTopology vt = translate(app.spec);
        app.plan = map(vt, _sim._topo, app.cfg.objective);
    } catch (const SimError&) {
        app.state = AppLifecycle::failed;
        return;
    }
    app.state = AppLifecycle::allocated;

    for (const auto& vi : app.plan.vt.instances) {
        const NfSpec* nf = app.spec.find_nf(vi.nf);
        if (!nf) continue;
        uint64_t key = _sim.make_instance(app_idx, vi.id, *nf, app.plan.placement.at(vi.id));
        _sim.inst(key).anchors = vi.anchors;
        app.base_count[vi.nf]++;
        app.next_instance_id = std::max(app.next_instance_id, InstanceId(vi.id + 1));
    }
    provision_backups(app);

    // Instances come up after one round of signaling plus boot.
    double at = _sim.now() + _sim._scn.ctrl_rtt + _sim._scn.instance_boot;
    app.active_at = at;
    _sim._events.schedule(at, [this, app_idx] {
        AppRt& a = _sim._apps.at(app_idx);
        if (a.state != AppLifecycle::allocated) return;
        a.state = AppLifecycle::active;
        for (uint64_t key : a.instances) {
            InstanceRt& i = _sim.inst(key);
            if (!i.standby) i.active = true;
        }
        _sim._report.activation_times[a.name] = _sim.now();
        _sim._report.control_messages++;
        _sim.compute_nominals(a);
    });
}

void Manager::release_app(uint32_t app_idx) {
    AppRt& app = _sim._apps.at(app_idx);
    if (app.state != AppLifecycle::active && app.state != AppLifecycle::allocated) return;
    for (uint64_t key : app.instances) {
        InstanceRt& i = _sim.inst(key);
        i.active = false;
        i.draining = false;
        i.standby = false;
        auto mit = _manual_reserved.find(key);
        if (mit != _manual_reserved.end()) {
            _sim._topo.pop(i.host).residual += mit->second;
            _manual_reserved.erase(mit);
        }
    }
    try {
        release(app.plan, _sim._topo);
    } catch (const SimError&) {
        // Plan never committed; nothing held.
    }
    app.state = AppLifecycle::released;
    app.spares.clear();
    _sim.bump_epoch();
    _sim._report.control_messages++;
}

////////////////////////////////////////////////////////////////////////////////
// Failover provisioning

void Manager::provision_backups(AppRt& app) {
    if (app.cfg.failover != FailoverMode::proactive) return;
    double reserved = 0.0;

    for (const NfSpec& nf : app.spec.nfs) {
        std::set<PopId> primaries;
        for (uint64_t key : app.instances) {
            const InstanceRt& i = _sim.inst(key);
            if (i.nf == nf.name && !i.standby) primaries.insert(i.host);
        }
        if (primaries.empty()) continue;

        // Saturate the primaries' residuals in the pending map so the spare
        // lands somewhere a pop failure cannot take out together with the
        // instance it protects.
        std::map<PopId, ResourceVector> pending;
        for (PopId p : primaries) pending[p] = _sim._topo.pop(p).residual;
        std::vector<PopId> neighbors(primaries.begin(), primaries.end());
        auto pop = choose_pop(_sim._topo, nf.per_instance_resources, neighbors,
                              app.cfg.objective, pending);
        if (pop && primaries.count(*pop)) {
            // Zero-footprint functions fit anywhere, including a saturated
            // primary; fall back to the first distinct pop that works.
            pop.reset();
            for (const auto& [pid, pd] : _sim._topo.pops) {
                if (!pd.up || primaries.count(pid)) continue;
                if (nf.per_instance_resources.fits_into(pd.residual)) {
                    pop = pid;
                    break;
                }
            }
        }
        if (!pop) continue;

        _sim._topo.pop(*pop).residual -= nf.per_instance_resources;
        uint64_t key = _sim.make_instance(app.idx, app.next_instance_id++, nf, *pop);
        _manual_reserved[key] = nf.per_instance_resources;
        InstanceRt& sp = _sim.inst(key);
        sp.standby = true;
        sp.active = false;
        app.spares[nf.name] = key;
        reserved += nf.per_instance_resources.magnitude();
    }

    // Link-disjoint alternates for the planned vlink routes, precomputed so
    // a link failure only costs one control RTT to switch.
    for (size_t vi = 0; vi < app.plan.vt.vlinks.size(); vi++) {
        const VirtualVlink& v = app.plan.vt.vlinks[vi];
        auto fit = app.plan.placement.find(v.from);
        auto tit = app.plan.placement.find(v.to);
        if (fit == app.plan.placement.end() || tit == app.plan.placement.end()) continue;
        if (fit->second == tit->second) continue;
        try {
            auto paths = disjoint_paths(_sim._topo, fit->second, tit->second, 2);
            if (paths.size() >= 2) app.backup_routes[vi] = paths[1];
        } catch (const SimError&) {
        }
    }

    _sim._report.backup_reserved[app.name] = reserved;
}

////////////////////////////////////////////////////////////////////////////////
// Elastic scaling

void Manager::controller_tick() {
    double period = _sim._scn.controller_tick;
    for (auto& app : _sim._apps) {
        if (app.state != AppLifecycle::active) continue;
        for (const NfSpec& nf : app.spec.nfs) {
            if (nf.per_instance_capacity <= 0) continue;
            auto act = _sim.active_instances_of(app.idx, nf.name);
            if (act.empty()) continue;
            uint64_t arrivals = 0;
            for (uint64_t key : app.instances) {
                const InstanceRt& i = _sim.inst(key);
                if (i.nf == nf.name) arrivals += i.arrived_tick;
            }
            double util =
                double(arrivals) / (double(act.size()) * nf.per_instance_capacity * period);
            int dir = app.scalers[nf.name].tick(util, 0.7, _sim._scn.util_high,
                                                _sim._scn.util_low, _sim._scn.hysteresis);
            if (dir > 0)
                scale_out(app, nf.name, util);
            else if (dir < 0)
                scale_in(app, nf.name, util);
        }
    }
    for (auto& [key, i] : _sim._instances) i.arrived_tick = 0;
    _sim._events.schedule(_sim.now() + period, [this] { controller_tick(); });
}

void Manager::scale_out(AppRt& app, const std::string& nf, double util) {
    const NfSpec* spec = app.spec.find_nf(nf);
    if (!spec) return;
    int n = int(_sim.active_instances_of(app.idx, nf).size());

    std::vector<PopId> neighbors;
    auto add_hosts = [&](const std::string& other) {
        for (uint64_t key : _sim.active_instances_of(app.idx, other))
            neighbors.push_back(_sim.inst(key).host);
    };
    for (const auto& [from, outs] : app.succ)
        for (const auto& o : outs) {
            if (o == nf) add_hosts(from);
            if (from == nf) add_hosts(o);
        }

    ScalingAction act;
    act.time = _sim.now();
    act.chain = app.name;
    act.nf = nf;
    act.direction = +1;
    act.from_count = n;
    act.to_count = n + 1;
    act.utilization = util;

    auto pop = choose_pop(_sim._topo, spec->per_instance_resources, neighbors,
                          app.cfg.objective, {});
    if (!pop) {
        // Deferred: the alarm stays on record, capacity has to free up first.
        act.direction = 0;
        act.to_count = n;
        _sim._report.scaling_actions.push_back(act);
        return;
    }

    _sim._topo.pop(*pop).residual -= spec->per_instance_resources;
    uint64_t key = _sim.make_instance(app.idx, app.next_instance_id++, *spec, *pop);
    _manual_reserved[key] = spec->per_instance_resources;
    uint32_t idx = app.idx;
    _sim._events.schedule(_sim.now() + _sim._scn.instance_boot, [this, key, idx] {
        auto it = _sim._instances.find(key);
        if (it != _sim._instances.end() && _sim._apps.at(idx).state == AppLifecycle::active)
            it->second.active = true;
    });
    _sim._report.scaling_actions.push_back(act);
    _sim._report.control_messages++;
}

void Manager::scale_in(AppRt& app, const std::string& nf, double util) {
    auto act_keys = _sim.active_instances_of(app.idx, nf);
    int n = int(act_keys.size());
    int floor_n = 0;
    if (auto it = app.base_count.find(nf); it != app.base_count.end()) floor_n = it->second;
    if (n <= floor_n) return;

    // Retire the least loaded elastic instance; embedded base instances and
    // edge-anchored ones stay.
    uint64_t victim = 0;
    uint64_t least = 0;
    for (uint64_t key : act_keys) {
        const InstanceRt& i = _sim.inst(key);
        if (app.plan.placement.count(i.id)) continue;
        if (!i.anchors.empty()) continue;
        if (!victim || i.arrived_tick < least) {
            victim = key;
            least = i.arrived_tick;
        }
    }
    if (!victim) return;

    _sim.inst(victim).draining = true;
    _sim._events.schedule(_sim.now() + _sim._scn.ctrl_rtt, [this, victim] {
        auto it = _sim._instances.find(victim);
        if (it == _sim._instances.end()) return;
        it->second.active = false;
        it->second.draining = false;
        auto mit = _manual_reserved.find(victim);
        if (mit != _manual_reserved.end()) {
            _sim._topo.pop(it->second.host).residual += mit->second;
            _manual_reserved.erase(mit);
        }
    });

    ScalingAction act;
    act.time = _sim.now();
    act.chain = app.name;
    act.nf = nf;
    act.direction = -1;
    act.from_count = n;
    act.to_count = n - 1;
    act.utilization = util;
    _sim._report.scaling_actions.push_back(act);
    _sim._report.control_messages++;
}

////////////////////////////////////////////////////////////////////////////////
// Failure handling

void Manager::on_pop_change(PopId id, bool up) {
    if (up) return;
    double t = _sim.now();
    for (auto& app : _sim._apps) {
        if (app.state != AppLifecycle::active) continue;
        if (app.cfg.failover == FailoverMode::none) continue;
        fail_over_pop(app, id, t);
    }
}

void Manager::fail_over_pop(AppRt& app, PopId pop, double fail_time) {
    std::vector<uint64_t> affected;
    for (uint64_t key : app.instances) {
        const InstanceRt& i = _sim.inst(key);
        if (i.host == pop && i.active && !i.standby && !i.draining) affected.push_back(key);
    }
    if (affected.empty()) return;

    FailoverRecord rec;
    rec.fail_time = fail_time;
    rec.target_kind = "pop";
    rec.target = pop;
    rec.affected_instances = int(affected.size());
    uint32_t idx = app.idx;

    if (app.cfg.failover == FailoverMode::proactive) {
        // The spare is already placed and booted; one control message flips
        // it live.
        rec.mode = "proactive";
        rec.restored_time = fail_time + _sim._scn.ctrl_rtt;
        _sim._events.schedule(rec.restored_time, [this, idx, affected] {
            AppRt& a = _sim._apps.at(idx);
            for (uint64_t key : affected) {
                InstanceRt& dead = _sim.inst(key);
                dead.active = false;
                auto sit = a.spares.find(dead.nf);
                if (sit == a.spares.end()) continue;
                InstanceRt& sp = _sim.inst(sit->second);
                if (!sp.standby || !_sim._topo.pop(sp.host).up) continue;
                sp.standby = false;
                sp.active = true;
                sp.anchors = dead.anchors;
                a.spares.erase(sit);
            }
            _sim.bump_epoch();
            _sim.compute_nominals(a);
        });
    } else {
        // Detect, signal, place, boot: two control RTTs plus the boot time.
        rec.mode = "reactive";
        rec.restored_time = fail_time + 2.0 * _sim._scn.ctrl_rtt + _sim._scn.instance_boot;
        _sim._events.schedule(rec.restored_time, [this, idx, affected] {
            AppRt& a = _sim._apps.at(idx);
            for (uint64_t key : affected) {
                InstanceRt& dead = _sim.inst(key);
                dead.active = false;
                const NfSpec* nf = a.spec.find_nf(dead.nf);
                if (!nf) continue;
                std::vector<PopId> neighbors;
                auto add_hosts = [&](const std::string& other) {
                    for (uint64_t k2 : _sim.active_instances_of(a.idx, other))
                        neighbors.push_back(_sim.inst(k2).host);
                };
                for (const auto& [from, outs] : a.succ)
                    for (const auto& o : outs) {
                        if (o == dead.nf) add_hosts(from);
                        if (from == dead.nf) add_hosts(o);
                    }
                auto popc = choose_pop(_sim._topo, nf->per_instance_resources, neighbors,
                                       a.cfg.objective, {});
                if (!popc) continue;
                _sim._topo.pop(*popc).residual -= nf->per_instance_resources;
                uint64_t nkey = _sim.make_instance(a.idx, a.next_instance_id++, *nf, *popc);
                _manual_reserved[nkey] = nf->per_instance_resources;
                InstanceRt& repl = _sim.inst(nkey);
                repl.active = true;
                repl.anchors = dead.anchors;
            }
            _sim.bump_epoch();
            _sim.compute_nominals(a);
        });
    }
    _sim._report.failovers.push_back(rec);
    _sim._report.control_messages++;
}

void Manager::on_link_change(LinkId id, bool up) {
    if (up) return;
    double t = _sim.now();
    for (auto& app : _sim._apps) {
        if (app.state != AppLifecycle::active) continue;
        std::vector<size_t> hit;
        for (const auto& [vi, path] : app.plan.routing)
            if (std::find(path.begin(), path.end(), id) != path.end()) hit.push_back(vi);
        if (hit.empty()) continue;

        FailoverRecord rec;
        rec.fail_time = t;
        rec.target_kind = "link";
        rec.target = id;
        rec.affected_instances = int(hit.size());
        uint32_t idx = app.idx;

        if (app.cfg.failover == FailoverMode::proactive) {
            rec.mode = "proactive";
            rec.restored_time = t + _sim._scn.ctrl_rtt;
            _sim._events.schedule(rec.restored_time, [this, idx, hit] {
                AppRt& a = _sim._apps.at(idx);
                for (size_t vi : hit) {
                    auto bit = a.backup_routes.find(vi);
                    if (bit == a.backup_routes.end()) continue;
                    bool usable = true;
                    for (LinkId lk : bit->second)
                        if (!_sim._topo.link(lk).up) usable = false;
                    if (usable) a.plan.routing[vi] = bit->second;
                }
                _sim.bump_epoch();
            });
        } else if (app.cfg.failover == FailoverMode::reactive) {
            rec.mode = "reactive";
            rec.restored_time = t + 2.0 * _sim._scn.ctrl_rtt;
            _sim._events.schedule(rec.restored_time, [this, idx, hit] {
                AppRt& a = _sim._apps.at(idx);
                for (size_t vi : hit) {
                    const VirtualVlink& v = a.plan.vt.vlinks.at(vi);
                    auto fit = a.plan.placement.find(v.from);
                    auto tit = a.plan.placement.find(v.to);
                    if (fit == a.plan.placement.end() || tit == a.plan.placement.end()) continue;
                    try {
                        a.plan.routing[vi] = shortest_path(_sim._topo, fit->second, tit->second);
                    } catch (const SimError&) {
                    }
                }
                _sim.bump_epoch();
            });
        } else {
            continue; // dynamic per-packet fallback is all a bare chain gets
        }
        _sim._report.failovers.push_back(rec);
        _sim._report.control_messages++;
    }
}

////////////////////////////////////////////////////////////////////////////////
// Monitors

void Manager::start_monitors() {
    _monitors.clear();
    for (const auto& m : _sim._scn.monitors) _monitors.push_back(MonitorRt{m, 0.0});
    for (size_t i = 0; i < _monitors.size(); i++) {
        double p = _monitors[i].cfg.period;
        if (p <= 0) continue;
        _sim._events.schedule(_sim.now() + p, [this, i] { monitor_fire(i); });
    }
}

void Manager::monitor_fire(size_t idx) {
    MonitorRt& m = _monitors.at(idx);
    double period = _sim.now() - m.last_at;
    if (period <= 0) period = m.cfg.period;
    MonitorSample s;
    s.time = _sim.now();
    s.target = (m.cfg.is_link ? "link." : "pop.") + std::to_string(m.cfg.target);
    s.metric = m.cfg.metric;
    s.value = monitor_value(m.cfg, period);
    _sim._report.monitor_samples.push_back(s);
    m.last_at = _sim.now();
    if (m.cfg.period > 0)
        _sim._events.schedule(_sim.now() + m.cfg.period, [this, idx] { monitor_fire(idx); });
}

double Manager::monitor_value(const ScenarioMonitor& m, double period) {
    if (m.is_link) {
        auto it = _sim._linkdirs.find(m.target);
        if (it == _sim._linkdirs.end()) return 0.0;
        uint64_t bytes = 0;
        for (auto& d : it->second) {
            bytes += d.bytes_window;
            d.bytes_window = 0;
        }
        const PhysicalLink& l = _sim._topo.link(m.target);
        if (m.metric == "throughput") return period > 0 ? double(bytes) * 8.0 / period : 0.0;
        if (m.metric == "utilization")
            return l.bandwidth > 0 && period > 0 ? double(bytes) * 8.0 / (l.bandwidth * period)
                                                 : 0.0;
        return 0.0;
    }
    const Pop& p = _sim._topo.pop(m.target);
    if (m.metric == "utilization") {
        double u = 0.0;
        if (p.capacity.cpu > 0) u = std::max(u, (p.capacity.cpu - p.residual.cpu) / p.capacity.cpu);
        if (p.capacity.mem > 0) u = std::max(u, (p.capacity.mem - p.residual.mem) / p.capacity.mem);
        if (p.capacity.disk > 0)
            u = std::max(u, (p.capacity.disk - p.residual.disk) / p.capacity.disk);
        return u;
    }
    return 0.0;
}

void Manager::set_monitor_period(const std::string& target, double period) {
    for (auto& m : _monitors) {
        std::string tgt = (m.cfg.is_link ? "link." : "pop.") + std::to_string(m.cfg.target);
        if (tgt == target) m.cfg.period = period;
    }
    _sim._report.control_messages++;
}

} // namespace chainsim
