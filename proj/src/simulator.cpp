#include "chainsim/simulator.hpp"

#include <algorithm>
#include <cmath>

#include "chainsim/mgmt.hpp"

namespace chainsim {

namespace {

// Wire bytes of a TLV with the given value length.
size_t tlv_bytes(size_t value_len) { return kTlvHeaderBytes + value_len; }

bool has_tlv(const Packet& p, uint16_t kind) { return p.find_tlv(kind) != nullptr; }

int packet_priority(const Packet& p, int fallback) {
    const Tlv* t = p.find_tlv(TLV_PRIORITY);
    return t ? read_priority_tlv(*t) : fallback;
}

} // namespace

////////////////////////////////////////////////////////////////////////////////
// Construction

Simulator::Simulator(Scenario scn)
    : _scn(std::move(scn)), _topo(_scn.build_topology()), _rng(_scn.seed) {
    _report.seed = _scn.seed;
    _report.report_window = _scn.report_window;
    _mgr = std::make_unique<Manager>(*this);
    build_runtime();
}

Simulator::~Simulator() = default;

void Simulator::build_runtime() {
    for (const auto& e : _scn.endpoints) {
        EndpointRt ep;
        ep.id = e.id;
        ep.pop = e.pop;
        // Senders keep reliable payloads around for escalated recovery; the
        // budget bounds memory, LRU takes care of the rest.
        ep.buffer = std::make_unique<PacketCache>(64ull << 20);
        _endpoints.emplace(e.id, std::move(ep));
    }

    for (const auto& l : _scn.links) {
        std::array<LinkDirRt, 2> dirs;
        for (int d = 0; d < 2; d++) {
            dirs[d].link = l.id;
            dirs[d].from = d == 0 ? l.a : l.b;
            dirs[d].to = d == 0 ? l.b : l.a;
            dirs[d].queue = std::make_unique<PacketQueue>(l.qdisc, l.queue_bytes);
        }
        _linkdirs.emplace(l.id, std::move(dirs));
    }

    for (size_t i = 0; i < _scn.chains.size(); i++) {
        AppRt app;
        app.idx = uint32_t(i);
        app.cfg = _scn.chains[i];
        app.name = app.cfg.name;
        app.spec = _scn.chain_spec(app.cfg);
        for (const auto& v : app.spec.vlinks) app.succ[v.from].push_back(v.to);
        for (auto& [nf, out] : app.succ) std::sort(out.begin(), out.end());
        app.ingress = app.spec.ingress_nfs();
        app.egress = app.spec.egress_nfs();
        _apps.push_back(std::move(app));
    }

    for (const auto& sf : _scn.flows) {
        FlowRt f;
        f.cfg = sf;
        f.req = _scn.flow_requirement(sf);
        for (size_t i = 0; i < _apps.size(); i++)
            if (_apps[i].name == sf.chain) f.app = uint32_t(i);
        f.src = _scn.endpoint_id(sf.src);
        for (const auto& d : sf.dsts) f.dsts.push_back(_scn.endpoint_id(d));
        f.greedy = sf.rate <= 0.0;
        f.rate = sf.rate;
        f.size = sf.size;
        _flows.emplace(sf.id, std::move(f));
    }

    for (const auto& c : _scn.changes) {
        static const std::set<std::string> known = {
            "rate", "priority", "reliability", "deadline", "max_delay",
            "min_tput", "max_loss", "size", "admin"};
        for (const auto& [k, v] : c.kv)
            if (!known.count(k))
                throw InvalidSpecError("onchange key '" + k + "' is not runtime-adjustable");
    }

    resolve_induced_losses();
}

void Simulator::resolve_induced_losses() {
    for (const auto& rule : _scn.losses) {
        FlowRt& f = _flows.at(rule.flow);
        ScenarioLoss r = rule;
        if (r.last) {
            if (f.greedy)
                throw InvalidSpecError("lose seq=last needs a rated flow with a stop time");
            for (const auto& c : _scn.changes)
                if (c.flow == r.flow && c.kv.count("rate"))
                    throw InvalidSpecError("lose seq=last cannot follow a rate change");
            double stop = f.cfg.stop > 0 ? std::min(f.cfg.stop, _scn.duration) : _scn.duration;
            // Replay the generator's exact time arithmetic so the resolved
            // seq matches what the run will actually emit last.
            double t = f.cfg.start;
            uint64_t n = 0;
            while (t < stop) {
                n++;
                t += 1.0 / f.rate;
            }
            if (n == 0) continue; // flow never fires
            r.last = false;
            r.seq = n - 1;
            f.last_seq = r.seq;
        }
        _loss_rules[{r.flow, r.link}].push_back(LossRuleRt{r, {}});
    }
}

uint64_t Simulator::make_instance(uint32_t app, InstanceId id, const NfSpec& nf, PopId host) {
    InstanceRt inst;
    inst.key = inst_key(app, id);
    inst.app = app;
    inst.id = id;
    inst.nf = nf.name;
    inst.kind = nf.kind;
    inst.host = host;
    inst.capacity = nf.per_instance_capacity;
    inst.proc_delay =
        nf.per_packet_processing_delay + _topo.pop(host).processing_delay(nf_kind_name(nf.kind));
    inst.config = nf.config;
    if (auto it = nf.config.find("window"); it != nf.config.end())
        inst.dedup = DedupWindow(size_t(it->second));
    if (nf.kind == NfKind::transport_assistant) {
        uint64_t budget = 16ull << 20;
        if (auto it = nf.config.find("cache_bytes"); it != nf.config.end())
            budget = uint64_t(it->second);
        inst.cache = std::make_unique<PacketCache>(budget);
    }
    if (nf.kind == NfKind::cropper) {
        // interest.<endpoint-name> config keys resolve to endpoint ids here.
        for (const auto& [k, v] : nf.config) {
            if (k.rfind("interest.", 0) == 0)
                inst.interest.emplace_back(_scn.endpoint_id(k.substr(9)), v);
        }
        std::sort(inst.interest.begin(), inst.interest.end());
    }
    uint64_t key = inst.key;
    _instances.emplace(key, std::move(inst));
    _apps[app].instances.insert(key);
    return key;
}

////////////////////////////////////////////////////////////////////////////////
// Bootstrap and main loop

void Simulator::schedule_bootstrap() {
    for (auto& app : _apps) {
        uint32_t idx = app.idx;
        _events.schedule(0.0, [this, idx] { _mgr->signal_instantiate(idx); });
    }
    for (auto& [id, f] : _flows) start_generator(f);
    for (const auto& c : _scn.changes) {
        ScenarioChange ch = c;
        _events.schedule(c.at + _scn.ctrl_rtt / 2.0, [this, ch] { apply_change(ch); });
    }
    for (const auto& ft : _scn.faults) {
        ScenarioFault fv = ft;
        _events.schedule(ft.at, [this, fv] { apply_fault(fv, false); });
        _events.schedule(ft.at + ft.duration, [this, fv] { apply_fault(fv, true); });
    }
    if (_scn.controller_tick > 0)
        _events.schedule(_scn.controller_tick, [this] { _mgr->controller_tick(); });
    _mgr->start_monitors();
}

SimulationReport Simulator::run() {
    schedule_bootstrap();
    _events.run_until(_scn.duration);
    finalize_report();
    return _report;
}

void Simulator::finalize_report() {
    _report.duration = _scn.duration;
    _report.events_executed = _events.executed();
    if (_scn.report_window > 0) {
        size_t slots = size_t(std::ceil(_scn.duration / _scn.report_window));
        for (auto& [id, f] : _flows) {
            f.window_bytes.resize(slots, 0);
            _report.window_bytes[id] = f.window_bytes;
        }
    }
}

AppRt* Simulator::app_named(const std::string& name) {
    for (auto& a : _apps)
        if (a.name == name) return &a;
    return nullptr;
}

FlowRt* Simulator::flow_rt(FlowId f) {
    auto it = _flows.find(f);
    return it == _flows.end() ? nullptr : &it->second;
}

////////////////////////////////////////////////////////////////////////////////
// Lookups

PopId Simulator::entity_pop(uint64_t ref) {
    switch (entity_kind(ref)) {
    case EntityKind::endpoint:
        return _endpoints.at(EndpointId(entity_id(ref))).pop;
    case EntityKind::instance:
        return _instances.at(entity_id(ref)).host;
    default:
        throw UnknownTargetError("entity ref " + std::to_string(ref));
    }
}

bool Simulator::entity_usable(uint64_t ref) {
    switch (entity_kind(ref)) {
    case EntityKind::endpoint: {
        auto it = _endpoints.find(EndpointId(entity_id(ref)));
        return it != _endpoints.end() && _topo.pop(it->second.pop).up;
    }
    case EntityKind::instance: {
        auto it = _instances.find(entity_id(ref));
        return it != _instances.end() && (it->second.active || it->second.draining) &&
               _topo.pop(it->second.host).up;
    }
    default:
        return false;
    }
}

std::vector<uint64_t> Simulator::active_instances_of(uint32_t app, const std::string& nf) {
    std::vector<uint64_t> out;
    for (uint64_t key : _apps[app].instances) {
        const InstanceRt& i = _instances.at(key);
        if (i.nf == nf && i.active && !i.draining && _topo.pop(i.host).up) out.push_back(key);
    }
    return out;
}

uint64_t Simulator::pick_instance(uint32_t app, const std::string& nf, FlowId flow,
                                  std::optional<EndpointId> anchor) {
    std::vector<uint64_t> ids = active_instances_of(app, nf);
    if (ids.empty()) return 0;
    if (anchor) {
        for (uint64_t key : ids) {
            const auto& a = _instances.at(key).anchors;
            if (std::find(a.begin(), a.end(), *anchor) != a.end()) return key;
        }
    }
    // Sticky mapping keeps one flow on one instance while the set is stable,
    // which duplicate elimination downstream depends on.
    return ids[flow % ids.size()];
}

////////////////////////////////////////////////////////////////////////////////
// Routing

const std::vector<LinkId>& Simulator::route(PopId from, PopId to) {
    CachedRoute& c = _route_cache[{from, to}];
    if (c.epoch != _topo_epoch) {
        c.path = shortest_path(_topo, from, to);
        c.epoch = _topo_epoch;
    }
    return c.path;
}

std::vector<std::vector<LinkId>> Simulator::fork_routes(PopId from, PopId to, int k) {
    CachedFork& c = _fork_cache[{from, to}];
    if (c.epoch != _topo_epoch || c.k != k) {
        c.paths = disjoint_paths(_topo, from, to, k);
        c.epoch = _topo_epoch;
        c.k = k;
    }
    return c.paths;
}

std::vector<LinkId> Simulator::vlink_route(AppRt& app, InstanceId from, InstanceId to,
                                           PopId from_pop, PopId to_pop) {
    // Planned embedding route when it still applies; dynamic otherwise.
    for (size_t i = 0; i < app.plan.vt.vlinks.size(); i++) {
        const VirtualVlink& v = app.plan.vt.vlinks[i];
        if (v.from != from || v.to != to) continue;
        auto rit = app.plan.routing.find(i);
        if (rit == app.plan.routing.end()) break;
        const auto& path = rit->second;
        bool ok = !path.empty() || from_pop == to_pop;
        PopId at = from_pop;
        for (LinkId l : path) {
            const PhysicalLink& pl = _topo.link(l);
            if (!pl.up || !pl.touches(at)) {
                ok = false;
                break;
            }
            at = pl.other(at);
        }
        if (ok && at == to_pop) return path;
        break;
    }
    return route(from_pop, to_pop);
}

////////////////////////////////////////////////////////////////////////////////
// Accounting

void Simulator::mint(Packet& p, bool original) {
    if (!is_data(p)) return;
    FlowStats& s = stats(p.flow);
    if (original)
        s.injected++;
    else
        s.duplicated++;
    s.live++;
}

void Simulator::terminal(const Packet& p, uint64_t FlowStats::*counter) {
    if (!is_data(p)) return;
    FlowStats& s = stats(p.flow);
    s.*counter += 1;
    s.live--;
}

////////////////////////////////////////////////////////////////////////////////
// Generators

void Simulator::start_generator(FlowRt& f) {
    FlowId id = f.cfg.id;
    f.gen_timer = _events.schedule(f.cfg.start, [this, id] { generator_fire(id); });
}

void Simulator::generator_fire(FlowId id) {
    FlowRt& f = _flows.at(id);
    f.gen_timer = 0;
    double stop = f.cfg.stop > 0 ? std::min(f.cfg.stop, _scn.duration) : _scn.duration;
    if (now() >= stop) return;
    AppRt& app = _apps.at(f.app);
    if (f.greedy) {
        // Window-limited source: make sure the lane exists and let acks
        // clock it from here on.
        if (app.state == AppLifecycle::active) {
            Packet p = make_packet(f);
            source_admit(f, std::move(p));
        } else if (app.state == AppLifecycle::requested || app.state == AppLifecycle::allocated) {
            double retry = std::max(app.active_at, now() + _scn.ctrl_rtt);
            f.gen_timer = _events.schedule(retry, [this, id] { generator_fire(id); });
        }
        return;
    }
    Packet p = make_packet(f);
    source_admit(f, std::move(p));
    double next = now() + 1.0 / f.rate;
    if (next < stop) f.gen_timer = _events.schedule(next, [this, id] { generator_fire(id); });
}

Packet Simulator::make_packet(FlowRt& f) {
    Packet p;
    p.app = _apps.at(f.app).spec.app.pack();
    p.kind = PacketKind::regular;
    p.flow = f.cfg.id;
    p.seq = f.next_seq++;
    p.payload_bytes = f.size;
    p.created_at = now();
    p.ctx.app = f.app;
    p.ctx.src = f.src;
    mint(p, true);
    return p;
}

void Simulator::source_admit(FlowRt& f, Packet p) {
    AppRt& app = _apps.at(f.app);
    if (app.state != AppLifecycle::active || f.admin_down) {
        terminal(p, &FlowStats::dropped_admin);
        return;
    }
    // First reliability point seen from the source: destination for
    // end-to-end transport, else the first assistant stage on the path.
    uint64_t receiver = 0;
    LaneMode mode = LaneMode::windowed;
    if (f.cfg.transport == TransportMode::e2e) {
        receiver = entity_ref(EntityKind::endpoint, f.dsts.front());
    } else {
        std::string at = app.ingress.empty() ? "" : app.ingress.front();
        std::set<std::string> seen;
        while (!at.empty() && seen.insert(at).second) {
            const NfSpec* nf = app.spec.find_nf(at);
            if (nf && nf->kind == NfKind::transport_assistant) {
                uint64_t key = pick_instance(f.app, at, f.cfg.id, std::nullopt);
                if (!key) {
                    terminal(p, &FlowStats::dropped_failure);
                    return;
                }
                receiver = entity_ref(EntityKind::instance, key);
                break;
            }
            auto it = app.succ.find(at);
            at = (it == app.succ.end() || it->second.empty()) ? "" : it->second.front();
        }
        if (!receiver) receiver = entity_ref(EntityKind::endpoint, f.dsts.front());
        mode = LaneMode::app_paced;
    }
    uint64_t me = entity_ref(EntityKind::endpoint, f.src);
    Lane& lane = lane_at(me, receiver, mode, f.cfg.id);
    lane_admit(me, lane, f.cfg.id, std::move(p));
}

////////////////////////////////////////////////////////////////////////////////
// Link layer

LinkDirRt& Simulator::dir_from(LinkId link, PopId from) {
    auto& dirs = _linkdirs.at(link);
    return dirs[dirs[0].from == from ? 0 : 1];
}

void Simulator::transmit(Packet p, PopId from, std::vector<LinkId> path, uint64_t target) {
    p.ctx.route = std::move(path);
    p.ctx.hop = 0;
    p.ctx.target = target;
    if (p.ctx.route.empty()) {
        // Same-pop handoff; still goes through the queue of events so
        // ordering matches a real dispatch.
        PopId at = from;
        _events.schedule(now(), [this, q = std::move(p), at]() mutable {
            uint64_t tgt = q.ctx.target;
            deliver(std::move(q), tgt, at);
        });
        return;
    }
    LinkDirRt& d = dir_from(p.ctx.route[0], from);
    link_enqueue(d, std::move(p));
}

bool Simulator::induced_loss(const Packet& p, LinkId link) {
    if (!is_data(p)) return false;
    auto it = _loss_rules.find({p.flow, link});
    if (it == _loss_rules.end()) return false;
    for (LossRuleRt& rt : it->second) {
        const ScenarioLoss& r = rt.spec;
        bool hit = false;
        if (r.every > 0) {
            hit = p.seq >= r.from && (p.seq - r.from) % r.every == 0 &&
                  (r.count == 0 || (p.seq - r.from) / r.every < r.count);
        } else {
            hit = p.seq == r.seq;
        }
        if (hit && rt.taken.insert(p.seq).second) return true;
    }
    return false;
}

void Simulator::link_enqueue(LinkDirRt& d, Packet p) {
    const PhysicalLink& l = _topo.link(d.link);
    LinkStats& ls = _report.links[d.link];
    if (!l.up) {
        ls.dropped_down++;
        terminal(p, &FlowStats::dropped_failure);
        return;
    }
    if (is_data(p) && has_tlv(p, TLV_DROP_IF_CONGESTION) &&
        d.queue->occupancy_bytes() * 5 > d.queue->capacity_bytes() * 4) {
        terminal(p, &FlowStats::dropped_admin);
        return;
    }
    FlowId arriving_flow = p.flow;
    bool arriving_data = is_data(p);
    std::vector<Packet> evicted;
    bool ok = d.queue->enqueue(std::move(p), now(), &evicted);
    for (auto& ev : evicted) {
        ls.queue_drops++;
        terminal(ev, &FlowStats::dropped_queue);
    }
    if (!ok) {
        // The refused packet died inside enqueue; settle its ledger here.
        ls.queue_drops++;
        if (arriving_data) {
            FlowStats& s = stats(arriving_flow);
            s.dropped_queue++;
            s.live--;
        }
    }
    link_pump(d);
}

void Simulator::link_pump(LinkDirRt& d) {
    if (d.busy || d.queue->empty()) return;
    auto slot = d.queue->dequeue();
    Packet p = std::move(slot->packet);
    p.breakdown[size_t(DelayComponent::queuing)] += now() - slot->enqueued_at;

    const PhysicalLink& l = _topo.link(d.link);
    LinkStats& ls = _report.links[d.link];
    double tx = double(p.wire_size()) * 8.0 / l.bandwidth;
    ls.sent++;
    ls.bytes_sent += p.wire_size();
    d.bytes_window += p.wire_size();

    bool lost = false;
    if (induced_loss(p, d.link)) {
        lost = true;
    } else if (l.loss_probability > 0.0) {
        lost = _rng.substream("link." + std::to_string(d.link)).bernoulli(l.loss_probability);
    }
    d.busy = true;
    if (lost) {
        ls.dropped_loss++;
        terminal(p, &FlowStats::dropped_loss);
        _events.schedule(now() + tx, [this, &d] {
            d.busy = false;
            link_pump(d);
        });
        return;
    }
    double enq = slot->enqueued_at;
    _events.schedule(now() + tx, [this, &d, p = std::move(p), enq, tx]() mutable {
        p.breakdown[size_t(DelayComponent::transmission)] += tx;
        link_tx_done(d, std::move(p), enq);
    });
}

void Simulator::link_tx_done(LinkDirRt& d, Packet p, double) {
    const PhysicalLink& l = _topo.link(d.link);
    LinkStats& ls = _report.links[d.link];
    d.busy = false;
    if (!l.up) {
        // Failed while the packet was on the wire.
        ls.dropped_down++;
        terminal(p, &FlowStats::dropped_failure);
    } else {
        LinkId link = d.link;
        PopId to = d.to;
        double prop = l.propagation_delay;
        _events.schedule(now() + prop, [this, p = std::move(p), link, to, prop]() mutable {
            p.breakdown[size_t(DelayComponent::propagation)] += prop;
            link_arrival(std::move(p), link, to);
        });
    }
    link_pump(d);
}

void Simulator::link_arrival(Packet p, LinkId link, PopId at) {
    _report.links[link].delivered++;
    if (!_topo.pop(at).up) {
        terminal(p, &FlowStats::dropped_failure);
        return;
    }
    p.ctx.hop++;
    if (p.ctx.hop < p.ctx.route.size()) {
        LinkId next = p.ctx.route[p.ctx.hop];
        if (_topo.link(next).touches(at)) {
            link_enqueue(dir_from(next, at), std::move(p));
            return;
        }
        // Route no longer starts here (target moved); rebuild from scratch.
        uint64_t target = p.ctx.target;
        try {
            PopId dest = entity_pop(target);
            transmit(std::move(p), at, route(at, dest), target);
        } catch (const SimError&) {
            terminal(p, &FlowStats::dropped_failure);
        }
        return;
    }
    deliver(std::move(p), p.ctx.target, at);
}

void Simulator::deliver(Packet p, uint64_t target, PopId at) {
    switch (entity_kind(target)) {
    case EntityKind::endpoint: {
        auto it = _endpoints.find(EndpointId(entity_id(target)));
        if (it == _endpoints.end()) {
            terminal(p, &FlowStats::dropped_failure);
            return;
        }
        if (it->second.pop != at) {
            try {
                transmit(std::move(p), at, route(at, it->second.pop), target);
            } catch (const SimError&) {
                terminal(p, &FlowStats::dropped_failure);
            }
            return;
        }
        endpoint_arrival(std::move(p), it->first);
        return;
    }
    case EntityKind::instance: {
        auto it = _instances.find(entity_id(target));
        if (it == _instances.end()) {
            terminal(p, &FlowStats::dropped_failure);
            return;
        }
        if (it->second.host != at) {
            try {
                transmit(std::move(p), at, route(at, it->second.host), target);
            } catch (const SimError&) {
                terminal(p, &FlowStats::dropped_failure);
            }
            return;
        }
        deliver_to_instance(std::move(p), it->first);
        return;
    }
    default:
        terminal(p, &FlowStats::dropped_failure);
    }
}

////////////////////////////////////////////////////////////////////////////////
// NF service

void Simulator::deliver_to_instance(Packet p, uint64_t key) {
    InstanceRt& i = inst(key);
    if ((!i.active && !i.draining) || !_topo.pop(i.host).up) {
        terminal(p, &FlowStats::dropped_failure);
        return;
    }
    if (p.kind == PacketKind::signaling) {
        // Control is handled out of band: no service slot, no delay.
        instance_control(key, std::move(p));
        return;
    }
    i.arrived_tick++;
    double arrival = now();
    double start = std::max(arrival, i.next_free);
    i.next_free = start + 1.0 / i.capacity;
    double finish = start + i.proc_delay;
    _events.schedule(finish, [this, key, p = std::move(p), arrival, start]() mutable {
        InstanceRt& ii = inst(key);
        if (!_topo.pop(ii.host).up) {
            terminal(p, &FlowStats::dropped_failure);
            return;
        }
        p.breakdown[size_t(DelayComponent::queuing)] += start - arrival;
        p.breakdown[size_t(DelayComponent::processing)] += ii.proc_delay;
        nf_process(key, std::move(p));
    });
}

void Simulator::nf_process(uint64_t key, Packet p) {
    InstanceRt& i = inst(key);
    switch (i.kind) {
    case NfKind::application_assistant:
        aa_process(key, std::move(p));
        return;
    case NfKind::transport_assistant:
        ta_process(key, std::move(p));
        return;
    case NfKind::prf:
        prf_process(key, std::move(p));
        return;
    case NfKind::pef:
        pef_process(key, std::move(p));
        return;
    case NfKind::pof:
        pof_process(key, std::move(p));
        return;
    case NfKind::monitor:
        monitor_process(i, p);
        forward_stage(key, std::move(p));
        return;
    case NfKind::encoder: {
        double ratio = 1.0;
        if (auto it = i.config.find("ratio"); it != i.config.end()) ratio = it->second;
        p = encode_transform(std::move(p), ratio);
        forward_stage(key, std::move(p));
        return;
    }
    case NfKind::cropper: {
        if (i.interest.empty()) {
            forward_stage(key, std::move(p));
            return;
        }
        std::vector<Packet> copies = crop_transform(p, i.interest);
        FlowStats& s = stats(p.flow);
        if (is_data(p) && copies.size() > 1) {
            s.duplicated += copies.size() - 1;
            s.live += copies.size() - 1;
        }
        for (auto& c : copies) forward_stage(key, std::move(c));
        return;
    }
    case NfKind::forwarder:
    case NfKind::custom: {
        if (auto it = i.config.find("ratio"); it != i.config.end())
            p = encode_transform(std::move(p), it->second);
        if (auto it = i.config.find("drop_fraction"); it != i.config.end() && it->second > 0)
            p = partial_drop_transform(std::move(p), it->second);
        if (auto it = i.config.find("bundle"); it != i.config.end() && it->second > 1) {
            FlowId flow = p.flow;
            i.bundle_acc[flow].push_back(std::move(p));
            if (i.bundle_acc[flow].size() >= size_t(it->second)) {
                bundle_flush(key, flow);
            } else if (!i.bundle_timers.count(flow)) {
                double wait = 0.01;
                if (auto w = i.config.find("bundle_timeout"); w != i.config.end())
                    wait = w->second;
                i.bundle_timers[flow] =
                    _events.schedule(now() + wait, [this, key, flow] { bundle_flush(key, flow); });
            }
            return;
        }
        forward_stage(key, std::move(p));
        return;
    }
    }
}

void Simulator::bundle_flush(uint64_t key, FlowId flow) {
    InstanceRt& i = inst(key);
    if (auto it = i.bundle_timers.find(flow); it != i.bundle_timers.end()) {
        _events.cancel(it->second);
        i.bundle_timers.erase(it);
    }
    auto acc = std::move(i.bundle_acc[flow]);
    i.bundle_acc.erase(flow);
    if (acc.empty()) return;
    if (acc.size() == 1) {
        forward_stage(key, std::move(acc.front()));
        return;
    }
    Packet carrier = bundle_packets(acc);
    // The carrier continues the first member's life; the rest are consumed.
    FlowStats& s = stats(flow);
    s.consumed_bundle += acc.size() - 1;
    s.live -= acc.size() - 1;
    forward_stage(key, std::move(carrier));
}

void Simulator::forward_stage(uint64_t key, Packet p) {
    InstanceRt& i = inst(key);
    AppRt& app = _apps.at(i.app);
    auto sit = app.succ.find(i.nf);
    if (sit == app.succ.end() || sit->second.empty()) {
        forward_to_dests(key, std::move(p));
        return;
    }
    const auto& succs = sit->second;
    FlowRt* f = flow_rt(p.flow);

    std::vector<std::pair<std::string, Packet>> outs;
    for (size_t si = 0; si < succs.size(); si++) {
        const std::string& s = succs[si];
        bool to_egress =
            std::find(app.egress.begin(), app.egress.end(), s) != app.egress.end();
        if (to_egress && f && f->dsts.size() > 1 && !has_tlv(p, TLV_DEST)) {
            // Entering the egress stage with several destinations: one
            // pinned copy per destination from here on.
            for (EndpointId d : f->dsts) {
                Packet c = p;
                c.set_tlv(make_u32_tlv(TLV_DEST, d));
                outs.emplace_back(s, std::move(c));
            }
        } else {
            outs.emplace_back(s, p);
        }
    }
    if (is_data(p) && outs.size() > 1) {
        FlowStats& st = stats(p.flow);
        st.duplicated += outs.size() - 1;
        st.live += outs.size() - 1;
    }
    for (auto& [s, c] : outs) {
        std::optional<EndpointId> anchor;
        if (const Tlv* t = c.find_tlv(TLV_DEST)) anchor = read_u32_tlv(*t);
        uint64_t next = pick_instance(i.app, s, c.flow, anchor);
        if (!next) {
            terminal(c, &FlowStats::dropped_failure);
            continue;
        }
        const InstanceRt& ni = _instances.at(next);
        try {
            std::vector<LinkId> path = vlink_route(app, i.id, ni.id, i.host, ni.host);
            transmit(std::move(c), i.host, std::move(path),
                     entity_ref(EntityKind::instance, next));
        } catch (const SimError&) {
            terminal(c, &FlowStats::dropped_failure);
        }
    }
}

void Simulator::forward_to_dests(uint64_t key, Packet p) {
    InstanceRt& i = inst(key);
    FlowRt* f = flow_rt(p.flow);
    std::vector<EndpointId> dests;
    if (const Tlv* t = p.find_tlv(TLV_DEST)) {
        dests.push_back(read_u32_tlv(*t));
    } else if (f && f->dsts.size() > 1) {
        dests = f->dsts;
    } else if (f) {
        dests.push_back(f->dsts.front());
    } else {
        terminal(p, &FlowStats::dropped_failure);
        return;
    }
    if (is_data(p) && dests.size() > 1) {
        FlowStats& st = stats(p.flow);
        st.duplicated += dests.size() - 1;
        st.live += dests.size() - 1;
    }
    for (size_t di = 0; di < dests.size(); di++) {
        Packet c = p;
        if (dests.size() > 1) c.set_tlv(make_u32_tlv(TLV_DEST, dests[di]));
        auto eit = _endpoints.find(dests[di]);
        if (eit == _endpoints.end()) {
            terminal(c, &FlowStats::dropped_failure);
            continue;
        }
        try {
            transmit(std::move(c), i.host, route(i.host, eit->second.pop),
                     entity_ref(EntityKind::endpoint, dests[di]));
        } catch (const SimError&) {
            terminal(c, &FlowStats::dropped_failure);
        }
    }
}

////////////////////////////////////////////////////////////////////////////////
// Application assistant

void Simulator::aa_process(uint64_t key, Packet p) {
    InstanceRt& i = inst(key);
    if (is_data(p) && !has_tlv(p, TLV_PRIORITY)) {
        // Ingress pass: stamp policy onto the wire from the live flow
        // requirement. Retransmitted copies arrive clean and get restamped.
        FlowRt* f = flow_rt(p.flow);
        if (!f || f->admin_down) {
            terminal(p, &FlowStats::dropped_admin);
            return;
        }
        p.set_tlv(make_priority_tlv(uint8_t(f->req.priority)));
        RequirementTlv rq;
        rq.min_tput = f->req.min_throughput;
        rq.max_delay = f->req.max_e2e_delay;
        rq.max_loss = f->req.max_loss_ratio;
        rq.reliability = uint8_t(f->req.reliability);
        rq.deadline = f->req.deadline;
        p.set_tlv(make_requirement_tlv(rq));
        p.set_tlv(make_timestamp_tlv(p.created_at));
        if (f->req.reliability == Reliability::none)
            p.set_tlv(make_f64_tlv(TLV_RETX_TIMEOUT, 0.0));
        else if (f->req.reliability == Reliability::partial)
            p.set_tlv(make_f64_tlv(TLV_RETX_TIMEOUT, f->req.deadline));
        if (auto it = i.config.find("threshold"); it != i.config.end() && it->second > 0)
            p.set_tlv(make_f64_tlv(TLV_REPORT_THRESHOLD, it->second));
        if (auto it = i.config.find("drop_if_congestion");
            it != i.config.end() && it->second > 0)
            p.set_tlv(Tlv{TLV_DROP_IF_CONGESTION, {}});
    }
    forward_stage(key, std::move(p));
}

////////////////////////////////////////////////////////////////////////////////
// Transport assistant

void Simulator::ta_process(uint64_t key, Packet p) {
    InstanceRt& i = inst(key);
    FlowId flow = p.flow;
    uint64_t me = entity_ref(EntityKind::instance, key);

    // Flows running their own end to end loop are not segmented; the
    // assistant steps aside so receiver acks reach the source unclaimed.
    if (FlowRt* fr = flow_rt(flow); fr && fr->cfg.transport == TransportMode::e2e && is_data(p)) {
        forward_stage(key, std::move(p));
        return;
    }

    bool escalated = false;
    if (auto eit = i.expect_escalated.find(flow); eit != i.expect_escalated.end())
        escalated = eit->second.erase(p.seq) > 0;

    // Receiver half: acknowledge toward the upstream segment sender.
    if (p.ctx.seg_sender && p.ctx.seg_sender != me) {
        i.ack_to[flow] = p.ctx.seg_sender;
        RecvTracker& tr = i.recv[flow];
        if (const Tlv* t = p.find_tlv(TLV_SKIP))
            tr.skip_to(read_escalate_tlv(*t).seq);
        bool first = tr.on_data(p.seq);
        if (const Tlv* t = p.find_tlv(TLV_BUNDLE)) {
            // Bundled seqs were consumed into this carrier upstream; they
            // count as arrived or the window would wait on them forever.
            for (uint64_t q : read_bundle_tlv(*t))
                if (q != p.seq) tr.on_data(q);
        }
        send_ack(me, flow, tr, p.ctx.seg_sender);
        if (const Tlv* dt = p.find_tlv(TLV_DEST)) {
            // Pinned copies share seqs across destinations; the per-flow
            // tracker above drives the upstream ack, this one decides
            // whether this destination's copy already went through.
            RecvTracker& td = i.recv_dest[{flow, EndpointId(read_u32_tlv(*dt))}];
            if (const Tlv* t = p.find_tlv(TLV_SKIP))
                td.skip_to(read_escalate_tlv(*t).seq);
            first = td.on_data(p.seq);
            if (const Tlv* t = p.find_tlv(TLV_BUNDLE))
                for (uint64_t q : read_bundle_tlv(*t))
                    if (q != p.seq) td.on_data(q);
        }
        if (!first && !escalated) {
            terminal(p, &FlowStats::absorbed_dup);
            return;
        }
    }

    // Sender half: next reliability point downstream.
    AppRt& app = _apps.at(i.app);
    FlowRt* f = flow_rt(flow);
    uint64_t receiver = 0;
    std::string at;
    if (auto sit = app.succ.find(i.nf); sit != app.succ.end() && !sit->second.empty())
        at = sit->second.front();
    std::set<std::string> seen;
    while (!at.empty() && seen.insert(at).second) {
        const NfSpec* nf = app.spec.find_nf(at);
        if (nf && nf->kind == NfKind::transport_assistant) {
            uint64_t nkey = pick_instance(i.app, at, flow, std::nullopt);
            if (nkey) receiver = entity_ref(EntityKind::instance, nkey);
            break;
        }
        auto it = app.succ.find(at);
        at = (it == app.succ.end() || it->second.empty()) ? "" : it->second.front();
    }
    if (!receiver) {
        EndpointId d = 0;
        if (const Tlv* t = p.find_tlv(TLV_DEST))
            d = read_u32_tlv(*t);
        else if (f)
            d = f->dsts.front();
        if (!d) {
            terminal(p, &FlowStats::dropped_failure);
            return;
        }
        receiver = entity_ref(EntityKind::endpoint, d);
    }
    Lane& lane = lane_at(me, receiver, LaneMode::windowed, flow);
    lane_admit(me, lane, flow, std::move(p));
}

////////////////////////////////////////////////////////////////////////////////
// Replication, elimination, ordering

void Simulator::prf_process(uint64_t key, Packet p) {
    InstanceRt& i = inst(key);
    AppRt& app = _apps.at(i.app);
    auto sit = app.succ.find(i.nf);
    if (sit == app.succ.end() || sit->second.empty()) {
        forward_to_dests(key, std::move(p));
        return;
    }
    int k = 2;
    if (auto it = i.config.find("k"); it != i.config.end()) k = int(it->second);
    uint64_t next = pick_instance(i.app, sit->second.front(), p.flow, std::nullopt);
    if (!next) {
        terminal(p, &FlowStats::dropped_failure);
        return;
    }
    const InstanceRt& ni = _instances.at(next);
    std::vector<std::vector<LinkId>> paths;
    try {
        paths = fork_routes(i.host, ni.host, k);
    } catch (const SimError&) {
        terminal(p, &FlowStats::dropped_failure);
        return;
    }
    uint16_t count = uint16_t(std::min<size_t>(paths.size(), size_t(k)));
    if (is_data(p) && count > 1) {
        FlowStats& st = stats(p.flow);
        st.duplicated += count - 1;
        st.live += count - 1;
    }
    for (uint16_t r = 0; r < count; r++) {
        Packet c = p;
        c.set_tlv(make_replica_tlv(ReplicaTlv{r, count}));
        transmit(std::move(c), i.host, paths[r], entity_ref(EntityKind::instance, next));
    }
}

void Simulator::pef_process(uint64_t key, Packet p) {
    InstanceRt& i = inst(key);
    if (!i.dedup.accept(p.flow, p.seq)) {
        terminal(p, &FlowStats::absorbed_dup);
        return;
    }
    forward_stage(key, std::move(p));
}

void Simulator::pof_process(uint64_t key, Packet p) {
    InstanceRt& i = inst(key);
    FlowId flow = p.flow;
    SeqNo seq = p.seq;
    Resequencer::Outcome out = i.reseq.push(flow, std::move(p));
    bool emitted = false;
    for (const auto& r : out.release)
        if (r.seq == seq) emitted = true;
    for (const auto& r : out.stale)
        if (r.seq == seq) emitted = true;
    if (!emitted) i.held_since[{flow, seq}] = now();
    pof_emit(key, std::move(out), flow);
}

void Simulator::pof_emit(uint64_t key, Resequencer::Outcome out, FlowId flow) {
    InstanceRt& i = inst(key);
    for (auto& r : out.release) {
        if (auto it = i.held_since.find({flow, r.seq}); it != i.held_since.end()) {
            r.breakdown[size_t(DelayComponent::queuing)] += now() - it->second;
            i.held_since.erase(it);
        }
        forward_stage(key, std::move(r));
    }
    for (auto& r : out.stale) {
        i.held_since.erase({flow, r.seq});
        terminal(r, &FlowStats::dropped_stale);
    }
    if (out.want_timer && !i.reseq_timers.count(flow)) {
        double wait = 0.05;
        if (auto it = i.config.find("timeout"); it != i.config.end()) wait = it->second;
        i.reseq_timers[flow] = _events.schedule(now() + wait, [this, key, flow] {
            InstanceRt& ii = inst(key);
            ii.reseq_timers.erase(flow);
            pof_emit(key, ii.reseq.expire(flow), flow);
        });
    }
}

////////////////////////////////////////////////////////////////////////////////
// Monitor

void Simulator::monitor_process(InstanceRt& i, Packet& p) {
    if (!is_data(p)) return;
    double q = p.breakdown[size_t(DelayComponent::queuing)];
    double r = p.breakdown[size_t(DelayComponent::processing)];
    double seen_q = 0, seen_r = 0;
    for (const Tlv& t : p.tlvs) {
        if (t.kind == TLV_TELEMETRY) {
            TelemetryTlv tv = read_telemetry_tlv(t);
            seen_q += tv.queuing;
            seen_r += tv.processing;
        }
    }
    TelemetryTlv tv;
    tv.pop = i.host;
    tv.timestamp = now();
    tv.queuing = q - seen_q;
    tv.processing = r - seen_r;
    p.tlvs.push_back(make_telemetry_tlv(tv));

    double thr = 0.0;
    if (const Tlv* t = p.find_tlv(TLV_REPORT_THRESHOLD)) thr = read_f64_tlv(*t);
    if (thr <= 0.0)
        if (auto it = i.config.find("threshold"); it != i.config.end()) thr = it->second;
    double acc = now() - p.created_at;
    if (thr > 0.0 && acc > thr && !has_tlv(p, TLV_REPORTED)) {
        TelemetryReportRecord rec;
        rec.flow = p.flow;
        rec.seq = p.seq;
        rec.pop = i.host;
        rec.at = now();
        rec.accumulated_delay = acc;
        rec.threshold = thr;
        _report.telemetry_reports.push_back(rec);
        p.set_tlv(make_u32_tlv(TLV_REPORTED, i.host));
    }
}

////////////////////////////////////////////////////////////////////////////////
// Endpoint arrival

void Simulator::endpoint_arrival(Packet p, EndpointId epid) {
    EndpointRt& ep = _endpoints.at(epid);
    uint64_t me = entity_ref(EntityKind::endpoint, epid);

    if (p.kind == PacketKind::signaling) {
        if (has_tlv(p, TLV_ACK)) {
            _report.acks_delivered++;
            handle_ack(me, std::move(p));
            return;
        }
        if (const Tlv* t = p.find_tlv(TLV_ESCALATE)) {
            _report.control_messages++;
            handle_escalate(me, read_escalate_tlv(*t));
            return;
        }
        if (const Tlv* t = p.find_tlv(TLV_SKIP)) {
            _report.control_messages++;
            EscalateTlv sk = read_escalate_tlv(*t); // same layout
            RecvTracker& tr = ep.recv[sk.flow];
            tr.skip_to(sk.seq);
            if (p.ctx.from_entity) send_ack(me, sk.flow, tr, p.ctx.from_entity);
            return;
        }
        return; // unrecognized control, drop silently
    }

    FlowRt* f = flow_rt(p.flow);
    RecvTracker& tr = ep.recv[p.flow];
    if (p.ctx.seg_sender) ep.ack_to[p.flow] = p.ctx.seg_sender;
    if (const Tlv* t = p.find_tlv(TLV_SKIP))
        tr.skip_to(read_escalate_tlv(*t).seq);
    tr.on_data(p.seq);
    if (const Tlv* t = p.find_tlv(TLV_BUNDLE))
        for (uint64_t q : read_bundle_tlv(*t))
            if (q != p.seq) tr.on_data(q);
    bool want_ack = false;
    if (p.ctx.seg_sender && f) {
        if (entity_kind(p.ctx.seg_sender) == EntityKind::instance)
            want_ack = true; // assistants always need the congestion feedback
        else
            want_ack = f->cfg.transport == TransportMode::e2e ||
                       f->req.reliability != Reliability::none;
    }
    if (want_ack) send_ack(me, p.flow, tr, p.ctx.seg_sender);
    register_delivery(p, ep);
}

void Simulator::register_delivery(Packet& p, EndpointRt& ep) {
    if (!is_data(p)) return;
    FlowStats& s = stats(p.flow);
    FlowRt* f = flow_rt(p.flow);
    s.delivered++;
    s.live--;
    s.bytes_delivered += p.payload_bytes;

    double d = now() - p.created_at;
    if (s.delivered == 1 || d < s.delay_min) s.delay_min = d;
    if (d > s.delay_max) s.delay_max = d;
    s.delay_sum += d;
    for (size_t i = 0; i < kDelayComponentCount; i++) s.breakdown_sums[i] += p.breakdown[i];
    double residual = std::abs(d - p.breakdown_total());
    if (residual > _report.max_breakdown_residual) _report.max_breakdown_residual = residual;

    std::vector<SeqNo> seqs;
    if (const Tlv* t = p.find_tlv(TLV_BUNDLE)) {
        for (uint64_t q : read_bundle_tlv(*t)) seqs.push_back(q);
    } else {
        seqs.push_back(p.seq);
    }
    auto& seen = ep.seen[p.flow];
    for (SeqNo q : seqs) {
        bool fresh = seen.insert(q).second;
        if (!fresh) {
            s.dup_delivered++;
            continue;
        }
        s.delivered_per_dest[ep.id]++;
        auto mf = ep.max_first.find(p.flow);
        if (mf == ep.max_first.end()) {
            ep.max_first[p.flow] = q;
        } else if (q < mf->second) {
            s.out_of_order++;
        } else {
            mf->second = q;
        }
        auto rit = _open_recoveries.find({p.flow, q});
        if (rit != _open_recoveries.end()) {
            for (size_t idx : rit->second) {
                RecoveryRecord& r = _report.recoveries[idx];
                if (r.delivery_time > 0) continue;
                r.delivery_time = now();
                r.total_latency = now() - r.created_at;
                double nominal = 0.0;
                if (f) {
                    auto nit = f->nominal.find(ep.id);
                    if (nit != f->nominal.end()) nominal = nit->second;
                }
                r.excess_latency = r.total_latency - nominal;
            }
            _open_recoveries.erase(rit);
        }
    }
    if (f) roll_windows(p, *f);
}

void Simulator::roll_windows(Packet& p, FlowRt& f) {
    if (_scn.report_window <= 0) return;
    size_t idx = size_t(now() / _scn.report_window);
    if (f.window_bytes.size() <= idx) f.window_bytes.resize(idx + 1, 0);
    f.window_bytes[idx] += p.payload_bytes;
}

////////////////////////////////////////////////////////////////////////////////
// Instance-side control

void Simulator::instance_control(uint64_t key, Packet p) {
    InstanceRt& i = inst(key);
    uint64_t me = entity_ref(EntityKind::instance, key);
    if (has_tlv(p, TLV_ACK)) {
        _report.acks_delivered++;
        handle_ack(me, std::move(p));
        return;
    }
    if (const Tlv* t = p.find_tlv(TLV_ESCALATE)) {
        _report.control_messages++;
        handle_escalate(me, read_escalate_tlv(*t));
        return;
    }
    if (const Tlv* t = p.find_tlv(TLV_SKIP)) {
        _report.control_messages++;
        EscalateTlv sk = read_escalate_tlv(*t);
        RecvTracker& tr = i.recv[sk.flow];
        tr.skip_to(sk.seq);
        if (p.ctx.from_entity) send_ack(me, sk.flow, tr, p.ctx.from_entity);
        // Pass the abandonment on so the final receiver stops waiting too.
        if (auto lit = i.lane_key.find(sk.flow); lit != i.lane_key.end()) {
            auto& lane = i.lanes.at(lit->second);
            send_skip(me, lane, sk.flow, sk.seq);
        }
        return;
    }
}

////////////////////////////////////////////////////////////////////////////////
// Lanes

std::map<uint64_t, Lane>* Simulator::lanes_of(uint64_t sender) {
    switch (entity_kind(sender)) {
    case EntityKind::endpoint: {
        auto it = _endpoints.find(EndpointId(entity_id(sender)));
        return it == _endpoints.end() ? nullptr : &it->second.lanes;
    }
    case EntityKind::instance: {
        auto it = _instances.find(entity_id(sender));
        return it == _instances.end() ? nullptr : &it->second.lanes;
    }
    default:
        return nullptr;
    }
}

PacketCache* Simulator::cache_of(uint64_t sender, Reliability rel) {
    if (rel == Reliability::none) return nullptr;
    switch (entity_kind(sender)) {
    case EntityKind::endpoint:
        return _endpoints.at(EndpointId(entity_id(sender))).buffer.get();
    case EntityKind::instance:
        return _instances.at(entity_id(sender)).cache.get();
    default:
        return nullptr;
    }
}

Lane& Simulator::lane_at(uint64_t sender, uint64_t receiver, LaneMode mode, FlowId flow) {
    auto* lanes = lanes_of(sender);
    Lane& l = (*lanes)[receiver];
    if (l.receiver == 0) {
        l.receiver = receiver;
        l.mode = mode;
        l.trace_cwnd =
            entity_kind(sender) == EntityKind::endpoint && mode == LaneMode::windowed;
        double prop = 0.0, txe = 0.0;
        try {
            PopId from = entity_pop(sender), to = entity_pop(receiver);
            const auto& path = route(from, to);
            prop = _topo.path_delay(path);
            FlowRt* f = flow_rt(flow);
            double bytes = f ? stamped_wire_bytes(*f) : 1500.0;
            for (LinkId lk : path) txe += bytes * 8.0 / _topo.link(lk).bandwidth;
        } catch (const SimError&) {
            // isolated sender; fall back to a conservative guess
            prop = 0.001;
        }
        double static_rtt = std::max(2.0 * (prop + txe), 1e-6);
        // Twice the propagation round trip, floored at a millisecond so
        // intra-pop segments cannot time out ahead of their own service.
        double min_rto = std::max(4.0 * prop, 1e-3);
        l.cca.init(static_rtt, min_rto);
        if (l.trace_cwnd) _report.cwnd_trace[flow].emplace_back(now(), l.cca.cwnd);
    }
    // Remember which lane carries the flow at this sender.
    switch (entity_kind(sender)) {
    case EntityKind::endpoint:
        _endpoints.at(EndpointId(entity_id(sender))).lane_key[flow] = receiver;
        break;
    case EntityKind::instance:
        _instances.at(entity_id(sender)).lane_key[flow] = receiver;
        break;
    default:
        break;
    }
    return l;
}

void Simulator::lane_admit(uint64_t sender, Lane& lane, FlowId flow, Packet p) {
    if (entity_kind(sender) == EntityKind::instance) {
        InstanceRt& i = _instances.at(entity_id(sender));
        size_t cap = 4096;
        if (auto it = i.config.find("pending_packets"); it != i.config.end())
            cap = size_t(it->second);
        if (lane.flows[flow].pending.size() >= cap) {
            terminal(p, &FlowStats::dropped_queue);
            return;
        }
    }
    p.ctx.staged_at = now();
    lane.flows[flow].pending.push_back(std::move(p));
    pump_lane(sender, lane);
}

void Simulator::pump_lane(uint64_t sender, Lane& lane) {
    bool endpoint_sender = entity_kind(sender) == EntityKind::endpoint;
    while (true) {
        if (lane.mode == LaneMode::windowed &&
            lane.in_flight >= uint64_t(std::floor(lane.cca.cwnd)))
            return;
        // Greedy sources refill their own backlog as the window opens.
        if (endpoint_sender && lane.mode == LaneMode::windowed) {
            for (auto& [fid, lf] : lane.flows) {
                if (!lf.pending.empty()) continue;
                FlowRt* f = flow_rt(fid);
                if (!f || !f->greedy) continue;
                double stop =
                    f->cfg.stop > 0 ? std::min(f->cfg.stop, _scn.duration) : _scn.duration;
                if (now() >= stop) continue;
                if (_apps.at(f->app).state != AppLifecycle::active) continue;
                Packet p = make_packet(*f);
                p.ctx.staged_at = now();
                lf.pending.push_back(std::move(p));
            }
        }
        std::vector<FlowId> backlogged;
        for (auto& [fid, lf] : lane.flows)
            if (!lf.pending.empty()) backlogged.push_back(fid);
        if (backlogged.empty()) return;
        auto choice = lane.wrr.pick(backlogged, [&](FlowId fid) {
            FlowRt* f = flow_rt(fid);
            int fallback = f ? f->req.priority : 7;
            return priority_weight(packet_priority(lane.flows[fid].pending.front(), fallback));
        });
        if (!choice) return;
        LaneFlow& lf = lane.flows[*choice];
        Packet p = std::move(lf.pending.front());
        lf.pending.pop_front();
        lane_send(sender, lane, *choice, std::move(p), false);
    }
}

void Simulator::lane_send(uint64_t sender, Lane& lane, FlowId flow, Packet p, bool is_retx) {
    LaneFlow& lf = lane.flows[flow];
    if (p.ctx.staged_at >= 0) {
        p.breakdown[size_t(DelayComponent::queuing)] += now() - p.ctx.staged_at;
        p.ctx.staged_at = -1.0;
    }
    bool fresh = lf.outstanding.insert(p.seq).second;
    if (fresh) lane.in_flight++;
    if (is_retx || !fresh)
        lf.retransmitted.insert(p.seq); // Karn: never sample rtt off a resend
    else
        lf.first_sent[p.seq] = now();
    if (fresh && !is_retx && is_data(p) && entity_kind(sender) == EntityKind::endpoint) {
        // Sources stage in generation order, so a hole here means those
        // seqs died before the lane ever saw them (admission drops). Ride
        // the abandonment on this packet so receivers do not wait for them.
        if (p.seq > lf.stage_next) p.set_tlv(make_skip_tlv(flow, p.seq));
        lf.stage_next = std::max(lf.stage_next, p.seq + 1);
    }

    FlowRt* f = flow_rt(flow);
    Reliability rel = f ? f->req.reliability : Reliability::none;
    // Copies of a fanned-out flow share (flow, seq) and would overwrite
    // each other in the cache; leave them out and let a miss escalate to
    // the upstream copy, which re-fans on the way back down.
    bool cacheable = !(f && f->dsts.size() > 1 && has_tlv(p, TLV_DEST));
    if (rel != Reliability::none && cacheable) {
        if (PacketCache* c = cache_of(sender, rel)) {
            double first = now();
            if (auto it = lf.first_sent.find(p.seq); it != lf.first_sent.end())
                first = it->second;
            c->put(flow, p.seq, p, first, packet_priority(p, f ? f->req.priority : 7));
        }
    }
    bool want_timer = lane.mode == LaneMode::windowed || rel != Reliability::none;
    if (want_timer && !lf.timer_armed) arm_rto(sender, lane, flow);
    lane_output(sender, std::move(p));
}

void Simulator::lane_output(uint64_t sender, Packet p) {
    p.ctx.seg_sender = sender;
    if (entity_kind(sender) == EntityKind::instance) {
        forward_stage(entity_id(sender), std::move(p));
        return;
    }
    // Source endpoint: hand to the chain's first stage.
    EndpointRt& ep = _endpoints.at(EndpointId(entity_id(sender)));
    FlowRt* f = flow_rt(p.flow);
    if (!f) {
        terminal(p, &FlowStats::dropped_failure);
        return;
    }
    AppRt& app = _apps.at(f->app);
    if (app.ingress.empty()) {
        terminal(p, &FlowStats::dropped_failure);
        return;
    }
    uint64_t key = pick_instance(f->app, app.ingress.front(), p.flow, f->src);
    if (!key) {
        terminal(p, &FlowStats::dropped_failure);
        return;
    }
    const InstanceRt& i = _instances.at(key);
    try {
        transmit(std::move(p), ep.pop, route(ep.pop, i.host),
                 entity_ref(EntityKind::instance, key));
    } catch (const SimError&) {
        terminal(p, &FlowStats::dropped_failure);
    }
}

////////////////////////////////////////////////////////////////////////////////
// Acks

void Simulator::send_ack(uint64_t me, FlowId flow, const RecvTracker& tr, uint64_t to) {
    Packet a;
    a.kind = PacketKind::signaling;
    a.flow = flow;
    a.created_at = now();
    AckTlv ack;
    ack.flow = flow;
    ack.cumulative = tr.cum;
    ack.gaps = tr.gaps();
    if (ack.gaps.size() > 16) ack.gaps.resize(16);
    a.tlvs.push_back(make_ack_tlv(ack));
    a.ctx.from_entity = me;
    FlowRt* f = flow_rt(flow);
    if (f) a.ctx.app = f->app;
    _report.acks_sent++;
    try {
        PopId from = entity_pop(me), dest = entity_pop(to);
        transmit(std::move(a), from, route(from, dest), to);
    } catch (const SimError&) {
        // receiver unreachable; the sender's timer will handle it
    }
}

void Simulator::handle_ack(uint64_t me, Packet p) {
    auto* lanes = lanes_of(me);
    if (!lanes) return;
    const Tlv* t = p.find_tlv(TLV_ACK);
    if (!t) return;
    AckTlv ack = read_ack_tlv(*t);
    auto lit = lanes->find(p.ctx.from_entity);
    if (lit == lanes->end()) return;
    Lane& lane = lit->second;
    auto fit = lane.flows.find(ack.flow);
    if (fit == lane.flows.end()) return;
    LaneFlow& lf = fit->second;

    if (ack.cumulative > lf.highest_cum) {
        // Sample RTT from the newest cumulatively acked, never-resent seq.
        SeqNo probe = ack.cumulative - 1;
        if (!lf.retransmitted.count(probe)) {
            if (auto it = lf.first_sent.find(probe); it != lf.first_sent.end())
                lane.cca.on_rtt_sample(now() - it->second);
        }
        bool changed = false;
        for (auto it = lf.outstanding.begin();
             it != lf.outstanding.end() && *it < ack.cumulative;) {
            it = lf.outstanding.erase(it);
            lane.in_flight--;
            if (lane.mode == LaneMode::windowed) {
                lane.cca.on_new_ack();
                changed = true;
            }
        }
        lf.first_sent.erase(lf.first_sent.begin(), lf.first_sent.lower_bound(ack.cumulative));
        lf.retransmitted.erase(lf.retransmitted.begin(),
                               lf.retransmitted.lower_bound(ack.cumulative));
        lf.highest_cum = ack.cumulative;
        lf.dup_acks = 0;
        if (changed) trace_cwnd(lane);
        // Receiver was the final reliability point: delivered means done.
        if (entity_kind(lane.receiver) == EntityKind::endpoint) {
            FlowRt* f = flow_rt(ack.flow);
            if (f && f->req.reliability != Reliability::none)
                if (PacketCache* c = cache_of(me, f->req.reliability))
                    c->prune_below(ack.flow, ack.cumulative);
        }
    } else if (ack.cumulative == lf.highest_cum && !lf.outstanding.empty()) {
        lf.dup_acks++;
        // One fast retransmit per stalled cum: later dups for the same
        // point mean the repair is still in flight, not another loss.
        if (lf.dup_acks == 3 && ack.cumulative != lf.fast_fired_cum) {
            lf.dup_acks = 0;
            lf.fast_fired_cum = ack.cumulative;
            lane.cca.on_triple_dup();
            trace_cwnd(lane);
            retransmit(me, lane, ack.flow, ack.cumulative, "dupack", 0.0);
        }
    }
    disarm_rto(lane, ack.flow);
    if (!lf.outstanding.empty()) arm_rto(me, lane, ack.flow);
    pump_lane(me, lane);
}

////////////////////////////////////////////////////////////////////////////////
// Timers, retransmission, escalation

void Simulator::arm_rto(uint64_t sender, Lane& lane, FlowId flow) {
    LaneFlow& lf = lane.flows[flow];
    uint64_t receiver = lane.receiver;
    lf.rto_timer = _events.schedule(now() + lane.cca.rto, [this, sender, receiver, flow] {
        on_rto(sender, receiver, flow);
    });
    lf.timer_armed = true;
}

void Simulator::disarm_rto(Lane& lane, FlowId flow) {
    LaneFlow& lf = lane.flows[flow];
    if (lf.timer_armed) {
        _events.cancel(lf.rto_timer);
        lf.timer_armed = false;
    }
}

void Simulator::on_rto(uint64_t sender, uint64_t receiver, FlowId flow) {
    auto* lanes = lanes_of(sender);
    if (!lanes) return;
    auto lit = lanes->find(receiver);
    if (lit == lanes->end()) return;
    Lane& lane = lit->second;
    auto fit = lane.flows.find(flow);
    if (fit == lane.flows.end()) return;
    LaneFlow& lf = fit->second;
    lf.timer_armed = false;
    if (lf.outstanding.empty()) return;

    double rto_used = lane.cca.rto;
    lane.cca.on_timeout();
    trace_cwnd(lane);
    SeqNo seq = *lf.outstanding.begin();
    retransmit(sender, lane, flow, seq, "timeout", rto_used);
    if (!lf.outstanding.empty() && !lf.timer_armed) arm_rto(sender, lane, flow);
    pump_lane(sender, lane);
}

void Simulator::abandon_seq(Lane& lane, FlowId flow, SeqNo seq) {
    LaneFlow& lf = lane.flows[flow];
    if (lf.outstanding.erase(seq)) lane.in_flight--;
    lf.first_sent.erase(seq);
    lf.retransmitted.erase(seq);
}

void Simulator::retransmit(uint64_t sender, Lane& lane, FlowId flow, SeqNo seq,
                           const char* detector, double rto_used) {
    FlowRt* f = flow_rt(flow);
    Reliability rel = f ? f->req.reliability : Reliability::none;
    LaneFlow& lf = lane.flows[flow];
    if (!lf.outstanding.count(seq)) return;
    if (rel == Reliability::none) {
        abandon_seq(lane, flow, seq);
        return;
    }
    PacketCache* c = cache_of(sender, rel);
    const PacketCache::Entry* entry = c ? c->get(flow, seq) : nullptr;
    if (!entry) {
        escalate(sender, flow, seq);
        return;
    }
    if (rel == Reliability::partial && f &&
        now() - entry->pkt.created_at > f->req.deadline) {
        // Too old to matter: tell the receiver to move on instead.
        c->erase(flow, seq);
        send_skip(sender, lane, flow, seq + 1);
        abandon_seq(lane, flow, seq);
        return;
    }
    Packet copy = entry->pkt;
    copy.breakdown[size_t(DelayComponent::retransmission)] += now() - entry->first_sent;
    mint(copy, false);
    record_recovery(flow, seq, detector,
                    entity_kind(sender) == EntityKind::endpoint ? "source" : "cache", rto_used,
                    entry->pkt.created_at);
    lf.retransmitted.insert(seq);
    lane_output(sender, std::move(copy));
}

void Simulator::record_recovery(FlowId flow, SeqNo seq, const char* detector,
                                const char* method, double rto_used, double created_at) {
    RecoveryRecord r;
    r.flow = flow;
    r.seq = seq;
    r.detector = detector;
    r.method = method;
    r.detect_time = now();
    r.resend_time = now();
    r.rto_used = rto_used;
    r.created_at = created_at;
    _report.recoveries.push_back(r);
    _open_recoveries[{flow, seq}].push_back(_report.recoveries.size() - 1);
}

void Simulator::send_skip(uint64_t sender, Lane& lane, FlowId flow, SeqNo upto) {
    Packet sk;
    sk.kind = PacketKind::signaling;
    sk.flow = flow;
    sk.created_at = now();
    sk.tlvs.push_back(make_skip_tlv(flow, upto));
    sk.ctx.from_entity = sender;
    FlowRt* f = flow_rt(flow);
    if (f) sk.ctx.app = f->app;
    _report.control_messages++;
    try {
        PopId from = entity_pop(sender), dest = entity_pop(lane.receiver);
        transmit(std::move(sk), from, route(from, dest), lane.receiver);
    } catch (const SimError&) {
    }
}

void Simulator::escalate(uint64_t from, FlowId flow, SeqNo seq) {
    // Ask the previous reliability point to resend from its copy.
    if (entity_kind(from) != EntityKind::instance) return; // sources have no upstream
    InstanceRt& i = _instances.at(entity_id(from));
    auto uit = i.ack_to.find(flow);
    if (uit == i.ack_to.end()) return;
    i.expect_escalated[flow].insert(seq);
    Packet e;
    e.kind = PacketKind::signaling;
    e.flow = flow;
    e.created_at = now();
    e.tlvs.push_back(make_escalate_tlv(EscalateTlv{flow, seq}));
    e.ctx.from_entity = from;
    FlowRt* f = flow_rt(flow);
    if (f) e.ctx.app = f->app;
    _report.control_messages++;
    try {
        PopId mypop = entity_pop(from), dest = entity_pop(uit->second);
        transmit(std::move(e), mypop, route(mypop, dest), uit->second);
    } catch (const SimError&) {
    }
}

void Simulator::handle_escalate(uint64_t at, const EscalateTlv& e) {
    FlowRt* f = flow_rt(e.flow);
    Reliability rel = f ? f->req.reliability : Reliability::none;
    PacketCache* c = cache_of(at, rel);
    const PacketCache::Entry* entry = c ? c->get(e.flow, e.seq) : nullptr;
    if (!entry) {
        if (entity_kind(at) == EntityKind::instance) escalate(at, e.flow, e.seq);
        return;
    }
    Packet copy = entry->pkt;
    copy.breakdown[size_t(DelayComponent::retransmission)] += now() - entry->first_sent;
    mint(copy, false);
    record_recovery(e.flow, e.seq, "gap_report", "escalated", 0.0, entry->pkt.created_at);
    lane_output(at, std::move(copy));
}

void Simulator::trace_cwnd(const Lane& lane) {
    if (!lane.trace_cwnd) return;
    for (const auto& [fid, lf] : lane.flows)
        _report.cwnd_trace[fid].emplace_back(now(), lane.cca.cwnd);
}

////////////////////////////////////////////////////////////////////////////////
// Faults and runtime changes

void Simulator::apply_fault(const ScenarioFault& fv, bool restore) {
    bump_epoch();
    if (fv.is_link) {
        PhysicalLink& l = _topo.link(fv.target);
        l.up = restore;
        if (!restore) {
            for (auto& d : _linkdirs.at(fv.target)) {
                while (auto slot = d.queue->dequeue()) {
                    _report.links[fv.target].dropped_down++;
                    terminal(slot->packet, &FlowStats::dropped_failure);
                }
            }
        } else {
            for (auto& d : _linkdirs.at(fv.target)) link_pump(d);
        }
        _mgr->on_link_change(fv.target, restore);
    } else {
        _topo.pop(fv.target).up = restore;
        _mgr->on_pop_change(fv.target, restore);
    }
}

void Simulator::apply_change(const ScenarioChange& c) {
    auto it = _flows.find(c.flow);
    if (it == _flows.end()) return;
    FlowRt& f = it->second;
    _report.control_messages++;
    for (const auto& [k, v] : c.kv) {
        if (k == "rate") {
            f.rate = std::stod(v);
            f.greedy = f.rate <= 0.0;
            if (f.gen_timer) {
                _events.cancel(f.gen_timer);
                f.gen_timer = 0;
            }
            double stop = f.cfg.stop > 0 ? std::min(f.cfg.stop, _scn.duration) : _scn.duration;
            if (!f.greedy && now() + 1.0 / f.rate < stop) {
                FlowId id = c.flow;
                f.gen_timer = _events.schedule(now() + 1.0 / f.rate,
                                               [this, id] { generator_fire(id); });
            }
        } else if (k == "priority") {
            f.req.priority = std::stoi(v);
        } else if (k == "reliability") {
            if (v == "none")
                f.req.reliability = Reliability::none;
            else if (v == "full")
                f.req.reliability = Reliability::full;
            else
                f.req.reliability = Reliability::partial;
        } else if (k == "deadline") {
            f.req.deadline = std::stod(v);
        } else if (k == "max_delay") {
            f.req.max_e2e_delay = std::stod(v);
        } else if (k == "min_tput") {
            f.req.min_throughput = std::stod(v);
        } else if (k == "max_loss") {
            f.req.max_loss_ratio = std::stod(v);
        } else if (k == "size") {
            f.size = uint32_t(std::stoul(v));
        } else if (k == "admin") {
            f.admin_down = v == "down";
        }
    }
}

////////////////////////////////////////////////////////////////////////////////
// Static expectations

double Simulator::stamped_wire_bytes(const FlowRt& f) const {
    // Header plus the assistant's standard stamps plus payload; mirrors
    // aa_process so静 static estimates line up with live packets.
    size_t n = kFixedHeaderBytes;
    n += tlv_bytes(1);  // priority
    n += tlv_bytes(33); // requirement
    n += tlv_bytes(8);  // timestamp
    if (f.req.reliability != Reliability::full) n += tlv_bytes(8); // retx budget
    return double(n + f.size);
}

void Simulator::compute_nominals(AppRt& app) {
    for (auto& [fid, f] : _flows) {
        if (f.app != app.idx) continue;
        for (EndpointId dest : f.dsts) {
            double pre_bytes = double(kFixedHeaderBytes + f.size);
            double post_bytes = stamped_wire_bytes(f);
            double total = 0.0;
            PopId at = _topo.endpoint_pop(f.src);
            bool stamped = false;
            std::string nf = app.ingress.empty() ? "" : app.ingress.front();
            std::set<std::string> seen;
            bool broken = false;
            while (!nf.empty() && seen.insert(nf).second) {
                const NfSpec* spec = app.spec.find_nf(nf);
                bool is_egress =
                    std::find(app.egress.begin(), app.egress.end(), nf) != app.egress.end();
                std::optional<EndpointId> anchor;
                if (nf == app.ingress.front()) anchor = f.src;
                if (is_egress) anchor = dest;
                uint64_t key = pick_instance(app.idx, nf, fid, anchor);
                if (!key) {
                    broken = true;
                    break;
                }
                const InstanceRt& i = _instances.at(key);
                try {
                    const auto& path = route(at, i.host);
                    double bytes = stamped ? post_bytes : pre_bytes;
                    for (LinkId lk : path) {
                        const PhysicalLink& l = _topo.link(lk);
                        total += l.propagation_delay + bytes * 8.0 / l.bandwidth;
                    }
                } catch (const SimError&) {
                    broken = true;
                    break;
                }
                at = i.host;
                total += i.proc_delay;
                if (spec && spec->kind == NfKind::application_assistant && !stamped)
                    stamped = true;
                auto sit = app.succ.find(nf);
                nf = (sit == app.succ.end() || sit->second.empty()) ? "" : sit->second.front();
            }
            if (broken) continue;
            try {
                const auto& path = route(at, _topo.endpoint_pop(dest));
                for (LinkId lk : path) {
                    const PhysicalLink& l = _topo.link(lk);
                    total += l.propagation_delay + post_bytes * 8.0 / l.bandwidth;
                }
            } catch (const SimError&) {
                continue;
            }
            f.nominal[dest] = total;
        }
    }
}

} // namespace chainsim
