#include "chainsim/chain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace chainsim {

const char* nf_kind_name(NfKind k) {
    switch (k) {
    case NfKind::application_assistant: return "application_assistant";
    case NfKind::transport_assistant: return "transport_assistant";
    case NfKind::encoder: return "encoder";
    case NfKind::cropper: return "cropper";
    case NfKind::prf: return "prf";
    case NfKind::pef: return "pef";
    case NfKind::pof: return "pof";
    case NfKind::forwarder: return "forwarder";
    case NfKind::monitor: return "monitor";
    case NfKind::custom: return "custom";
    }
    return "?";
}

std::optional<NfKind> nf_kind_from_name(const std::string& s) {
    for (int k = 0; k <= int(NfKind::custom); k++)
        if (s == nf_kind_name(NfKind(k))) return NfKind(k);
    return std::nullopt;
}

////////////////////////////////////////////////////////////////////////////////
// ChainSpec

const NfSpec* ChainSpec::find_nf(const std::string& n) const {
    for (const NfSpec& f : nfs)
        if (f.name == n) return &f;
    return nullptr;
}

int ChainSpec::nf_index(const std::string& n) const {
    for (size_t i = 0; i < nfs.size(); i++)
        if (nfs[i].name == n) return int(i);
    return -1;
}

std::vector<std::string> ChainSpec::ingress_nfs() const {
    std::vector<std::string> out;
    for (const NfSpec& f : nfs) {
        bool has_in = false;
        for (const ChainVlink& v : vlinks)
            if (v.to == f.name) has_in = true;
        if (!has_in) out.push_back(f.name);
    }
    return out;
}

std::vector<std::string> ChainSpec::egress_nfs() const {
    std::vector<std::string> out;
    for (const NfSpec& f : nfs) {
        bool has_out = false;
        for (const ChainVlink& v : vlinks)
            if (v.from == f.name) has_out = true;
        if (!has_out) out.push_back(f.name);
    }
    return out;
}

void ChainSpec::check() const {
    if (nfs.empty()) throw InvalidSpecError("chain " + name + ": no functions");
    if (sources.empty() || destinations.empty())
        throw InvalidSpecError("chain " + name + ": needs at least one source and destination");
    if (demand <= 0.0) throw InvalidSpecError("chain " + name + ": demand must be positive");
    std::set<std::string> names;
    for (const NfSpec& f : nfs) {
        if (!names.insert(f.name).second)
            throw InvalidSpecError("chain " + name + ": duplicate function " + f.name);
        if (f.per_instance_capacity <= 0.0)
            throw InvalidSpecError("chain " + name + ": function " + f.name +
                                   " needs positive capacity");
        if (!f.per_instance_resources.non_negative() || f.per_packet_processing_delay < 0.0)
            throw InvalidSpecError("chain " + name + ": function " + f.name +
                                   " has negative parameters");
    }
    for (const ChainVlink& v : vlinks) {
        if (!find_nf(v.from))
            throw InvalidSpecError("chain " + name + ": vlink from unknown function " + v.from);
        if (!find_nf(v.to))
            throw InvalidSpecError("chain " + name + ": vlink to unknown function " + v.to);
        if (v.from == v.to)
            throw InvalidSpecError("chain " + name + ": self vlink on " + v.from);
        if (v.bandwidth <= 0.0)
            throw InvalidSpecError("chain " + name + ": vlink " + v.from + "->" + v.to +
                                   " needs positive bandwidth");
    }
    if (nfs.size() > 1 && vlinks.empty())
        throw InvalidSpecError("chain " + name + ": functions are not connected");

    // Kahn toposort doubles as the cycle check.
    std::map<std::string, int> indeg;
    for (const NfSpec& f : nfs) indeg[f.name] = 0;
    for (const ChainVlink& v : vlinks) indeg[v.to]++;
    std::vector<std::string> order;
    std::set<std::string> ready;
    for (auto& [n, d] : indeg)
        if (d == 0) ready.insert(n);
    while (!ready.empty()) {
        std::string n = *ready.begin();
        ready.erase(ready.begin());
        order.push_back(n);
        for (const ChainVlink& v : vlinks)
            if (v.from == n && --indeg[v.to] == 0) ready.insert(v.to);
    }
    if (order.size() != nfs.size())
        throw InvalidSpecError("chain " + name + ": vlinks form a cycle");

    // Assistants guard both edges of the chain so every endpoint talks to one.
    for (const std::string& n : ingress_nfs())
        if (find_nf(n)->kind != NfKind::application_assistant)
            throw InvalidSpecError("chain " + name + ": ingress function " + n +
                                   " must be an application_assistant");
    for (const std::string& n : egress_nfs())
        if (find_nf(n)->kind != NfKind::application_assistant)
            throw InvalidSpecError("chain " + name + ": egress function " + n +
                                   " must be an application_assistant");

    // Every egress must be reachable from every ingress, else some
    // source/destination pair has no chain path.
    for (const std::string& in : ingress_nfs()) {
        std::set<std::string> seen{in};
        std::vector<std::string> stack{in};
        while (!stack.empty()) {
            std::string at = stack.back();
            stack.pop_back();
            for (const ChainVlink& v : vlinks)
                if (v.from == at && seen.insert(v.to).second) stack.push_back(v.to);
        }
        for (const std::string& out : egress_nfs())
            if (!seen.count(out))
                throw InvalidSpecError("chain " + name + ": " + out + " unreachable from " + in);
    }
}

////////////////////////////////////////////////////////////////////////////////
// VirtualTopology

const VirtualInstance* VirtualTopology::instance(InstanceId id) const {
    for (const VirtualInstance& i : instances)
        if (i.id == id) return &i;
    return nullptr;
}

std::vector<InstanceId> VirtualTopology::instances_of(const std::string& nf) const {
    std::vector<InstanceId> out;
    for (const VirtualInstance& i : instances)
        if (i.nf == nf) out.push_back(i.id);
    return out;
}

int VirtualTopology::count_of(const std::string& nf) const {
    return int(instances_of(nf).size());
}

VirtualTopology translate(const ChainSpec& spec) {
    spec.check();
    VirtualTopology vt;
    std::map<std::string, std::vector<InstanceId>> by_nf;
    InstanceId next = 1;
    auto ingress = spec.ingress_nfs();
    auto egress = spec.egress_nfs();
    for (const NfSpec& f : spec.nfs) {
        int count = int(std::ceil(spec.demand / f.per_instance_capacity));
        if (count < 1) count = 1;
        bool is_ingress = std::find(ingress.begin(), ingress.end(), f.name) != ingress.end();
        bool is_egress = std::find(egress.begin(), egress.end(), f.name) != egress.end();
        for (int i = 0; i < count; i++) {
            VirtualInstance inst;
            inst.id = next++;
            inst.nf = f.name;
            inst.resources = f.per_instance_resources;
            // Edge assistants anchor to the endpoints they will front,
            // distributed round-robin across the instances.
            if (is_ingress)
                for (size_t s = 0; s < spec.sources.size(); s++)
                    if (int(s % count) == i) inst.anchors.push_back(spec.sources[s]);
            if (is_egress)
                for (size_t d = 0; d < spec.destinations.size(); d++)
                    if (int(d % count) == i) inst.anchors.push_back(spec.destinations[d]);
            by_nf[f.name].push_back(inst.id);
            vt.instances.push_back(std::move(inst));
        }
    }
    for (const ChainVlink& v : spec.vlinks) {
        const auto& from = by_nf[v.from];
        const auto& to = by_nf[v.to];
        double share = v.bandwidth / double(from.size() * to.size());
        for (InstanceId a : from)
            for (InstanceId b : to)
                vt.vlinks.push_back(VirtualVlink{a, b, share, v.max_delay});
    }
    return vt;
}

////////////////////////////////////////////////////////////////////////////////
// Mapping

std::optional<PopId> choose_pop(const PhysicalTopology& topo, const ResourceVector& need,
                                const std::vector<PopId>& neighbor_pops, MapObjective objective,
                                const std::map<PopId, ResourceVector>& pending) {
    std::optional<PopId> best;
    double best_cost = std::numeric_limits<double>::infinity();
    for (const auto& [pid, pop] : topo.pops) {
        if (!pop.up) continue;
        ResourceVector avail = pop.residual;
        if (auto it = pending.find(pid); it != pending.end()) avail -= it->second;
        if (!need.fits_into(avail)) continue;
        double cost = 0.0;
        if (objective == MapObjective::min_delay) {
            bool reachable = true;
            for (PopId n : neighbor_pops) {
                try {
                    cost += topo.path_delay(shortest_path(topo, pid, n, PathMetric::delay));
                } catch (const NoPathError&) {
                    reachable = false;
                    break;
                }
            }
            if (!reachable) continue;
        } else {
            // Highest component utilization after placing here.
            ResourceVector used = pop.capacity - avail + need;
            auto frac = [](double u, double c) { return c > 0.0 ? u / c : 0.0; };
            cost = std::max({frac(used.cpu, pop.capacity.cpu), frac(used.mem, pop.capacity.mem),
                             frac(used.disk, pop.capacity.disk)});
        }
        if (cost < best_cost) {
            best_cost = cost;
            best = pid; // map order gives the lowest-id tie-break
        }
    }
    return best;
}

namespace {

// Delay-shortest route that still has `bw` spare on every hop, given
// tentative reservations from vlinks routed earlier in this plan.
std::vector<LinkId> route_vlink(const PhysicalTopology& topo, PopId from, PopId to, double bw,
                                const std::map<LinkId, double>& pending) {
    if (from == to) return {};
    PhysicalTopology view = topo;
    for (auto& [lid, l] : view.links) {
        double spare = l.residual_bandwidth;
        if (auto it = pending.find(lid); it != pending.end()) spare -= it->second;
        if (spare < bw) l.up = false;
    }
    return shortest_path(view, from, to, PathMetric::delay);
}

} // namespace

EmbeddingPlan map(const VirtualTopology& vt, PhysicalTopology& topo, MapObjective objective) {
    EmbeddingPlan plan;
    plan.vt = vt;

    // Neighbor lookup for the min_delay objective.
    std::map<InstanceId, std::vector<InstanceId>> neighbors;
    for (const VirtualVlink& v : vt.vlinks) {
        neighbors[v.from].push_back(v.to);
        neighbors[v.to].push_back(v.from);
    }

    // Biggest footprint first; id breaks ties so order is reproducible.
    std::vector<const VirtualInstance*> order;
    for (const VirtualInstance& i : vt.instances) order.push_back(&i);
    std::sort(order.begin(), order.end(), [](const VirtualInstance* a, const VirtualInstance* b) {
        double ma = a->resources.magnitude(), mb = b->resources.magnitude();
        return ma != mb ? ma > mb : a->id < b->id;
    });

    for (const VirtualInstance* inst : order) {
        std::vector<PopId> neighbor_pops;
        for (InstanceId n : neighbors[inst->id])
            if (auto it = plan.placement.find(n); it != plan.placement.end())
                neighbor_pops.push_back(it->second);
        for (EndpointId ep : inst->anchors) {
            if (auto it = topo.endpoints.find(ep); it != topo.endpoints.end())
                neighbor_pops.push_back(it->second);
        }
        auto pop = choose_pop(topo, inst->resources, neighbor_pops, objective, plan.reserved_pop);
        if (!pop)
            throw InsufficientResources("no pop fits instance " + std::to_string(inst->id) +
                                        " (" + inst->nf + ")");
        plan.placement[inst->id] = *pop;
        plan.reserved_pop[*pop] += inst->resources;
    }

    for (size_t i = 0; i < vt.vlinks.size(); i++) {
        const VirtualVlink& v = vt.vlinks[i];
        PopId from = plan.placement.at(v.from);
        PopId to = plan.placement.at(v.to);
        std::vector<LinkId> path;
        try {
            path = route_vlink(topo, from, to, v.bandwidth, plan.reserved_link);
        } catch (const NoPathError&) {
            throw InsufficientResources("no feasible route for vlink " + std::to_string(v.from) +
                                        "->" + std::to_string(v.to));
        }
        double d = topo.path_delay(path);
        if (v.max_delay > 0.0 && d > v.max_delay)
            throw InsufficientResources("vlink " + std::to_string(v.from) + "->" +
                                        std::to_string(v.to) + " delay " + std::to_string(d) +
                                        " exceeds bound " + std::to_string(v.max_delay));
        for (LinkId lid : path) plan.reserved_link[lid] += v.bandwidth;
        plan.routing[i] = std::move(path);
    }

    commit(plan, topo);
    return plan;
}

void commit(EmbeddingPlan& plan, PhysicalTopology& topo) {
    if (plan.committed) throw InvalidSpecError("plan already committed");
    for (const auto& [pid, res] : plan.reserved_pop) {
        const Pop& p = topo.pop(pid);
        if (!res.fits_into(p.residual))
            throw InsufficientResources("pop " + std::to_string(pid) + " cannot hold reservation");
    }
    for (const auto& [lid, bw] : plan.reserved_link) {
        if (topo.link(lid).residual_bandwidth < bw)
            throw InsufficientResources("link " + std::to_string(lid) +
                                        " cannot hold bandwidth reservation");
    }
    // All checks passed; now mutate.
    for (const auto& [pid, res] : plan.reserved_pop) topo.pop(pid).residual -= res;
    for (const auto& [lid, bw] : plan.reserved_link) topo.link(lid).residual_bandwidth -= bw;
    plan.committed = true;
}

void release(EmbeddingPlan& plan, PhysicalTopology& topo) {
    if (!plan.committed) throw NotCommittedError("plan is not committed");
    for (const auto& [pid, res] : plan.reserved_pop) topo.pop(pid).residual += res;
    for (const auto& [lid, bw] : plan.reserved_link) topo.link(lid).residual_bandwidth += bw;
    plan.committed = false;
}

////////////////////////////////////////////////////////////////////////////////
// Validation

double static_worst_case_delay(const EmbeddingPlan& plan, const PhysicalTopology& topo,
                               const ChainSpec& spec) {
    // Longest-path DP over the instance DAG in vlink dependency order.
    auto hop_cost = [&](const std::vector<LinkId>& path) {
        double d = 0.0;
        for (LinkId lid : path) {
            const PhysicalLink& l = topo.link(lid);
            d += l.propagation_delay + double(spec.max_packet_bytes) * 8.0 / l.bandwidth;
        }
        return d;
    };
    auto proc_of = [&](InstanceId id) {
        const VirtualInstance* vi = plan.vt.instance(id);
        const NfSpec* nf = vi ? spec.find_nf(vi->nf) : nullptr;
        double d = nf ? nf->per_packet_processing_delay : 0.0;
        if (auto it = plan.placement.find(id); it != plan.placement.end() && nf)
            d += topo.pop(it->second).processing_delay(nf_kind_name(nf->kind));
        return d;
    };

    // Start costs: worst attachment leg from any source endpoint, when known.
    std::map<InstanceId, double> best; // worst cumulative delay up to and including the instance
    auto ingress = spec.ingress_nfs();
    for (const VirtualInstance& inst : plan.vt.instances) {
        if (std::find(ingress.begin(), ingress.end(), inst.nf) == ingress.end()) continue;
        double leg = 0.0;
        auto placed = plan.placement.find(inst.id);
        if (placed != plan.placement.end()) {
            for (EndpointId src : spec.sources) {
                auto it = topo.endpoints.find(src);
                if (it == topo.endpoints.end()) continue;
                try {
                    leg = std::max(leg, hop_cost(shortest_path(topo, it->second, placed->second,
                                                               PathMetric::delay)));
                } catch (const NoPathError&) {
                }
            }
        }
        best[inst.id] = leg + proc_of(inst.id);
    }

    // Relax in topological order; vlink list order from translate() is
    // already stage-ordered, so a few passes settle it.
    bool changed = true;
    while (changed) {
        changed = false;
        for (size_t i = 0; i < plan.vt.vlinks.size(); i++) {
            const VirtualVlink& v = plan.vt.vlinks[i];
            auto from = best.find(v.from);
            if (from == best.end()) continue;
            auto route = plan.routing.find(i);
            double cost = from->second + (route != plan.routing.end() ? hop_cost(route->second) : 0.0) +
                          proc_of(v.to);
            auto to = best.find(v.to);
            if (to == best.end() || cost > to->second + 1e-15) {
                best[v.to] = cost;
                changed = true;
            }
        }
    }

    double worst = 0.0;
    auto egress = spec.egress_nfs();
    for (const VirtualInstance& inst : plan.vt.instances) {
        if (std::find(egress.begin(), egress.end(), inst.nf) == egress.end()) continue;
        auto it = best.find(inst.id);
        if (it == best.end()) continue;
        double leg = 0.0;
        auto placed = plan.placement.find(inst.id);
        if (placed != plan.placement.end()) {
            for (EndpointId dst : spec.destinations) {
                auto epit = topo.endpoints.find(dst);
                if (epit == topo.endpoints.end()) continue;
                try {
                    leg = std::max(leg, hop_cost(shortest_path(topo, placed->second, epit->second,
                                                               PathMetric::delay)));
                } catch (const NoPathError&) {
                }
            }
        }
        worst = std::max(worst, it->second + leg);
    }
    return worst;
}

std::vector<Violation> validate(const EmbeddingPlan& plan, const PhysicalTopology& topo,
                                const ChainSpec& spec) {
    std::vector<Violation> out;

    for (const VirtualInstance& inst : plan.vt.instances) {
        if (!plan.placement.count(inst.id))
            out.push_back({"placement", "instance " + std::to_string(inst.id),
                           "instance not placed", 0.0});
    }

    // Capacity: this plan's reservations must fit what the substrate can
    // offer alongside everything else currently committed. A committed
    // plan's own reservation is already inside residual, so add it back.
    for (const auto& [pid, res] : plan.reserved_pop) {
        const Pop& p = topo.pop(pid);
        ResourceVector avail = p.residual;
        if (plan.committed) avail += res;
        if (!res.fits_into(avail)) {
            ResourceVector over = res - avail;
            out.push_back({"capacity", "pop " + std::to_string(pid),
                           "reservation exceeds available resources",
                           -std::max({over.cpu, over.mem, over.disk})});
        }
    }
    for (const auto& [lid, bw] : plan.reserved_link) {
        double avail = topo.link(lid).residual_bandwidth + (plan.committed ? bw : 0.0);
        if (bw > avail)
            out.push_back({"bandwidth", "link " + std::to_string(lid),
                           "reserved bandwidth exceeds available", avail - bw});
    }

    for (size_t i = 0; i < plan.vt.vlinks.size(); i++) {
        const VirtualVlink& v = plan.vt.vlinks[i];
        auto from = plan.placement.find(v.from);
        auto to = plan.placement.find(v.to);
        if (from == plan.placement.end() || to == plan.placement.end()) continue;
        auto route = plan.routing.find(i);
        if (route == plan.routing.end()) {
            if (from->second != to->second)
                out.push_back({"connectivity",
                               "vlink " + std::to_string(v.from) + "->" + std::to_string(v.to),
                               "no route assigned", 0.0});
            continue;
        }
        if (topo.path_end(route->second, from->second) != to->second)
            out.push_back({"connectivity",
                           "vlink " + std::to_string(v.from) + "->" + std::to_string(v.to),
                           "route does not connect the hosting pops", 0.0});
    }

    if (spec.e2e_delay_bound > 0.0) {
        double worst = static_worst_case_delay(plan, topo, spec);
        if (worst > spec.e2e_delay_bound)
            out.push_back({"delay", "chain " + spec.name,
                           "static worst-case delay " + std::to_string(worst) +
                               " exceeds bound " + std::to_string(spec.e2e_delay_bound),
                           spec.e2e_delay_bound - worst});
    }
    return out;
}

nlohmann::ordered_json EmbeddingPlan::to_json() const {
    nlohmann::ordered_json j;
    j["committed"] = committed;
    nlohmann::ordered_json inst = nlohmann::ordered_json::object();
    for (const VirtualInstance& i : vt.instances) {
        nlohmann::ordered_json e;
        e["nf"] = i.nf;
        auto it = placement.find(i.id);
        if (it != placement.end()) e["pop"] = it->second;
        inst[std::to_string(i.id)] = e;
    }
    j["instances"] = inst;
    nlohmann::ordered_json routes = nlohmann::ordered_json::array();
    for (size_t i = 0; i < vt.vlinks.size(); i++) {
        nlohmann::ordered_json e;
        e["from"] = vt.vlinks[i].from;
        e["to"] = vt.vlinks[i].to;
        e["bandwidth"] = vt.vlinks[i].bandwidth;
        auto it = routing.find(i);
        e["path"] = it != routing.end() ? nlohmann::ordered_json(it->second)
                                        : nlohmann::ordered_json::array();
        routes.push_back(e);
    }
    j["routes"] = routes;
    return j;
}

} // namespace chainsim
