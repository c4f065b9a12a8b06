#include "chainsim/topology.hpp"

#include <algorithm>
#include <limits>
#include <queue>
#include <set>

namespace chainsim {

Pop& PhysicalTopology::pop(PopId id) {
    auto it = pops.find(id);
    if (it == pops.end()) throw UnknownTargetError("no pop " + std::to_string(id));
    return it->second;
}
const Pop& PhysicalTopology::pop(PopId id) const {
    auto it = pops.find(id);
    if (it == pops.end()) throw UnknownTargetError("no pop " + std::to_string(id));
    return it->second;
}
PhysicalLink& PhysicalTopology::link(LinkId id) {
    auto it = links.find(id);
    if (it == links.end()) throw UnknownTargetError("no link " + std::to_string(id));
    return it->second;
}
const PhysicalLink& PhysicalTopology::link(LinkId id) const {
    auto it = links.find(id);
    if (it == links.end()) throw UnknownTargetError("no link " + std::to_string(id));
    return it->second;
}

void PhysicalTopology::add_pop(Pop p) {
    if (pops.count(p.id)) throw InvalidSpecError("duplicate pop " + std::to_string(p.id));
    if (!p.capacity.non_negative()) throw InvalidSpecError("negative capacity on pop " + std::to_string(p.id));
    p.residual = p.capacity;
    pops.emplace(p.id, std::move(p));
}

void PhysicalTopology::add_link(PhysicalLink l) {
    if (links.count(l.id)) throw InvalidSpecError("duplicate link " + std::to_string(l.id));
    if (!pops.count(l.a) || !pops.count(l.b))
        throw InvalidSpecError("link " + std::to_string(l.id) + " references missing pop");
    if (l.bandwidth < 0.0 || l.propagation_delay < 0.0)
        throw InvalidSpecError("negative link parameter on link " + std::to_string(l.id));
    if (l.loss_probability < 0.0 || l.loss_probability > 1.0)
        throw InvalidSpecError("loss probability out of range on link " + std::to_string(l.id));
    l.residual_bandwidth = l.bandwidth;
    links.emplace(l.id, std::move(l));
}

void PhysicalTopology::add_endpoint(EndpointId ep, PopId at) {
    if (endpoints.count(ep)) throw InvalidSpecError("duplicate endpoint " + std::to_string(ep));
    pop(at);
    endpoints.emplace(ep, at);
}

PopId PhysicalTopology::endpoint_pop(EndpointId ep) const {
    auto it = endpoints.find(ep);
    if (it == endpoints.end()) throw UnknownTargetError("no endpoint " + std::to_string(ep));
    return it->second;
}

std::vector<LinkId> PhysicalTopology::links_at(PopId p) const {
    std::vector<LinkId> out;
    for (const auto& [id, l] : links)
        if (l.touches(p)) out.push_back(id);
    return out;
}

double PhysicalTopology::path_delay(const std::vector<LinkId>& path) const {
    double d = 0.0;
    for (LinkId id : path) d += link(id).propagation_delay;
    return d;
}

double PhysicalTopology::path_bandwidth(const std::vector<LinkId>& path) const {
    double bw = std::numeric_limits<double>::infinity();
    for (LinkId id : path) bw = std::min(bw, link(id).bandwidth);
    return path.empty() ? 0.0 : bw;
}

PopId PhysicalTopology::path_end(const std::vector<LinkId>& path, PopId from) const {
    PopId at = from;
    for (LinkId id : path) at = link(id).other(at);
    return at;
}

namespace {

// Dijkstra with (cost, pop id) keys; among equal-cost relaxations the lower
// link id wins so repeated runs return identical paths.
std::vector<LinkId> dijkstra(const PhysicalTopology& topo, PopId from, PopId to,
                             PathMetric metric, const std::set<LinkId>& banned) {
    struct Entry {
        double cost;
        PopId pop;
        bool operator>(const Entry& o) const {
            return cost != o.cost ? cost > o.cost : pop > o.pop;
        }
    };
    std::map<PopId, double> dist;
    std::map<PopId, LinkId> via;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> pq;
    dist[from] = 0.0;
    pq.push({0.0, from});
    while (!pq.empty()) {
        auto [cost, at] = pq.top();
        pq.pop();
        if (cost > dist[at]) continue;
        if (at == to) break;
        for (const auto& [lid, l] : topo.links) {
            if (!l.up || !l.touches(at) || banned.count(lid)) continue;
            if (!topo.pop(l.other(at)).up && l.other(at) != to) continue;
            double w = metric == PathMetric::delay ? l.propagation_delay : 1.0;
            PopId next = l.other(at);
            double ncost = cost + w;
            auto it = dist.find(next);
            if (it == dist.end() || ncost < it->second) {
                dist[next] = ncost;
                via[next] = lid;
                pq.push({ncost, next});
            }
        }
    }
    if (from == to) return {};
    if (!dist.count(to))
        throw NoPathError("no path " + std::to_string(from) + " -> " + std::to_string(to));
    std::vector<LinkId> path;
    PopId at = to;
    while (at != from) {
        LinkId lid = via.at(at);
        path.push_back(lid);
        at = topo.link(lid).other(at);
    }
    std::reverse(path.begin(), path.end());
    return path;
}

} // namespace

std::vector<LinkId> shortest_path(const PhysicalTopology& topo, PopId from, PopId to,
                                  PathMetric metric) {
    topo.pop(from);
    topo.pop(to);
    return dijkstra(topo, from, to, metric, {});
}

std::vector<std::vector<LinkId>> disjoint_paths(const PhysicalTopology& topo, PopId from,
                                                PopId to, int k, PathMetric metric) {
    if (k < 1) throw InvalidSpecError("disjoint_paths needs k >= 1");
    topo.pop(from);
    topo.pop(to);
    if (from == to) return {{}};
    std::vector<std::vector<LinkId>> out;
    std::set<LinkId> used;
    for (int i = 0; i < k; i++) {
        std::vector<LinkId> p;
        try {
            p = dijkstra(topo, from, to, metric, used);
        } catch (const NoPathError&) {
            break;
        }
        for (LinkId lid : p) used.insert(lid);
        out.push_back(std::move(p));
    }
    if (out.empty())
        throw NoPathError("no path " + std::to_string(from) + " -> " + std::to_string(to));
    return out;
}

} // namespace chainsim
