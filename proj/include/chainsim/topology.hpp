#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "chainsim/resources.hpp"
#include "chainsim/types.hpp"

namespace chainsim {

// Compute-equipped point of presence. Residual shrinks as function
// instances are placed and grows back when an embedding is released.
struct Pop {
    PopId id = 0;
    ResourceVector capacity;
    ResourceVector residual;
    // Per-packet processing delay by function kind name, seconds.
    std::map<std::string, double> processing_model;
    bool up = true;

    double processing_delay(const std::string& kind) const {
        auto it = processing_model.find(kind);
        return it == processing_model.end() ? 0.0 : it->second;
    }
};

struct PhysicalLink {
    LinkId id = 0;
    PopId a = 0;
    PopId b = 0;
    double bandwidth = 0.0;          // bits/s
    double propagation_delay = 0.0;  // s
    double residual_bandwidth = 0.0; // bits/s
    double loss_probability = 0.0;
    bool up = true;

    PopId other(PopId p) const { return p == a ? b : a; }
    bool touches(PopId p) const { return p == a || p == b; }
};

enum class PathMetric { delay, hops };

struct PhysicalTopology {
    std::map<PopId, Pop> pops;
    std::map<LinkId, PhysicalLink> links;
    // Hosts hang off pops; traffic enters and leaves the substrate here.
    std::map<EndpointId, PopId> endpoints;

    Pop& pop(PopId id);
    const Pop& pop(PopId id) const;
    PhysicalLink& link(LinkId id);
    const PhysicalLink& link(LinkId id) const;

    void add_pop(Pop p);
    void add_link(PhysicalLink l);
    void add_endpoint(EndpointId ep, PopId at);
    PopId endpoint_pop(EndpointId ep) const;

    std::vector<LinkId> links_at(PopId p) const;

    // Total propagation delay along a path of link ids.
    double path_delay(const std::vector<LinkId>& path) const;
    // Smallest link bandwidth along a path.
    double path_bandwidth(const std::vector<LinkId>& path) const;
    // End POP of a path that starts at `from`.
    PopId path_end(const std::vector<LinkId>& path, PopId from) const;
};

// Minimal path over up links under the metric; empty when from == to.
// Ties broken toward lower link ids so results are stable.
std::vector<LinkId> shortest_path(const PhysicalTopology& topo, PopId from, PopId to,
                                  PathMetric metric = PathMetric::delay);

// Up to k pairwise link-disjoint paths, shortest first. Greedy peeling:
// repeatedly take the shortest path and remove its links. Throws NoPathError
// when not even one path exists.
std::vector<std::vector<LinkId>> disjoint_paths(const PhysicalTopology& topo, PopId from,
                                                PopId to, int k,
                                                PathMetric metric = PathMetric::delay);

} // namespace chainsim
