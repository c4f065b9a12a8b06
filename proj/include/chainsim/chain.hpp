#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "chainsim/packet.hpp"
#include "chainsim/resources.hpp"
#include "chainsim/topology.hpp"
#include "chainsim/types.hpp"

namespace chainsim {

enum class NfKind {
    application_assistant,
    transport_assistant,
    encoder,
    cropper,
    prf,
    pef,
    pof,
    forwarder,
    monitor,
    custom,
};

const char* nf_kind_name(NfKind k);
std::optional<NfKind> nf_kind_from_name(const std::string& s);

struct NfSpec {
    std::string name;
    NfKind kind = NfKind::forwarder;
    double per_instance_capacity = 0.0; // packets/s
    ResourceVector per_instance_resources;
    double per_packet_processing_delay = 0.0; // s
    // Free-form per-kind parameters (compression ratio, replica count,
    // reorder timeout, cache budget, interest map, ...).
    std::map<std::string, double> config;
};

struct ChainVlink {
    std::string from;
    std::string to;
    double bandwidth = 0.0; // bits/s, aggregate across instance pairs
    double max_delay = 0.0; // s, 0 = unconstrained
};

struct ChainSpec {
    std::string name;
    AppId app;
    std::vector<EndpointId> sources;
    std::vector<EndpointId> destinations;
    std::vector<NfSpec> nfs; // declaration order defines stage order
    std::vector<ChainVlink> vlinks;
    double e2e_delay_bound = 0.0; // s, 0 = unbounded
    double demand = 0.0;          // packets/s aggregate
    uint32_t max_packet_bytes = 1500;

    const NfSpec* find_nf(const std::string& name) const;
    int nf_index(const std::string& name) const; // -1 when absent
    // Structural validation: unique names, resolvable vlinks, acyclic DAG,
    // ingress/egress stages are application assistants, every egress
    // reachable from every ingress.
    void check() const;
    std::vector<std::string> ingress_nfs() const; // no incoming vlink
    std::vector<std::string> egress_nfs() const;  // no outgoing vlink
};

struct VirtualInstance {
    InstanceId id = 0;
    std::string nf; // NfSpec name within the chain
    ResourceVector resources;
    // Endpoints this instance should sit near (assistants at the chain
    // edges); used by the min_delay placement objective.
    std::vector<EndpointId> anchors;
};

struct VirtualVlink {
    InstanceId from = 0;
    InstanceId to = 0;
    double bandwidth = 0.0; // bits/s for this instance pair
    double max_delay = 0.0;
};

struct VirtualTopology {
    std::vector<VirtualInstance> instances;
    std::vector<VirtualVlink> vlinks;

    const VirtualInstance* instance(InstanceId id) const;
    std::vector<InstanceId> instances_of(const std::string& nf) const;
    int count_of(const std::string& nf) const;
};

struct EmbeddingPlan {
    // The plan keeps its own copy of the virtual topology so placement and
    // routing keys stay interpretable on their own.
    VirtualTopology vt;
    std::map<InstanceId, PopId> placement;
    // Keyed by index into vt.vlinks.
    std::map<size_t, std::vector<LinkId>> routing;
    std::map<PopId, ResourceVector> reserved_pop;
    std::map<LinkId, double> reserved_link; // bits/s
    bool committed = false;

    nlohmann::ordered_json to_json() const;
};

struct Violation {
    std::string kind;   // "capacity", "bandwidth", "connectivity", "delay", "placement"
    std::string target; // pop/link/instance/vlink name
    std::string detail;
    double slack = 0.0; // negative = amount by which the constraint is broken
};

enum class MapObjective { min_delay, load_balance };

// Step one: expand the chain into instances, ceil(demand/capacity) per NF,
// demand split evenly, chain vlinks expanded pairwise with proportional
// bandwidth. Edge assistants get endpoint anchors, round-robin.
VirtualTopology translate(const ChainSpec& spec);

// Step two: greedy placement (descending resource footprint) and
// delay-shortest routing, then an atomic commit of every reservation.
// Throws InsufficientResources naming the first unsatisfiable item; the
// substrate is untouched on failure.
EmbeddingPlan map(const VirtualTopology& vt, PhysicalTopology& topo, MapObjective objective);

// Reserve everything the plan names, atomically. Fails without touching the
// substrate when any reservation exceeds a residual.
void commit(EmbeddingPlan& plan, PhysicalTopology& topo);

// Residual-restoring inverse of commit. Second release throws NotCommitted.
void release(EmbeddingPlan& plan, PhysicalTopology& topo);

// Static checks: reservations within capacity, vlink paths connect the
// hosting pops, worst-case static delay within the chain bound.
std::vector<Violation> validate(const EmbeddingPlan& plan, const PhysicalTopology& topo,
                                const ChainSpec& spec);

// Worst-case static one-way delay of the embedded chain: longest
// source-to-destination path through the instance DAG, counting vlink path
// propagation, per-physical-hop transmission at max packet size, and
// per-instance processing. Endpoint attachment legs included when the
// topology knows the chain's endpoints.
double static_worst_case_delay(const EmbeddingPlan& plan, const PhysicalTopology& topo,
                               const ChainSpec& spec);

// Placement helper shared with the scaling controller: pick the feasible pop
// for one instance given already-placed neighbors. Returns nullopt when no
// pop fits.
std::optional<PopId> choose_pop(const PhysicalTopology& topo, const ResourceVector& need,
                                const std::vector<PopId>& neighbor_pops, MapObjective objective,
                                const std::map<PopId, ResourceVector>& pending);

} // namespace chainsim
