#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "chainsim/chain.hpp"
#include "chainsim/flow.hpp"
#include "chainsim/packet_queue.hpp"
#include "chainsim/topology.hpp"
#include "chainsim/types.hpp"

namespace chainsim {

// Declarative experiment description. The text format is line oriented:
// `key value` globals, then [topology] / [chain <name>] / [traffic] /
// [faults] / [monitoring] sections whose lines mirror these structs.
// Parse errors name the line and field.

struct ScenarioPop {
    PopId id = 0;
    ResourceVector capacity;
    std::map<std::string, double> processing; // per function-kind seconds
    int line = 0;
};

struct ScenarioLink {
    LinkId id = 0;
    PopId a = 0, b = 0;
    double bandwidth = 0.0;   // bits/s
    double propagation = 0.0; // s
    double loss = 0.0;
    uint64_t queue_bytes = 1 << 20;
    QueueDiscipline qdisc = QueueDiscipline::fifo;
    int line = 0;
};

struct ScenarioEndpoint {
    std::string name;
    EndpointId id = 0; // assigned in declaration order, starting at 1
    PopId pop = 0;
    int line = 0;
};

enum class FailoverMode { none, proactive, reactive };

struct ScenarioChain {
    std::string name;
    AppId app;
    std::vector<std::string> sources;      // endpoint names
    std::vector<std::string> destinations; // endpoint names
    std::vector<NfSpec> nfs;
    std::vector<ChainVlink> vlinks;
    double e2e_delay_bound = 0.0;
    double demand = 0.0;
    uint32_t max_packet = 1500;
    FailoverMode failover = FailoverMode::none;
    MapObjective objective = MapObjective::min_delay;
    int line = 0;
};

enum class TransportMode { inline_ta, e2e };

struct ScenarioFlow {
    FlowId id = 0;
    std::string chain;
    std::string src;                  // endpoint name
    std::vector<std::string> dsts;    // endpoint names
    double rate = 0.0;                // packets/s; 0 = window-limited greedy
    uint32_t size = 1000;             // payload bytes
    double start = 0.0, stop = 0.0;   // stop 0 = run to scenario end
    int priority = 7;
    Reliability reliability = Reliability::none;
    double rel_deadline = 0.0;
    double max_delay = 0.0;
    double min_tput = 0.0;
    double max_loss = 1.0;
    TransportMode transport = TransportMode::inline_ta;
    int line = 0;
};

struct ScenarioChange {
    double at = 0.0;
    FlowId flow = 0;
    std::map<std::string, std::string> kv;
    int line = 0;
};

struct ScenarioFault {
    bool is_link = true;
    uint32_t target = 0;
    double at = 0.0;
    double duration = 0.0;
    int line = 0;
};

// Deterministic induced loss: specific seqs of one flow on one link.
struct ScenarioLoss {
    FlowId flow = 0;
    LinkId link = 0;
    bool last = false; // lose the flow's final packet
    SeqNo seq = 0;
    uint64_t every = 0; // every k-th packet when nonzero
    SeqNo from = 0;
    uint64_t count = 0; // 0 = unbounded
    int line = 0;
};

struct ScenarioMonitor {
    bool is_link = true;
    uint32_t target = 0;
    std::string metric = "utilization";
    double period = 0.1;
    int line = 0;
};

struct Scenario {
    uint64_t seed = 1;
    double duration = 1.0;
    double ctrl_rtt = 0.010;
    double instance_boot = 0.1;
    double controller_tick = 0.25;
    double report_window = 0.0; // 0 disables windowed byte counters
    double util_high = 0.8;
    double util_low = 0.3;
    int hysteresis = 3;

    std::vector<ScenarioPop> pops;
    std::vector<ScenarioLink> links;
    std::vector<ScenarioEndpoint> endpoints;
    std::vector<ScenarioChain> chains;
    std::vector<ScenarioFlow> flows;
    std::vector<ScenarioChange> changes;
    std::vector<ScenarioFault> faults;
    std::vector<ScenarioLoss> losses;
    std::vector<ScenarioMonitor> monitors;

    EndpointId endpoint_id(const std::string& name) const;
    const ScenarioChain* chain(const std::string& name) const;
    const ScenarioFlow* flow(FlowId id) const;

    PhysicalTopology build_topology() const;
    // ChainSpec with endpoint names resolved to ids.
    ChainSpec chain_spec(const ScenarioChain& c) const;
    FlowRequirement flow_requirement(const ScenarioFlow& f) const;

    // Canonical text form; load(emit(s)) == s field for field.
    std::string emit() const;
};

Scenario load_scenario(const std::string& path);
Scenario parse_scenario(const std::string& text);

} // namespace chainsim
