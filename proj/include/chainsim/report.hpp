#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "chainsim/types.hpp"

namespace chainsim {

// Every counter a run can produce. Maps keep keys ordered so that one
// (scenario, seed) pair always serializes to the same bytes.
struct FlowStats {
    uint64_t injected = 0;
    uint64_t delivered = 0;        // copies that reached a destination endpoint
    uint64_t dropped_loss = 0;     // Bernoulli link loss
    uint64_t dropped_queue = 0;    // queue overflow or priority eviction
    uint64_t dropped_failure = 0;  // link or pop down
    uint64_t dropped_admin = 0;    // deliberate shed: congestion command, crop, forget
    uint64_t dropped_stale = 0;    // missed partial-reliability deadline
    uint64_t absorbed_dup = 0;     // duplicate-elimination sink
    uint64_t consumed_bundle = 0;  // originals folded into a bundle packet
    uint64_t duplicated = 0;       // extra copies minted (replication, fan-out)
    uint64_t dup_delivered = 0;    // same seq reaching the same endpoint twice
    uint64_t out_of_order = 0;
    uint64_t bytes_delivered = 0;  // payload bytes at destinations
    uint64_t live = 0;             // copies currently somewhere in the network
    double delay_sum = 0.0;
    double delay_min = 0.0;
    double delay_max = 0.0;
    std::array<double, kDelayComponentCount> breakdown_sums{};
    std::map<EndpointId, uint64_t> delivered_per_dest; // distinct seqs
};

struct LinkStats {
    uint64_t sent = 0;
    uint64_t delivered = 0;
    uint64_t dropped_loss = 0;
    uint64_t dropped_down = 0;
    uint64_t queue_drops = 0;
    uint64_t bytes_sent = 0;
};

// One loss-recovery episode, logged with both latency measures so tests can
// reason about absolute delivery time and about delay added on top of the
// undisturbed path.
struct RecoveryRecord {
    FlowId flow = 0;
    SeqNo seq = 0;
    std::string detector;   // "timeout", "dupack", "gap_report"
    std::string method;     // "cache", "source", "escalated"
    double detect_time = 0.0;
    double resend_time = 0.0;
    double rto_used = 0.0;
    double delivery_time = 0.0;
    double created_at = 0.0;
    double total_latency = 0.0;  // delivery - created
    double excess_latency = 0.0; // total minus the flow's nominal one-way delay
};

struct TelemetryReportRecord {
    FlowId flow = 0;
    SeqNo seq = 0;
    PopId pop = 0;
    double at = 0.0;
    double accumulated_delay = 0.0;
    double threshold = 0.0;
};

struct ScalingAction {
    double time = 0.0;
    std::string chain;
    std::string nf;
    int direction = 0; // +1 scale out, -1 scale in
    int from_count = 0;
    int to_count = 0;
    double utilization = 0.0;
};

struct FailoverRecord {
    double fail_time = 0.0;
    double restored_time = 0.0;
    std::string target_kind; // "pop" or "link"
    uint32_t target = 0;
    std::string mode;        // "proactive" or "reactive"
    int affected_instances = 0;
};

// One periodic measurement from [monitoring], or a threshold report raised in
// the data path. target is "link.<id>" or "pop.<id>".
struct MonitorSample {
    double time = 0.0;
    std::string target;
    std::string metric;
    double value = 0.0;
};

struct SimulationReport {
    uint64_t seed = 0;
    double duration = 0.0;
    uint64_t events_executed = 0;
    std::map<FlowId, FlowStats> flows;
    std::map<LinkId, LinkStats> links;
    std::vector<RecoveryRecord> recoveries;
    std::vector<TelemetryReportRecord> telemetry_reports;
    std::vector<ScalingAction> scaling_actions;
    std::vector<FailoverRecord> failovers;
    std::vector<MonitorSample> monitor_samples;
    std::map<std::string, double> activation_times; // chain name -> active at
    // Compute reserved for standby capacity, per chain, at activation time.
    std::map<std::string, double> backup_reserved;
    uint64_t acks_sent = 0;
    uint64_t acks_delivered = 0;
    uint64_t control_messages = 0; // escalations, skips, rate commands
    // Largest |(arrival - created) - sum(breakdown)| seen at any delivery.
    double max_breakdown_residual = 0.0;
    // Sampled congestion-window trajectory per flow: (time, cwnd segments).
    std::map<FlowId, std::vector<std::pair<double, double>>> cwnd_trace;
    // Delivered payload bytes per flow per report window.
    std::map<FlowId, std::vector<uint64_t>> window_bytes;
    double report_window = 0.0;

    // Everything that left a source must be accounted for somewhere.
    uint64_t in_flight(FlowId f) const;
    bool conserved(FlowId f) const;

    nlohmann::ordered_json to_json() const;
    std::string to_json_string() const { return to_json().dump(2); }
    // Flat per-flow table for spreadsheet use.
    std::string to_csv() const;
    // time,target,metric,value rows from periodic monitors.
    std::string monitor_csv() const;
};

} // namespace chainsim
