#include "chainsim/report.hpp"

#include <sstream>

namespace chainsim {

uint64_t SimulationReport::in_flight(FlowId f) const {
    auto it = flows.find(f);
    return it == flows.end() ? 0 : it->second.live;
}

// The counter identity every flow must satisfy: copies minted equal copies
// terminated plus copies still live. A mismatch means some code path lost or
// double-counted a packet.
bool SimulationReport::conserved(FlowId f) const {
    auto it = flows.find(f);
    if (it == flows.end()) return true;
    const FlowStats& s = it->second;
    uint64_t minted = s.injected + s.duplicated;
    uint64_t terminated = s.delivered + s.dropped_loss + s.dropped_queue + s.dropped_failure +
                          s.dropped_admin + s.dropped_stale + s.absorbed_dup + s.consumed_bundle;
    return minted == terminated + s.live;
}

nlohmann::ordered_json SimulationReport::to_json() const {
    using json = nlohmann::ordered_json;
    json j;
    j["seed"] = seed;
    j["duration"] = duration;
    j["events_executed"] = events_executed;

    json jf = json::object();
    for (const auto& [id, s] : flows) {
        json f;
        f["injected"] = s.injected;
        f["delivered"] = s.delivered;
        f["dropped_loss"] = s.dropped_loss;
        f["dropped_queue"] = s.dropped_queue;
        f["dropped_failure"] = s.dropped_failure;
        f["dropped_admin"] = s.dropped_admin;
        f["dropped_stale"] = s.dropped_stale;
        f["absorbed_dup"] = s.absorbed_dup;
        f["consumed_bundle"] = s.consumed_bundle;
        f["duplicated"] = s.duplicated;
        f["dup_delivered"] = s.dup_delivered;
        f["out_of_order"] = s.out_of_order;
        f["bytes_delivered"] = s.bytes_delivered;
        f["in_flight"] = s.live;
        f["delay_sum"] = s.delay_sum;
        f["delay_min"] = s.delay_min;
        f["delay_max"] = s.delay_max;
        f["delay_mean"] = s.delivered ? s.delay_sum / double(s.delivered) : 0.0;
        json bd;
        for (size_t i = 0; i < kDelayComponentCount; i++)
            bd[delay_component_name(DelayComponent(i))] = s.breakdown_sums[i];
        f["breakdown"] = bd;
        json pd = json::object();
        for (const auto& [ep, n] : s.delivered_per_dest) pd[std::to_string(ep)] = n;
        f["delivered_per_dest"] = pd;
        jf[std::to_string(id)] = f;
    }
    j["flows"] = jf;

    json jl = json::object();
    for (const auto& [id, s] : links) {
        json l;
        l["sent"] = s.sent;
        l["delivered"] = s.delivered;
        l["dropped_loss"] = s.dropped_loss;
        l["dropped_down"] = s.dropped_down;
        l["queue_drops"] = s.queue_drops;
        l["bytes_sent"] = s.bytes_sent;
        jl[std::to_string(id)] = l;
    }
    j["links"] = jl;

    json jr = json::array();
    for (const auto& r : recoveries) {
        jr.push_back({{"flow", r.flow}, {"seq", r.seq}, {"detector", r.detector},
                      {"method", r.method}, {"detect_time", r.detect_time},
                      {"resend_time", r.resend_time}, {"rto_used", r.rto_used},
                      {"delivery_time", r.delivery_time}, {"created_at", r.created_at},
                      {"total_latency", r.total_latency}, {"excess_latency", r.excess_latency}});
    }
    j["recoveries"] = jr;

    json jt = json::array();
    for (const auto& t : telemetry_reports) {
        jt.push_back({{"flow", t.flow}, {"seq", t.seq}, {"pop", t.pop}, {"at", t.at},
                      {"accumulated_delay", t.accumulated_delay}, {"threshold", t.threshold}});
    }
    j["telemetry_reports"] = jt;

    json js = json::array();
    for (const auto& a : scaling_actions) {
        js.push_back({{"time", a.time}, {"chain", a.chain}, {"nf", a.nf},
                      {"direction", a.direction}, {"from_count", a.from_count},
                      {"to_count", a.to_count}, {"utilization", a.utilization}});
    }
    j["scaling_actions"] = js;

    json jv = json::array();
    for (const auto& f : failovers) {
        jv.push_back({{"fail_time", f.fail_time}, {"restored_time", f.restored_time},
                      {"target_kind", f.target_kind}, {"target", f.target},
                      {"mode", f.mode}, {"affected_instances", f.affected_instances}});
    }
    j["failovers"] = jv;

    json jm = json::array();
    for (const auto& m : monitor_samples) {
        jm.push_back({{"time", m.time}, {"target", m.target}, {"metric", m.metric},
                      {"value", m.value}});
    }
    j["monitor_samples"] = jm;

    json ja = json::object();
    for (const auto& [name, t] : activation_times) ja[name] = t;
    j["activation_times"] = ja;

    json jb = json::object();
    for (const auto& [name, r] : backup_reserved) jb[name] = r;
    j["backup_reserved"] = jb;

    j["acks_sent"] = acks_sent;
    j["acks_delivered"] = acks_delivered;
    j["control_messages"] = control_messages;
    j["max_breakdown_residual"] = max_breakdown_residual;

    if (!cwnd_trace.empty()) {
        json jc = json::object();
        for (const auto& [id, pts] : cwnd_trace) {
            json arr = json::array();
            for (auto& [t, w] : pts) arr.push_back({{"t", t}, {"cwnd", w}});
            jc[std::to_string(id)] = arr;
        }
        j["cwnd_trace"] = jc;
    }
    if (!window_bytes.empty()) {
        j["report_window"] = report_window;
        json jw = json::object();
        for (const auto& [id, ws] : window_bytes) jw[std::to_string(id)] = ws;
        j["window_bytes"] = jw;
    }
    return j;
}

std::string SimulationReport::to_csv() const {
    std::ostringstream os;
    os << "flow,injected,delivered,dropped_loss,dropped_queue,dropped_failure,dropped_admin,"
          "dropped_stale,absorbed_dup,consumed_bundle,in_flight,bytes_delivered,"
          "delay_mean,delay_min,delay_max\n";
    for (const auto& [id, s] : flows) {
        os << id << ',' << s.injected << ',' << s.delivered << ',' << s.dropped_loss << ','
           << s.dropped_queue << ',' << s.dropped_failure << ',' << s.dropped_admin << ','
           << s.dropped_stale << ',' << s.absorbed_dup << ',' << s.consumed_bundle << ','
           << s.live << ',' << s.bytes_delivered << ','
           << (s.delivered ? s.delay_sum / double(s.delivered) : 0.0) << ',' << s.delay_min
           << ',' << s.delay_max << '\n';
    }
    return os.str();
}

std::string SimulationReport::monitor_csv() const {
    std::ostringstream os;
    os << "time,target,metric,value\n";
    for (const auto& m : monitor_samples)
        os << m.time << ',' << m.target << ',' << m.metric << ',' << m.value << '\n';
    return os.str();
}

} // namespace chainsim
