#pragma once

#include <array>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "chainsim/chain.hpp"
#include "chainsim/event_queue.hpp"
#include "chainsim/netfuncs.hpp"
#include "chainsim/packet.hpp"
#include "chainsim/packet_queue.hpp"
#include "chainsim/report.hpp"
#include "chainsim/rng.hpp"
#include "chainsim/scenario.hpp"
#include "chainsim/topology.hpp"
#include "chainsim/transport.hpp"

namespace chainsim {

class Manager;

////////////////////////////////////////////////////////////////////////////////
// Entity references

// Senders and receivers can be endpoints or NF instances. A packed u64 names
// either, so packet context and lane keys stay trivial to copy and compare.
enum class EntityKind : uint8_t { none = 0, endpoint = 1, instance = 2 };

inline uint64_t entity_ref(EntityKind k, uint64_t id) {
    return (uint64_t(k) << 48) | id;
}
inline EntityKind entity_kind(uint64_t ref) { return EntityKind(ref >> 48); }
inline uint64_t entity_id(uint64_t ref) { return ref & ((uint64_t(1) << 48) - 1); }

// NF instances live in one global table keyed by (app, instance id).
inline uint64_t inst_key(uint32_t app, InstanceId id) {
    return (uint64_t(app + 1) << 32) | id;
}
inline uint32_t key_app(uint64_t key) { return uint32_t(key >> 32) - 1; }
inline InstanceId key_inst(uint64_t key) { return InstanceId(key & 0xffffffffu); }

////////////////////////////////////////////////////////////////////////////////
// Transport lanes

// Per-flow sender state within a lane.
struct LaneFlow {
    std::deque<Packet> pending; // admitted, waiting for window space
    std::set<SeqNo> outstanding;
    std::map<SeqNo, double> first_sent;
    std::set<SeqNo> retransmitted; // Karn: these never produce RTT samples
    SeqNo stage_next = 0; // next seq expected from an in-order sender
    SeqNo highest_cum = 0;
    SeqNo fast_fired_cum = UINT64_MAX; // last cum a fast retransmit fired for
    int dup_acks = 0;
    EventHandle rto_timer = 0;
    bool timer_armed = false;
};

// windowed: classic window-limited sending (assistants, end-to-end sources).
// app_paced: the application sets the pace; the lane only tracks reliability.
enum class LaneMode : uint8_t { windowed, app_paced };

// One sender->receiver segment. Flows multiplex over it and share the
// congestion window; a WRR scheduler arbitrates among their backlogs.
struct Lane {
    uint64_t receiver = 0; // EntityRef
    LaneMode mode = LaneMode::windowed;
    LaneCca cca;
    WrrScheduler wrr;
    uint64_t in_flight = 0;
    std::map<FlowId, LaneFlow> flows;
    bool trace_cwnd = false;
};

////////////////////////////////////////////////////////////////////////////////
// Runtime state

// Hysteresis-filtered utilization tracker driving elastic scaling. Returns
// +1 / -1 / 0 for scale out, scale in, hold.
struct ScalerState {
    double ewma = 0.0;
    bool primed = false;
    int above = 0;
    int below = 0;

    int tick(double sample, double alpha, double high, double low, int hysteresis) {
        ewma = primed ? alpha * sample + (1.0 - alpha) * ewma : sample;
        primed = true;
        if (ewma > high) {
            above++;
            below = 0;
        } else if (ewma < low) {
            below++;
            above = 0;
        } else {
            above = below = 0;
        }
        if (above >= hysteresis) {
            above = 0;
            return +1;
        }
        if (below >= hysteresis) {
            below = 0;
            return -1;
        }
        return 0;
    }
};

// One running NF instance. Function-specific state sits side by side; only
// the fields for the instance's kind ever get touched.
struct InstanceRt {
    uint64_t key = 0;
    uint32_t app = 0;
    InstanceId id = 0;
    std::string nf;
    NfKind kind = NfKind::forwarder;
    PopId host = 0;
    double capacity = 0.0;   // packets/s service rate
    double proc_delay = 0.0; // per packet, includes the pop's model share
    std::map<std::string, double> config;
    std::vector<EndpointId> anchors; // endpoints this instance serves
    bool active = false;
    bool draining = false;
    bool standby = false; // proactive spare, idle until failover
    double next_free = 0.0;
    uint64_t arrived_tick = 0; // arrivals since the last controller tick

    // Duplicate elimination and reordering.
    DedupWindow dedup;
    Resequencer reseq;
    std::map<FlowId, EventHandle> reseq_timers;
    std::map<std::pair<FlowId, SeqNo>, double> held_since;

    // Bundling.
    std::map<FlowId, std::vector<Packet>> bundle_acc;
    std::map<FlowId, EventHandle> bundle_timers;

    // Transport assistant.
    std::unique_ptr<PacketCache> cache;
    std::map<uint64_t, Lane> lanes; // keyed by receiver EntityRef
    std::map<FlowId, uint64_t> lane_key;
    std::map<FlowId, RecvTracker> recv;
    // Copies pinned to different receivers share seq numbers, so the
    // forward/absorb decision needs its own tracker per destination.
    std::map<std::pair<FlowId, EndpointId>, RecvTracker> recv_dest;
    std::map<FlowId, uint64_t> ack_to; // upstream segment sender per flow
    std::map<FlowId, std::set<SeqNo>> expect_escalated;

    // Cropper interest map resolved to endpoint ids.
    std::vector<std::pair<EndpointId, double>> interest;
};

struct EndpointRt {
    EndpointId id = 0;
    PopId pop = 0;
    // Sender side.
    std::map<uint64_t, Lane> lanes;
    std::map<FlowId, uint64_t> lane_key;
    std::unique_ptr<PacketCache> buffer; // retransmit buffer for reliable flows
    // Receiver side.
    std::map<FlowId, RecvTracker> recv;
    std::map<FlowId, uint64_t> ack_to;
    std::map<FlowId, std::set<SeqNo>> seen; // distinct seqs delivered here
    std::map<FlowId, SeqNo> max_first;      // highest first-delivery seq
};

// One direction of a physical link: a queue feeding a serializer.
struct LinkDirRt {
    LinkId link = 0;
    PopId from = 0;
    PopId to = 0;
    std::unique_ptr<PacketQueue> queue;
    bool busy = false;
    uint64_t bytes_window = 0; // since the last monitor sample
};

struct FlowRt {
    ScenarioFlow cfg;
    FlowRequirement req; // live copy; runtime changes land here
    uint32_t app = UINT32_MAX;
    EndpointId src = 0;
    std::vector<EndpointId> dsts;
    bool greedy = false;
    double rate = 0.0; // live packets/s
    uint32_t size = 0; // live payload bytes
    SeqNo next_seq = 0;
    SeqNo last_seq = UINT64_MAX; // resolved target for "lose ... seq=last"
    bool admin_down = false;
    std::map<EndpointId, double> nominal; // static one-way delay per dest
    EventHandle gen_timer = 0;
    std::vector<uint64_t> window_bytes;
};

enum class AppLifecycle { requested, allocated, active, failed, released };

struct AppRt {
    uint32_t idx = 0;
    std::string name;
    ScenarioChain cfg; // failover mode, objective come from here
    ChainSpec spec;
    AppLifecycle state = AppLifecycle::requested;
    EmbeddingPlan plan;
    double active_at = 0.0;
    std::map<std::string, std::vector<std::string>> succ; // stage graph
    std::vector<std::string> ingress;
    std::vector<std::string> egress;
    std::map<std::string, int> base_count; // scale-in floor per NF
    std::map<std::string, ScalerState> scalers;
    std::set<uint64_t> instances; // keys into the global table
    InstanceId next_instance_id = 1;
    // Failover provisioning.
    std::map<std::string, uint64_t> spares;               // nf -> standby key
    std::map<size_t, std::vector<LinkId>> backup_routes;  // vt vlink -> path
};

////////////////////////////////////////////////////////////////////////////////
// Simulator

// Deterministic single-threaded engine: builds runtime state from a
// scenario, schedules generators, faults and controller ticks, and runs the
// event loop to the horizon. The same (scenario, seed) always produces a
// byte-identical report.
class Simulator {
  public:
    explicit Simulator(Scenario scn);
    ~Simulator();

    SimulationReport run();

    // Component access for tests and tooling.
    Scenario& scenario() { return _scn; }
    PhysicalTopology& topo() { return _topo; }
    EventQueue& events() { return _events; }
    SimulationReport& report() { return _report; }
    Manager& manager() { return *_mgr; }
    double now() const { return _events.now(); }
    AppRt* app_named(const std::string& name);
    const std::map<uint64_t, InstanceRt>& instances() const { return _instances; }
    FlowRt* flow_rt(FlowId f);

  private:
    friend class Manager;

    ////////////////////////////////////////////////////////////////////////////
    // Setup

    void build_runtime();
    void schedule_bootstrap();
    void finalize_report();
    uint64_t make_instance(uint32_t app, InstanceId id, const NfSpec& nf, PopId host);
    void resolve_induced_losses();
    void compute_nominals(AppRt& app);
    double stamped_wire_bytes(const FlowRt& f) const;

    ////////////////////////////////////////////////////////////////////////////
    // Lookups

    InstanceRt& inst(uint64_t key) { return _instances.at(key); }
    EndpointRt& endpoint(EndpointId id) { return _endpoints.at(id); }
    FlowStats& stats(FlowId f) { return _report.flows[f]; }
    PopId entity_pop(uint64_t ref);
    bool entity_usable(uint64_t ref);
    std::vector<uint64_t> active_instances_of(uint32_t app, const std::string& nf);
    uint64_t pick_instance(uint32_t app, const std::string& nf, FlowId flow,
                           std::optional<EndpointId> anchor);

    ////////////////////////////////////////////////////////////////////////////
    // Routing

    const std::vector<LinkId>& route(PopId from, PopId to);
    std::vector<std::vector<LinkId>> fork_routes(PopId from, PopId to, int k);
    void bump_epoch() { _topo_epoch++; }
    // Planned route for a virtual vlink if it is still valid, else dynamic.
    std::vector<LinkId> vlink_route(AppRt& app, InstanceId from, InstanceId to,
                                    PopId from_pop, PopId to_pop);

    ////////////////////////////////////////////////////////////////////////////
    // Accounting

    void mint(Packet& p, bool original);
    void terminal(const Packet& p, uint64_t FlowStats::*counter);
    bool is_data(const Packet& p) const { return p.kind == PacketKind::regular; }

    ////////////////////////////////////////////////////////////////////////////
    // Generators and admission

    void start_generator(FlowRt& f);
    void generator_fire(FlowId id);
    Packet make_packet(FlowRt& f);
    void source_admit(FlowRt& f, Packet p);

    ////////////////////////////////////////////////////////////////////////////
    // Link layer

    void transmit(Packet p, PopId from, std::vector<LinkId> path, uint64_t target);
    void link_enqueue(LinkDirRt& d, Packet p);
    void link_pump(LinkDirRt& d);
    void link_tx_done(LinkDirRt& d, Packet p, double enq_at);
    void link_arrival(Packet p, LinkId link, PopId at);
    void deliver(Packet p, uint64_t target, PopId at);
    LinkDirRt& dir_from(LinkId link, PopId from);

    ////////////////////////////////////////////////////////////////////////////
    // NF data path

    void deliver_to_instance(Packet p, uint64_t key);
    void nf_process(uint64_t key, Packet p);
    void forward_stage(uint64_t key, Packet p);
    void forward_to_dests(uint64_t key, Packet p);
    void aa_process(uint64_t key, Packet p);
    void ta_process(uint64_t key, Packet p);
    void prf_process(uint64_t key, Packet p);
    void pef_process(uint64_t key, Packet p);
    void pof_process(uint64_t key, Packet p);
    void pof_emit(uint64_t key, Resequencer::Outcome out, FlowId flow);
    void monitor_process(InstanceRt& i, Packet& p);
    void bundle_flush(uint64_t key, FlowId flow);
    void endpoint_arrival(Packet p, EndpointId ep);
    void instance_control(uint64_t key, Packet p);
    void register_delivery(Packet& p, EndpointRt& ep);

    ////////////////////////////////////////////////////////////////////////////
    // Transport

    Lane& lane_at(uint64_t sender, uint64_t receiver, LaneMode mode, FlowId flow);
    std::map<uint64_t, Lane>* lanes_of(uint64_t sender);
    PacketCache* cache_of(uint64_t sender, Reliability rel);
    void lane_admit(uint64_t sender, Lane& lane, FlowId flow, Packet p);
    void pump_lane(uint64_t sender, Lane& lane);
    void lane_send(uint64_t sender, Lane& lane, FlowId flow, Packet p, bool is_retx);
    void lane_output(uint64_t sender, Packet p);
    void send_ack(uint64_t me, FlowId flow, const RecvTracker& tr, uint64_t to);
    void handle_ack(uint64_t me, Packet p);
    void arm_rto(uint64_t sender, Lane& lane, FlowId flow);
    void disarm_rto(Lane& lane, FlowId flow);
    void on_rto(uint64_t sender, uint64_t receiver, FlowId flow);
    void retransmit(uint64_t sender, Lane& lane, FlowId flow, SeqNo seq,
                    const char* detector, double rto_used);
    void abandon_seq(Lane& lane, FlowId flow, SeqNo seq);
    void send_skip(uint64_t sender, Lane& lane, FlowId flow, SeqNo upto);
    void escalate(uint64_t from, FlowId flow, SeqNo seq);
    void handle_escalate(uint64_t at, const EscalateTlv& e);
    void trace_cwnd(const Lane& lane);
    void record_recovery(FlowId flow, SeqNo seq, const char* detector,
                         const char* method, double rto_used, double created_at);

    ////////////////////////////////////////////////////////////////////////////
    // Faults, changes, windows

    void apply_fault(const ScenarioFault& f, bool restore);
    void apply_change(const ScenarioChange& c);
    void roll_windows(Packet& p, FlowRt& f);
    bool induced_loss(const Packet& p, LinkId link);

    ////////////////////////////////////////////////////////////////////////////

    Scenario _scn;
    PhysicalTopology _topo;
    EventQueue _events;
    RngStream _rng;
    SimulationReport _report;
    std::unique_ptr<Manager> _mgr;

    std::vector<AppRt> _apps;
    std::map<uint64_t, InstanceRt> _instances;
    std::map<EndpointId, EndpointRt> _endpoints;
    std::map<LinkId, std::array<LinkDirRt, 2>> _linkdirs;
    std::map<FlowId, FlowRt> _flows;
    // An induced loss kills a given seq once; retransmits get through so
    // the recovery the rule exists to provoke can actually complete.
    struct LossRuleRt {
        ScenarioLoss spec;
        std::set<SeqNo> taken;
    };
    std::map<std::pair<FlowId, LinkId>, std::vector<LossRuleRt>> _loss_rules;
    std::map<std::pair<FlowId, SeqNo>, std::vector<size_t>> _open_recoveries;

    uint64_t _topo_epoch = 1;
    struct CachedRoute {
        uint64_t epoch = 0;
        std::vector<LinkId> path;
    };
    std::map<std::pair<PopId, PopId>, CachedRoute> _route_cache;
    struct CachedFork {
        uint64_t epoch = 0;
        int k = 0;
        std::vector<std::vector<LinkId>> paths;
    };
    std::map<std::pair<PopId, PopId>, CachedFork> _fork_cache;
};

} // namespace chainsim
