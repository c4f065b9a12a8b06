#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "chainsim/types.hpp"

namespace chainsim {

////////////////////////////////////////////////////////////////////////////////
// Application id

// 64-bit application id, split into a 16-bit operator part and a 48-bit
// locally assigned part so that ids stay unique across operators.
struct AppId {
    uint16_t operator_id = 0;
    uint64_t local_id = 0; // low 48 bits used

    static constexpr uint64_t kLocalMask = (uint64_t(1) << 48) - 1;

    uint64_t pack() const {
        return (uint64_t(operator_id) << 48) | (local_id & kLocalMask);
    }
    static AppId unpack(uint64_t v) {
        return AppId{uint16_t(v >> 48), v & kLocalMask};
    }
    bool operator==(const AppId& o) const {
        return operator_id == o.operator_id && (local_id & kLocalMask) == (o.local_id & kLocalMask);
    }
    bool operator<(const AppId& o) const { return pack() < o.pack(); }
    std::string str() const {
        return std::to_string(operator_id) + ":" + std::to_string(local_id & kLocalMask);
    }
};

enum class PacketKind : uint8_t {
    signaling = 0,
    regular = 1,
};

////////////////////////////////////////////////////////////////////////////////
// TLV metadata

// Registered TLV kinds. Unknown kinds must survive re-encoding byte for byte,
// so decoding keeps raw bytes for everything.
enum : uint16_t {
    TLV_TIMESTAMP = 1,        // f64 seconds
    TLV_PRIORITY = 2,         // u8
    TLV_REQUIREMENT = 3,      // min_tput f64, max_delay f64, max_loss f64, reliability u8, deadline f64
    TLV_RETX_TIMEOUT = 4,     // f64 seconds, 0 disables retransmission
    TLV_TELEMETRY = 5,        // pop u32, timestamp f64, queuing f64, processing f64
    TLV_REPLICA = 6,          // u16 index, u16 count
    TLV_ACK = 7,              // flow u32, cumulative u64, gap_count u16, gaps (u64 from, u64 to)*
    TLV_DEGRADED = 8,         // f64 fraction kept
    TLV_BUNDLE = 9,           // u16 count, then u64 seq per bundled packet
    TLV_INTEREST = 10,        // u16 count, then (u32 endpoint, f64 fraction)*
    TLV_DROP_IF_CONGESTION = 11, // empty: packet may be shed under pressure
    TLV_REPORT_THRESHOLD = 12,   // f64 seconds: report if accumulated delay exceeds
    TLV_REPORTED = 13,        // u32 pop that raised the report
    TLV_DEST = 14,            // u32 endpoint this copy is pinned to
    TLV_ESCALATE = 15,        // flow u32, seq u64: cache miss, ask upstream
    TLV_CMD_RATE = 16,        // f64 packets/s: sender rate command
    TLV_SKIP = 17,            // flow u32, upto u64: sender abandoned seqs below upto
};

struct Tlv {
    uint16_t kind = 0;
    std::vector<uint8_t> value;

    bool operator==(const Tlv& o) const { return kind == o.kind && value == o.value; }
};

// Typed views over common TLVs. Encoding is big-endian throughout; doubles
// travel as their IEEE 754 bit pattern.
Tlv make_timestamp_tlv(double t);
double read_timestamp_tlv(const Tlv& t);
Tlv make_priority_tlv(uint8_t p);
uint8_t read_priority_tlv(const Tlv& t);
Tlv make_f64_tlv(uint16_t kind, double v);
double read_f64_tlv(const Tlv& t);

struct RequirementTlv {
    double min_tput = 0.0;   // bits/s
    double max_delay = 0.0;  // seconds, 0 = unbounded
    double max_loss = 1.0;   // fraction
    uint8_t reliability = 0; // 0 none, 1 full, 2 partial (deadline applies)
    double deadline = 0.0;   // seconds, for partial reliability
};
Tlv make_requirement_tlv(const RequirementTlv& r);
RequirementTlv read_requirement_tlv(const Tlv& t);

struct TelemetryTlv {
    uint32_t pop = 0;
    double timestamp = 0.0;
    double queuing = 0.0;    // delta since previous telemetry record
    double processing = 0.0; // delta since previous telemetry record
};
Tlv make_telemetry_tlv(const TelemetryTlv& r);
TelemetryTlv read_telemetry_tlv(const Tlv& t);

struct ReplicaTlv {
    uint16_t index = 0;
    uint16_t count = 0;
};
Tlv make_replica_tlv(ReplicaTlv r);
ReplicaTlv read_replica_tlv(const Tlv& t);

struct AckTlv {
    uint32_t flow = 0;
    uint64_t cumulative = 0;             // all seq < cumulative received
    std::vector<std::pair<uint64_t, uint64_t>> gaps; // [from, to) still missing
};
Tlv make_ack_tlv(const AckTlv& a);
AckTlv read_ack_tlv(const Tlv& t);

Tlv make_bundle_tlv(const std::vector<uint64_t>& seqs);
std::vector<uint64_t> read_bundle_tlv(const Tlv& t);

struct InterestTlv {
    std::vector<std::pair<uint32_t, double>> fractions; // endpoint -> kept fraction
};
Tlv make_interest_tlv(const InterestTlv& r);
InterestTlv read_interest_tlv(const Tlv& t);

Tlv make_u32_tlv(uint16_t kind, uint32_t v);
uint32_t read_u32_tlv(const Tlv& t);

struct EscalateTlv {
    uint32_t flow = 0;
    uint64_t seq = 0;
};
Tlv make_escalate_tlv(EscalateTlv e);
EscalateTlv read_escalate_tlv(const Tlv& t);

// TLV_SKIP shares the layout of TLV_ESCALATE: flow u32, seq u64.
Tlv make_skip_tlv(uint32_t flow, uint64_t upto);

////////////////////////////////////////////////////////////////////////////////
// Packet

// Fixed header: app u64 | kind u8 | flow u32 | seq u64 | payload u32 | tlvs u16.
inline constexpr size_t kFixedHeaderBytes = 27;
inline constexpr size_t kTlvHeaderBytes = 4;

// Runtime routing context. Never serialized; identifies which application
// the packet belongs to inside one simulation and which segment sender is
// responsible for it (the entity a receiver acks back to).
struct PacketCtx {
    uint32_t app = UINT32_MAX;
    EndpointId src = 0;
    uint64_t seg_sender = 0;  // EntityRef encoding, 0 = none
    uint64_t from_entity = 0; // emitter of an ack/control packet
    uint64_t target = 0;      // EntityRef the packet is currently headed to
    std::vector<LinkId> route; // remaining physical hops toward target
    uint32_t hop = 0;          // index of the next hop in route
    double staged_at = -1.0;   // when the packet entered a send lane, <0 = never
};

struct Packet {
    uint64_t app = 0;
    PacketKind kind = PacketKind::regular;
    FlowId flow = 0;
    SeqNo seq = 0;
    uint32_t payload_bytes = 0;
    std::vector<Tlv> tlvs;

    // Bookkeeping the wire does not carry.
    SimTime created_at = 0.0;
    std::array<double, kDelayComponentCount> breakdown{};
    PacketCtx ctx;

    double& delay(DelayComponent c) { return breakdown[size_t(c)]; }
    double delay(DelayComponent c) const { return breakdown[size_t(c)]; }
    double breakdown_total() const {
        double s = 0.0;
        for (double d : breakdown) s += d;
        return s;
    }

    size_t wire_size() const;

    const Tlv* find_tlv(uint16_t kind) const;
    Tlv* find_tlv(uint16_t kind);
    // Replaces the first TLV of this kind or appends one.
    void set_tlv(Tlv t);
    void remove_tlv(uint16_t kind);
};

std::vector<uint8_t> encode_packet(const Packet& p);
Packet decode_packet(const uint8_t* data, size_t len);
inline Packet decode_packet(const std::vector<uint8_t>& buf) {
    return decode_packet(buf.data(), buf.size());
}

} // namespace chainsim
