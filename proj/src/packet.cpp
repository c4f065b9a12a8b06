#include "chainsim/packet.hpp"

#include <bit>
#include <cstring>

namespace chainsim {

namespace {

void put_u8(std::vector<uint8_t>& b, uint8_t v) { b.push_back(v); }
void put_u16(std::vector<uint8_t>& b, uint16_t v) {
    b.push_back(uint8_t(v >> 8));
    b.push_back(uint8_t(v));
}
void put_u32(std::vector<uint8_t>& b, uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) b.push_back(uint8_t(v >> s));
}
void put_u64(std::vector<uint8_t>& b, uint64_t v) {
    for (int s = 56; s >= 0; s -= 8) b.push_back(uint8_t(v >> s));
}
void put_f64(std::vector<uint8_t>& b, double v) {
    put_u64(b, std::bit_cast<uint64_t>(v));
}

struct Cursor {
    const uint8_t* p;
    size_t left;
    uint8_t u8() {
        if (left < 1) throw MalformedHeader("truncated buffer");
        left -= 1;
        return *p++;
    }
    uint16_t u16() {
        if (left < 2) throw MalformedHeader("truncated buffer");
        uint16_t v = (uint16_t(p[0]) << 8) | p[1];
        p += 2; left -= 2;
        return v;
    }
    uint32_t u32() {
        if (left < 4) throw MalformedHeader("truncated buffer");
        uint32_t v = 0;
        for (int i = 0; i < 4; i++) v = (v << 8) | p[i];
        p += 4; left -= 4;
        return v;
    }
    uint64_t u64() {
        if (left < 8) throw MalformedHeader("truncated buffer");
        uint64_t v = 0;
        for (int i = 0; i < 8; i++) v = (v << 8) | p[i];
        p += 8; left -= 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::vector<uint8_t> bytes(size_t n) {
        if (left < n) throw MalformedHeader("truncated buffer");
        std::vector<uint8_t> out(p, p + n);
        p += n; left -= n;
        return out;
    }
};

Cursor cursor_for(const Tlv& t) { return Cursor{t.value.data(), t.value.size()}; }

} // namespace

////////////////////////////////////////////////////////////////////////////////
// TLV builders and readers

Tlv make_timestamp_tlv(double t) { return make_f64_tlv(TLV_TIMESTAMP, t); }
double read_timestamp_tlv(const Tlv& t) { return read_f64_tlv(t); }

Tlv make_priority_tlv(uint8_t p) { return Tlv{TLV_PRIORITY, {p}}; }
uint8_t read_priority_tlv(const Tlv& t) {
    Cursor c = cursor_for(t);
    return c.u8();
}

Tlv make_f64_tlv(uint16_t kind, double v) {
    Tlv t;
    t.kind = kind;
    put_f64(t.value, v);
    return t;
}
double read_f64_tlv(const Tlv& t) {
    Cursor c = cursor_for(t);
    return c.f64();
}

Tlv make_requirement_tlv(const RequirementTlv& r) {
    Tlv t;
    t.kind = TLV_REQUIREMENT;
    put_f64(t.value, r.min_tput);
    put_f64(t.value, r.max_delay);
    put_f64(t.value, r.max_loss);
    put_u8(t.value, r.reliability);
    put_f64(t.value, r.deadline);
    return t;
}
RequirementTlv read_requirement_tlv(const Tlv& t) {
    Cursor c = cursor_for(t);
    RequirementTlv r;
    r.min_tput = c.f64();
    r.max_delay = c.f64();
    r.max_loss = c.f64();
    r.reliability = c.u8();
    r.deadline = c.f64();
    return r;
}

Tlv make_telemetry_tlv(const TelemetryTlv& r) {
    Tlv t;
    t.kind = TLV_TELEMETRY;
    put_u32(t.value, r.pop);
    put_f64(t.value, r.timestamp);
    put_f64(t.value, r.queuing);
    put_f64(t.value, r.processing);
    return t;
}
TelemetryTlv read_telemetry_tlv(const Tlv& t) {
    Cursor c = cursor_for(t);
    TelemetryTlv r;
    r.pop = c.u32();
    r.timestamp = c.f64();
    r.queuing = c.f64();
    r.processing = c.f64();
    return r;
}

Tlv make_replica_tlv(ReplicaTlv r) {
    Tlv t;
    t.kind = TLV_REPLICA;
    put_u16(t.value, r.index);
    put_u16(t.value, r.count);
    return t;
}
ReplicaTlv read_replica_tlv(const Tlv& t) {
    Cursor c = cursor_for(t);
    ReplicaTlv r;
    r.index = c.u16();
    r.count = c.u16();
    return r;
}

Tlv make_ack_tlv(const AckTlv& a) {
    Tlv t;
    t.kind = TLV_ACK;
    put_u32(t.value, a.flow);
    put_u64(t.value, a.cumulative);
    put_u16(t.value, uint16_t(a.gaps.size()));
    for (auto& [from, to] : a.gaps) {
        put_u64(t.value, from);
        put_u64(t.value, to);
    }
    return t;
}
AckTlv read_ack_tlv(const Tlv& t) {
    Cursor c = cursor_for(t);
    AckTlv a;
    a.flow = c.u32();
    a.cumulative = c.u64();
    uint16_t n = c.u16();
    a.gaps.reserve(n);
    for (uint16_t i = 0; i < n; i++) {
        uint64_t from = c.u64();
        uint64_t to = c.u64();
        a.gaps.emplace_back(from, to);
    }
    return a;
}

Tlv make_bundle_tlv(const std::vector<uint64_t>& seqs) {
    Tlv t;
    t.kind = TLV_BUNDLE;
    put_u16(t.value, uint16_t(seqs.size()));
    for (uint64_t s : seqs) put_u64(t.value, s);
    return t;
}
std::vector<uint64_t> read_bundle_tlv(const Tlv& t) {
    Cursor c = cursor_for(t);
    uint16_t n = c.u16();
    std::vector<uint64_t> out;
    out.reserve(n);
    for (uint16_t i = 0; i < n; i++) out.push_back(c.u64());
    return out;
}

Tlv make_interest_tlv(const InterestTlv& r) {
    Tlv t;
    t.kind = TLV_INTEREST;
    put_u16(t.value, uint16_t(r.fractions.size()));
    for (auto& [ep, frac] : r.fractions) {
        put_u32(t.value, ep);
        put_f64(t.value, frac);
    }
    return t;
}
InterestTlv read_interest_tlv(const Tlv& t) {
    Cursor c = cursor_for(t);
    InterestTlv r;
    uint16_t n = c.u16();
    r.fractions.reserve(n);
    for (uint16_t i = 0; i < n; i++) {
        uint32_t ep = c.u32();
        double frac = c.f64();
        r.fractions.emplace_back(ep, frac);
    }
    return r;
}

Tlv make_u32_tlv(uint16_t kind, uint32_t v) {
    Tlv t;
    t.kind = kind;
    put_u32(t.value, v);
    return t;
}
uint32_t read_u32_tlv(const Tlv& t) {
    Cursor c = cursor_for(t);
    return c.u32();
}

Tlv make_escalate_tlv(EscalateTlv e) {
    Tlv t;
    t.kind = TLV_ESCALATE;
    put_u32(t.value, e.flow);
    put_u64(t.value, e.seq);
    return t;
}
EscalateTlv read_escalate_tlv(const Tlv& t) {
    Cursor c = cursor_for(t);
    EscalateTlv e;
    e.flow = c.u32();
    e.seq = c.u64();
    return e;
}

Tlv make_skip_tlv(uint32_t flow, uint64_t upto) {
    Tlv t;
    t.kind = TLV_SKIP;
    put_u32(t.value, flow);
    put_u64(t.value, upto);
    return t;
}

////////////////////////////////////////////////////////////////////////////////
// Packet wire format

size_t Packet::wire_size() const {
    size_t n = kFixedHeaderBytes;
    for (const Tlv& t : tlvs) n += kTlvHeaderBytes + t.value.size();
    return n + payload_bytes;
}

const Tlv* Packet::find_tlv(uint16_t kind) const {
    for (const Tlv& t : tlvs)
        if (t.kind == kind) return &t;
    return nullptr;
}
Tlv* Packet::find_tlv(uint16_t kind) {
    for (Tlv& t : tlvs)
        if (t.kind == kind) return &t;
    return nullptr;
}
void Packet::set_tlv(Tlv t) {
    if (Tlv* cur = find_tlv(t.kind)) {
        *cur = std::move(t);
    } else {
        tlvs.push_back(std::move(t));
    }
}
void Packet::remove_tlv(uint16_t kind) {
    std::erase_if(tlvs, [&](const Tlv& t) { return t.kind == kind; });
}

std::vector<uint8_t> encode_packet(const Packet& p) {
    std::vector<uint8_t> b;
    b.reserve(kFixedHeaderBytes + 16 * p.tlvs.size());
    put_u64(b, p.app);
    put_u8(b, uint8_t(p.kind));
    put_u32(b, p.flow);
    put_u64(b, p.seq);
    put_u32(b, p.payload_bytes);
    put_u16(b, uint16_t(p.tlvs.size()));
    for (const Tlv& t : p.tlvs) {
        put_u16(b, t.kind);
        put_u16(b, uint16_t(t.value.size()));
        b.insert(b.end(), t.value.begin(), t.value.end());
    }
    return b;
}

Packet decode_packet(const uint8_t* data, size_t len) {
    Cursor c{data, len};
    Packet p;
    p.app = c.u64();
    uint8_t kind = c.u8();
    if (kind > 1) throw MalformedHeader("bad packet kind " + std::to_string(kind));
    p.kind = PacketKind(kind);
    p.flow = c.u32();
    p.seq = c.u64();
    p.payload_bytes = c.u32();
    uint16_t tlv_count = c.u16();
    p.tlvs.reserve(tlv_count);
    for (uint16_t i = 0; i < tlv_count; i++) {
        Tlv t;
        t.kind = c.u16();
        uint16_t vlen = c.u16();
        t.value = c.bytes(vlen);
        p.tlvs.push_back(std::move(t));
    }
    if (c.left != 0) throw MalformedHeader("trailing bytes after TLV list");
    return p;
}

} // namespace chainsim
