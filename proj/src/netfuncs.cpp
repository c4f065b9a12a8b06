#include "chainsim/netfuncs.hpp"

#include <cmath>

namespace chainsim {

Packet encode_transform(Packet p, double ratio) {
    if (ratio <= 0.0 || ratio > 1.0)
        throw InvalidSpecError("compression ratio must be in (0,1], got " + std::to_string(ratio));
    p.payload_bytes = uint32_t(std::ceil(double(p.payload_bytes) * ratio));
    return p;
}

std::vector<Packet> crop_transform(const Packet& p,
                                   const std::vector<std::pair<EndpointId, double>>& fractions) {
    std::vector<Packet> out;
    std::optional<EndpointId> pinned;
    if (const Tlv* t = p.find_tlv(TLV_DEST)) pinned = read_u32_tlv(*t);
    for (const auto& [dest, keep] : fractions) {
        if (keep < 0.0 || keep > 1.0)
            throw InvalidSpecError("crop fraction must be in [0,1], got " + std::to_string(keep));
        if (pinned && *pinned != dest) continue;
        Packet c = p;
        c.payload_bytes = uint32_t(std::ceil(double(p.payload_bytes) * keep));
        c.set_tlv(make_u32_tlv(TLV_DEST, dest));
        out.push_back(std::move(c));
    }
    return out;
}

Packet partial_drop_transform(Packet p, double fraction) {
    if (fraction < 0.0 || fraction > 1.0)
        throw InvalidSpecError("drop fraction must be in [0,1], got " + std::to_string(fraction));
    if (fraction == 0.0) return p;
    p.payload_bytes = uint32_t(std::ceil(double(p.payload_bytes) * (1.0 - fraction)));
    p.set_tlv(make_f64_tlv(TLV_DEGRADED, fraction));
    return p;
}

Packet bundle_packets(const std::vector<Packet>& ps) {
    if (ps.empty()) throw InvalidSpecError("cannot bundle zero packets");
    Packet out = ps.front();
    std::vector<uint64_t> seqs;
    uint64_t payload = 0;
    uint64_t skip = 0;
    for (const Packet& p : ps) {
        if (p.flow != out.flow) throw InvalidSpecError("bundling across flows is not allowed");
        payload += p.payload_bytes;
        seqs.push_back(p.seq);
        // Abandonment markers must survive the merge or receivers would
        // wait forever on seqs the sender gave up before the bundle point.
        if (const Tlv* t = p.find_tlv(TLV_SKIP))
            skip = std::max(skip, read_escalate_tlv(*t).seq);
    }
    out.payload_bytes = uint32_t(payload);
    out.set_tlv(make_bundle_tlv(seqs));
    if (skip) out.set_tlv(make_skip_tlv(out.flow, skip));
    return out;
}

////////////////////////////////////////////////////////////////////////////////
// Resequencer

Resequencer::Outcome Resequencer::drain(FlowState& st) {
    Outcome o;
    while (!st.held.empty() && st.held.begin()->first == st.next) {
        o.release.push_back(std::move(st.held.begin()->second));
        st.held.erase(st.held.begin());
        st.next++;
    }
    if (!st.held.empty()) {
        o.want_timer = true;
        o.timer_gap_seq = st.next;
    }
    return o;
}

Resequencer::Outcome Resequencer::push(FlowId flow, Packet p) {
    FlowState& st = _flows[flow];
    if (!st.started) {
        // The stream may begin at any seq; lock on to the first arrival.
        st.next = p.seq;
        st.started = true;
    }
    if (p.seq < st.next || st.held.count(p.seq)) {
        Outcome o;
        o.stale.push_back(std::move(p));
        if (!st.held.empty()) {
            o.want_timer = true;
            o.timer_gap_seq = st.next;
        }
        return o;
    }
    st.held.emplace(p.seq, std::move(p));
    return drain(st);
}

Resequencer::Outcome Resequencer::expire(FlowId flow) {
    auto it = _flows.find(flow);
    if (it == _flows.end() || it->second.held.empty()) return {};
    it->second.next = it->second.held.begin()->first;
    return drain(it->second);
}

} // namespace chainsim
