#include "chainsim/transport.hpp"

namespace chainsim {

bool PacketCache::put(FlowId flow, SeqNo seq, Packet pkt, double first_sent, int priority) {
    uint64_t sz = pkt.wire_size();
    if (sz > _budget) return false;
    auto key = std::make_pair(flow, seq);
    if (auto it = _entries.find(key); it != _entries.end()) {
        _used -= it->second.pkt.wire_size();
        _entries.erase(it);
    }
    while (_used + sz > _budget) evict_one();
    Entry e;
    e.pkt = std::move(pkt);
    e.first_sent = first_sent;
    e.priority = priority;
    e.lru = ++_tick;
    _used += sz;
    _entries.emplace(key, std::move(e));
    return true;
}

void PacketCache::evict_one() {
    // Worst priority class first, then stalest within it.
    auto victim = _entries.end();
    for (auto it = _entries.begin(); it != _entries.end(); ++it) {
        if (victim == _entries.end() || it->second.priority > victim->second.priority ||
            (it->second.priority == victim->second.priority && it->second.lru < victim->second.lru))
            victim = it;
    }
    if (victim == _entries.end()) return;
    _used -= victim->second.pkt.wire_size();
    _entries.erase(victim);
    _evictions++;
}

const PacketCache::Entry* PacketCache::get(FlowId flow, SeqNo seq) {
    auto it = _entries.find({flow, seq});
    if (it == _entries.end()) return nullptr;
    it->second.lru = ++_tick;
    return &it->second;
}

void PacketCache::erase(FlowId flow, SeqNo seq) {
    auto it = _entries.find({flow, seq});
    if (it == _entries.end()) return;
    _used -= it->second.pkt.wire_size();
    _entries.erase(it);
}

void PacketCache::prune_below(FlowId flow, SeqNo upto) {
    auto it = _entries.lower_bound({flow, 0});
    while (it != _entries.end() && it->first.first == flow && it->first.second < upto) {
        _used -= it->second.pkt.wire_size();
        it = _entries.erase(it);
    }
}

} // namespace chainsim
