#include "chainsim/packet_queue.hpp"

#include <algorithm>

namespace chainsim {

int PacketQueue::packet_priority(const Packet& p) {
    if (const Tlv* t = p.find_tlv(TLV_PRIORITY)) return read_priority_tlv(*t);
    return 7;
}

bool PacketQueue::enqueue(Packet p, SimTime now, std::vector<Packet>* evicted) {
    size_t sz = p.wire_size();
    int prio = packet_priority(p);
    if (sz > _capacity) {
        _drops++;
        return false;
    }
    if (_discipline == QueueDiscipline::strict_priority) {
        // Shed from the worst class present while the arrival outranks it,
        // newest victim first within that class.
        while (_occupancy + sz > _capacity) {
            auto victim = _slots.end();
            for (auto it = _slots.begin(); it != _slots.end(); ++it) {
                if (victim == _slots.end() || it->priority >= victim->priority) victim = it;
            }
            if (victim == _slots.end() || victim->priority <= prio) break;
            _occupancy -= victim->packet.wire_size();
            _drops++;
            if (evicted) evicted->push_back(std::move(victim->packet));
            _slots.erase(victim);
        }
    }
    if (_occupancy + sz > _capacity) {
        _drops++;
        return false;
    }
    _occupancy += sz;
    if (_discipline == QueueDiscipline::strict_priority) {
        // Insert behind the last packet of equal-or-better class, keeping fifo
        // order inside each class.
        auto pos = _slots.end();
        while (pos != _slots.begin()) {
            auto prev = std::prev(pos);
            if (prev->priority <= prio) break;
            pos = prev;
        }
        _slots.insert(pos, Slot{std::move(p), now, prio});
    } else {
        _slots.push_back(Slot{std::move(p), now, prio});
    }
    return true;
}

std::optional<PacketQueue::Slot> PacketQueue::dequeue() {
    if (_slots.empty()) return std::nullopt;
    Slot s = std::move(_slots.front());
    _slots.pop_front();
    _occupancy -= s.packet.wire_size();
    return s;
}

const PacketQueue::Slot* PacketQueue::peek() const {
    return _slots.empty() ? nullptr : &_slots.front();
}

} // namespace chainsim
