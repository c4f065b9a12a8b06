#pragma once

#include <deque>
#include <optional>

#include "chainsim/packet.hpp"
#include "chainsim/types.hpp"

namespace chainsim {

enum class QueueDiscipline { fifo, strict_priority };

// Byte-bounded packet queue in front of a link or function. Under
// strict_priority a full queue makes room for a higher-class arrival by
// evicting from the lowest class present (newest victim first); fifo is
// plain tail drop. Packets waiting here accrue queuing delay, charged by
// the caller at dequeue time.
class PacketQueue {
  public:
    PacketQueue(QueueDiscipline disc, size_t capacity_bytes)
        : _discipline(disc), _capacity(capacity_bytes) {}

    struct Slot {
        Packet packet;
        SimTime enqueued_at;
        int priority; // 0 = highest
    };

    // Returns true when accepted. evicted receives any packets shed to make
    // room (strict_priority only).
    bool enqueue(Packet p, SimTime now, std::vector<Packet>* evicted = nullptr);

    std::optional<Slot> dequeue();
    const Slot* peek() const;

    size_t occupancy_bytes() const { return _occupancy; }
    size_t capacity_bytes() const { return _capacity; }
    size_t size() const { return _slots.size(); }
    bool empty() const { return _slots.empty(); }
    uint64_t drops() const { return _drops; }
    QueueDiscipline discipline() const { return _discipline; }

  private:
    static int packet_priority(const Packet& p);

    QueueDiscipline _discipline;
    size_t _capacity;
    size_t _occupancy = 0;
    uint64_t _drops = 0;
    std::deque<Slot> _slots;
};

} // namespace chainsim
