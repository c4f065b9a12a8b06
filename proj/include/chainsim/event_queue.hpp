#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <queue>
#include <set>
#include <vector>

#include "chainsim/types.hpp"

namespace chainsim {

using EventHandle = uint64_t;

// Lexicographic (time, seq) event queue. seq is a monotone insertion counter,
// so equal-time events run in schedule order. Cancellation is lazy: handles
// land in a tombstone set and the pop loop skips them.
class EventQueue {
  public:
    EventHandle schedule(SimTime t, std::function<void()> action) {
        if (t < _now) throw PastEventError("schedule at t=" + std::to_string(t) +
                                           " before now=" + std::to_string(_now));
        EventHandle h = _next_seq++;
        _heap.push(Entry{t, h});
        _actions.emplace(h, std::move(action));
        return h;
    }

    void cancel(EventHandle h) {
        if (_actions.erase(h)) _cancelled.insert(h);
    }

    bool empty() const { return _actions.empty(); }
    SimTime now() const { return _now; }
    size_t executed() const { return _executed; }

    // Runs events with time <= until, then advances now to until.
    void run_until(SimTime until) {
        while (!_heap.empty()) {
            Entry e = _heap.top();
            if (_cancelled.count(e.seq)) {
                _heap.pop();
                _cancelled.erase(e.seq);
                continue;
            }
            if (e.time > until) break;
            _heap.pop();
            auto it = _actions.find(e.seq);
            if (it == _actions.end()) continue;
            std::function<void()> act = std::move(it->second);
            _actions.erase(it);
            _now = e.time;
            _executed++;
            act();
        }
        if (until > _now) _now = until;
    }

  private:
    struct Entry {
        SimTime time;
        EventHandle seq;
        bool operator>(const Entry& o) const {
            return time != o.time ? time > o.time : seq > o.seq;
        }
    };
    std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> _heap;
    std::map<EventHandle, std::function<void()>> _actions;
    std::set<EventHandle> _cancelled;
    EventHandle _next_seq = 1;
    SimTime _now = 0.0;
    size_t _executed = 0;
};

} // namespace chainsim
