#pragma once

#include <deque>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "chainsim/packet.hpp"
#include "chainsim/types.hpp"

namespace chainsim {

////////////////////////////////////////////////////////////////////////////////
// Pure payload transforms

// Compression: payload scaled by ratio in (0, 1].
Packet encode_transform(Packet p, double ratio);

// One copy per destination, payload scaled by that destination's retained
// fraction, copy pinned via a dest TLV. A packet already pinned to one
// destination yields only that copy.
std::vector<Packet> crop_transform(const Packet& p,
                                   const std::vector<std::pair<EndpointId, double>>& fractions);

// Drops `fraction` of the payload bytes and stamps a degradation TLV with
// the dropped fraction. fraction 0 returns the packet unchanged.
Packet partial_drop_transform(Packet p, double fraction);

// Merges same-flow packets into one carrying the summed payload and a
// bundle TLV listing member seqs. The first member's header and delay
// history carry forward. Throws InvalidSpec on mixed flows or empty input.
Packet bundle_packets(const std::vector<Packet>& ps);

////////////////////////////////////////////////////////////////////////////////
// Duplicate elimination

// Sliding dedup window per flow: remembers the last `window` seqs seen and
// admits only first copies. Old entries fall out FIFO, so a very late
// duplicate can be re-admitted (documented false-accept).
class DedupWindow {
  public:
    explicit DedupWindow(size_t window = 1024) : _window(window) {}

    bool accept(FlowId flow, SeqNo seq) {
        FlowWin& w = _flows[flow];
        if (w.seen.count(seq)) return false;
        w.seen.insert(seq);
        w.order.push_back(seq);
        if (w.order.size() > _window) {
            w.seen.erase(w.order.front());
            w.order.pop_front();
        }
        return true;
    }
    size_t window() const { return _window; }

  private:
    struct FlowWin {
        std::set<SeqNo> seen;
        std::deque<SeqNo> order;
    };
    size_t _window;
    std::map<FlowId, FlowWin> _flows;
};

////////////////////////////////////////////////////////////////////////////////
// Reordering

// Per-flow resequencer: releases strictly increasing seqs, waits on gaps up
// to a timeout, then skips. Late packets (seq below the release point) are
// surrendered to the caller as `stale`. The caller owns timers; push() and
// expire() report what to release and whether a timer is needed.
class Resequencer {
  public:
    struct Outcome {
        std::vector<Packet> release;
        std::vector<Packet> stale;
        bool want_timer = false; // arm a timer for `timer_gap_seq` if not armed
        SeqNo timer_gap_seq = 0;
    };

    Outcome push(FlowId flow, Packet p);
    // The gap timer for `flow` fired: skip ahead to the lowest held seq.
    Outcome expire(FlowId flow);
    bool has_flow(FlowId flow) const { return _flows.count(flow) != 0; }

  private:
    struct FlowState {
        SeqNo next = 0;
        bool started = false;
        std::map<SeqNo, Packet> held;
    };
    Outcome drain(FlowState& st);
    std::map<FlowId, FlowState> _flows;
};

} // namespace chainsim
