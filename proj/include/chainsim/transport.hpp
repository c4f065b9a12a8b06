#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "chainsim/packet.hpp"
#include "chainsim/types.hpp"

namespace chainsim {

////////////////////////////////////////////////////////////////////////////////
// Congestion control laws (Reno family)

// Window arithmetic kept on exact integer-valued doubles so the doubling and
// +1-per-RTT laws test as exact equalities.
struct LaneCca {
    double cwnd = 1.0;
    double ssthresh = 64.0;
    double ca_acks = 0.0; // ack counter for additive increase
    double srtt = 0.0;
    double rttvar = 0.0;
    double rto = 1.0;
    double rto_min = 0.0;

    // Seed the estimator from the static path RTT before any sample exists.
    void init(double static_rtt, double min_rto) {
        srtt = static_rtt;
        rttvar = static_rtt / 2.0;
        rto_min = min_rto;
        refresh_rto();
    }
    void refresh_rto() { rto = std::max(srtt + 4.0 * rttvar, rto_min); }

    void on_rtt_sample(double sample) {
        rttvar += (std::abs(srtt - sample) - rttvar) / 4.0;
        srtt += (sample - srtt) / 8.0;
        refresh_rto();
    }
    // One newly acknowledged packet.
    void on_new_ack() {
        if (cwnd < ssthresh) {
            cwnd += 1.0;
        } else {
            ca_acks += 1.0;
            if (ca_acks >= cwnd) {
                cwnd += 1.0;
                ca_acks = 0.0;
            }
        }
    }
    void on_triple_dup() {
        cwnd = std::max(std::floor(cwnd / 2.0), 1.0);
        ssthresh = cwnd;
        ca_acks = 0.0;
    }
    void on_timeout() {
        ssthresh = std::max(std::floor(cwnd / 2.0), 1.0);
        cwnd = 1.0;
        ca_acks = 0.0;
    }
};

////////////////////////////////////////////////////////////////////////////////
// Retransmission cache

// Byte-budgeted store of forwarded packets, evicting the lowest class first
// and least-recently-touched within a class.
class PacketCache {
  public:
    explicit PacketCache(uint64_t budget_bytes) : _budget(budget_bytes) {}

    struct Entry {
        Packet pkt;
        double first_sent = 0.0;
        int priority = 7;
        uint64_t lru = 0;
    };

    // False when the packet alone exceeds the budget. Evicts as needed.
    bool put(FlowId flow, SeqNo seq, Packet pkt, double first_sent, int priority);
    const Entry* get(FlowId flow, SeqNo seq);
    void erase(FlowId flow, SeqNo seq);
    // Drop everything at or below `upto` for a flow (acked data).
    void prune_below(FlowId flow, SeqNo upto);

    uint64_t used_bytes() const { return _used; }
    uint64_t budget() const { return _budget; }
    uint64_t evictions() const { return _evictions; }
    size_t size() const { return _entries.size(); }

  private:
    void evict_one();
    uint64_t _budget;
    uint64_t _used = 0;
    uint64_t _evictions = 0;
    uint64_t _tick = 0;
    std::map<std::pair<FlowId, SeqNo>, Entry> _entries;
};

////////////////////////////////////////////////////////////////////////////////
// Weighted round robin

// Deterministic packet-at-a-time WRR over flows. Weight function supplied by
// the caller at pick time so priority changes take effect immediately.
class WrrScheduler {
  public:
    // Choose among flows with backlog, given in ascending id order. Returns
    // the flow to serve next. `weight_of` maps flow -> positive weight.
    template <typename WeightFn>
    std::optional<FlowId> pick(const std::vector<FlowId>& backlogged, WeightFn weight_of) {
        if (backlogged.empty()) return std::nullopt;
        // Resume the round at the current flow while it has quantum left.
        for (size_t attempts = 0; attempts <= backlogged.size(); attempts++) {
            if (_quantum > 0) {
                for (FlowId f : backlogged) {
                    if (f == _current) {
                        _quantum--;
                        return f;
                    }
                }
                _quantum = 0; // current flow has no backlog; move on
            }
            // Advance to the next backlogged flow after _current in id order.
            FlowId next = backlogged.front();
            bool found = false;
            for (FlowId f : backlogged) {
                if (f > _current) {
                    next = f;
                    found = true;
                    break;
                }
            }
            if (!found) next = backlogged.front(); // wrap
            _current = next;
            _quantum = std::max(1, weight_of(next));
        }
        return std::nullopt; // unreachable with nonempty input
    }

  private:
    FlowId _current = 0;
    int _quantum = 0;
};

// Priority-to-weight rule used by assistants: better classes get more turns.
inline int priority_weight(int priority) { return std::max(1, 8 - priority); }

////////////////////////////////////////////////////////////////////////////////
// Receiver-side ack bookkeeping

// Tracks cumulative progress and gaps for one flow at a segment receiver.
struct RecvTracker {
    SeqNo cum = 0; // everything below this arrived (or was skipped)
    std::set<SeqNo> above; // received seqs >= cum

    // Returns true when this seq is a first arrival.
    bool on_data(SeqNo seq) {
        if (seq < cum || above.count(seq)) return false;
        above.insert(seq);
        while (above.count(cum)) {
            above.erase(cum);
            cum++;
        }
        return true;
    }
    // Sender told us to stop expecting everything below `upto`.
    void skip_to(SeqNo upto) {
        if (upto <= cum) return;
        for (auto it = above.begin(); it != above.end() && *it < upto;) it = above.erase(it);
        cum = std::max(cum, upto);
        while (above.count(cum)) {
            above.erase(cum);
            cum++;
        }
    }
    std::vector<std::pair<uint64_t, uint64_t>> gaps() const {
        std::vector<std::pair<uint64_t, uint64_t>> out;
        SeqNo at = cum;
        for (SeqNo s : above) {
            if (s > at) out.emplace_back(at, s);
            at = s + 1;
        }
        return out;
    }
};

} // namespace chainsim
