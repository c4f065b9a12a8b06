#pragma once

#include <vector>

#include "chainsim/types.hpp"

namespace chainsim {

enum class Reliability : uint8_t {
    none = 0,
    full = 1,
    partial = 2, // retransmit only while the deadline can still be met
};

// Per-flow service demands. Values may change mid-run (never retroactively);
// the runtime re-reads them when forwarding.
struct FlowRequirement {
    FlowId flow_id = 0;
    EndpointId source = 0;
    std::vector<EndpointId> destinations;
    double min_throughput = 0.0; // bits/s
    double max_e2e_delay = 0.0;  // s, 0 = unbounded
    double max_loss_ratio = 1.0;
    Reliability reliability = Reliability::none;
    double deadline = 0.0;       // s, only meaningful for partial reliability
    int priority = 7;            // 0 = highest

    void check() const {
        if (max_loss_ratio < 0.0 || max_loss_ratio > 1.0)
            throw InvalidSpecError("flow " + std::to_string(flow_id) + ": max_loss_ratio out of [0,1]");
        if (max_e2e_delay < 0.0)
            throw InvalidSpecError("flow " + std::to_string(flow_id) + ": negative max_e2e_delay");
        if (reliability == Reliability::partial && deadline <= 0.0)
            throw InvalidSpecError("flow " + std::to_string(flow_id) + ": partial reliability needs a deadline");
        if (priority < 0)
            throw InvalidSpecError("flow " + std::to_string(flow_id) + ": negative priority");
    }
};

} // namespace chainsim
