#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace chainsim {

using PopId = uint32_t;
using LinkId = uint32_t;
using FlowId = uint32_t;
using EndpointId = uint32_t;
using InstanceId = uint32_t;
using SeqNo = uint64_t;

// Simulated time in seconds.
using SimTime = double;

// Table-of-delays decomposition carried by every packet.
enum class DelayComponent : uint8_t {
    propagation = 0,
    transmission,
    processing,
    queuing,
    retransmission,
    steering,
};
inline constexpr size_t kDelayComponentCount = 6;

inline const char* delay_component_name(DelayComponent c) {
    switch (c) {
    case DelayComponent::propagation: return "propagation";
    case DelayComponent::transmission: return "transmission";
    case DelayComponent::processing: return "processing";
    case DelayComponent::queuing: return "queuing";
    case DelayComponent::retransmission: return "retransmission";
    case DelayComponent::steering: return "steering";
    }
    return "?";
}

struct SimError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NoPathError : SimError { using SimError::SimError; };
struct MalformedHeader : SimError { using SimError::SimError; };
struct PastEventError : SimError { using SimError::SimError; };
struct UnknownTargetError : SimError { using SimError::SimError; };
struct InvalidSpecError : SimError { using SimError::SimError; };
struct InsufficientResources : SimError { using SimError::SimError; };
struct NotCommittedError : SimError { using SimError::SimError; };
struct UnknownFlowError : SimError { using SimError::SimError; };
struct PresetPreconditionFailed : SimError { using SimError::SimError; };

// Scenario file problems carry the offending line and field.
struct ParseError : SimError {
    ParseError(const std::string& msg, int line, const std::string& field)
        : SimError("line " + std::to_string(line) + ", " + field + ": " + msg),
          line(line), field(field) {}
    int line;
    std::string field;
};

struct SchemaError : ParseError {
    using ParseError::ParseError;
};

} // namespace chainsim
