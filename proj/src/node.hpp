#pragma once

#include <optional>

#include "wire.hpp"

namespace icp2p {

enum class NodeState {
    Idle,
    Training,
    Evaluating,
    AwaitingModel,
    Broadcasting,
    Terminated,
};

const char* node_state_name(NodeState s);

/// Protocol-visible node state: identity, lifecycle state, and the directive
/// governing the node's routing. Training/evaluation math lives outside; the
/// events below carry its products.
struct NodeCore {
    int32_t id = -1;
    NodeState state = NodeState::Idle;
    ControlDirective directive;

    bool is_cycle_end() const { return !directive.sequence.empty() && directive.sequence.back() == id; }
};

struct EvStart {};
struct EvMessage {
    WireMessage msg;
};
struct EvTrainingComplete {};
struct EvEvaluationComplete {
    /// Packet prepared by the engine (params, reference gradient, metrics;
    /// directive filled in here for the cycle-end node).
    ModelPacket packet;
    /// Non-collector nodes ship their cycle score to the cycle-end node.
    std::optional<ScoreReport> report;
    /// Present iff this node is the cycle-end node: the controller decision
    /// for the next cycle (converged or not).
    std::optional<ControlDirective> decision;
};
struct EvBroadcastComplete {};

using NodeEvent =
    std::variant<EvStart, EvMessage, EvTrainingComplete, EvEvaluationComplete, EvBroadcastComplete>;

struct Outgoing {
    int32_t dest = -1;
    WireMessage msg;
};

/// Deterministic transition function. Mutates node, returns the messages to
/// send. Throws ProtocolError on an event that is illegal in the current
/// state, leaving the node unchanged.
///
/// Transition graph: Idle -> Training (initiator) or AwaitingModel (rest);
/// AwaitingModel + ModelPacket -> Training; Training + training-complete ->
/// Evaluating (no emission); Evaluating + evaluation-complete ->
/// AwaitingModel, emitting one ModelPacket to the ring successor (plus a
/// ScoreReport to the cycle-end node for non-collectors) — or Broadcasting
/// when this node decided convergence. Convergence travels as a ModelPacket
/// whose directive has converged set, so the final weights reach every node:
/// a receiver adopts it, forwards once along the directive's ring unless the
/// successor is the broadcast origin, and moves to Broadcasting;
/// Broadcasting + broadcast-complete -> Terminated. ScoreReports are
/// absorbed in any live state. Bare ControlDirective messages are protocol
/// errors (directives only ride inside ModelPackets). Terminated accepts
/// nothing.
std::vector<Outgoing> advance(NodeCore& node, const NodeEvent& event);

} // namespace icp2p
