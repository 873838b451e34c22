#include "node.hpp"

namespace icp2p {

const char* node_state_name(NodeState s) {
    switch (s) {
        case NodeState::Idle: return "idle";
        case NodeState::Training: return "training";
        case NodeState::Evaluating: return "evaluating";
        case NodeState::AwaitingModel: return "awaiting-model";
        case NodeState::Broadcasting: return "broadcasting";
        case NodeState::Terminated: return "terminated";
    }
    return "?";
}

namespace {

[[noreturn]] void illegal(const NodeCore& node, const char* what) {
    throw ProtocolError("node " + std::to_string(node.id) + " in state " +
                        node_state_name(node.state) + ": illegal event: " + what);
}

std::vector<Outgoing> on_model_packet(NodeCore& node, const ModelPacket& packet) {
    if (node.state != NodeState::AwaitingModel) illegal(node, "model packet");
    if (packet.has_directive) packet.directive.check();

    if (packet.has_directive && packet.directive.converged) {
        // Final-model broadcast: the packet carries the converged weights.
        // Adopt, forward once along the directive's ring, stop at the origin.
        if (packet.directive.origin_id < 0) illegal(node, "converged directive without origin");
        node.directive = packet.directive;
        node.state = NodeState::Broadcasting;
        const int32_t succ = node.directive.successor_of(node.id);
        std::vector<Outgoing> out;
        if (succ != node.directive.origin_id) {
            ModelPacket fwd = packet;
            fwd.sender = node.id;
            out.push_back({succ, fwd});
        }
        return out;
    }

    if (packet.has_directive) node.directive = packet.directive; // cycle-boundary adoption
    node.state = NodeState::Training;
    return {};
}

std::vector<Outgoing> on_message(NodeCore& node, const WireMessage& msg) {
    if (std::holds_alternative<ScoreReport>(msg)) return {}; // absorbed anywhere live
    if (const auto* packet = std::get_if<ModelPacket>(&msg)) return on_model_packet(node, *packet);
    illegal(node, "bare directive on the wire");
}

std::vector<Outgoing> on_evaluation_complete(NodeCore& node, const EvEvaluationComplete& ev) {
    if (ev.decision.has_value() != node.is_cycle_end())
        illegal(node, ev.decision ? "decision from a mid-cycle node"
                                  : "cycle-end node without a decision");

    std::vector<Outgoing> out;
    if (!ev.decision) {
        ModelPacket packet = ev.packet;
        packet.check();
        out.push_back({node.directive.successor_of(node.id), packet});
        if (ev.report) {
            ev.report->check();
            out.push_back({node.directive.sequence.back(), *ev.report});
        }
        node.state = NodeState::AwaitingModel;
        return out;
    }

    const ControlDirective& decision = *ev.decision;
    decision.check();
    if (decision.converged) {
        // Ship the final weights around the ring inside the packet.
        ModelPacket packet = ev.packet;
        packet.has_directive = true;
        packet.directive = decision;
        packet.directive.origin_id = node.id;
        packet.check();
        node.directive = packet.directive;
        node.state = NodeState::Broadcasting;
        out.push_back({node.directive.successor_of(node.id), packet});
        return out;
    }

    ModelPacket packet = ev.packet;
    packet.has_directive = true;
    packet.directive = decision;
    packet.check();
    out.push_back({decision.sequence.front(), packet});
    node.directive = decision;
    node.state = NodeState::AwaitingModel;
    return out;
}

} // namespace

std::vector<Outgoing> advance(NodeCore& node, const NodeEvent& event) {
    if (node.state == NodeState::Terminated) illegal(node, "terminated node received an event");

    if (const auto* start = std::get_if<EvStart>(&event)) {
        (void)start;
        if (node.state != NodeState::Idle) illegal(node, "start");
        node.directive.check();
        node.state =
            node.directive.sequence.front() == node.id ? NodeState::Training : NodeState::AwaitingModel;
        return {};
    }
    if (const auto* msg = std::get_if<EvMessage>(&event)) {
        if (node.state == NodeState::Idle) illegal(node, "message before start");
        if (node.state == NodeState::Broadcasting) illegal(node, "message while broadcasting");
        if (std::holds_alternative<ScoreReport>(msg->msg)) return {};
        if (node.state == NodeState::Training || node.state == NodeState::Evaluating) {
            if (std::holds_alternative<ModelPacket>(msg->msg)) illegal(node, "model packet mid-round");
        }
        return on_message(node, msg->msg);
    }
    if (std::holds_alternative<EvTrainingComplete>(event)) {
        if (node.state != NodeState::Training) illegal(node, "training-complete");
        node.state = NodeState::Evaluating;
        return {};
    }
    if (const auto* ev = std::get_if<EvEvaluationComplete>(&event)) {
        if (node.state != NodeState::Evaluating) illegal(node, "evaluation-complete");
        return on_evaluation_complete(node, *ev);
    }
    // EvBroadcastComplete
    if (node.state != NodeState::Broadcasting) illegal(node, "broadcast-complete");
    node.state = NodeState::Terminated;
    return {};
}

} // namespace icp2p
