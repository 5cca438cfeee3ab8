/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include "fedweaver/simnet.hpp"

#include "fedweaver/crypto.hpp"
#include "fedweaver/wire.hpp"

namespace fedweaver::simnet {

namespace {

std::string sanitize(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (char c : text) {
        out.push_back(c == '\n' || c == '\r' ? ' ' : c);
    }
    return out;
}

// Message type for the audit trail without a full payload parse.
std::string payload_type(std::string_view payload) {
    std::size_t pos = 0;
    while (pos < payload.size()) {
        std::size_t eol = payload.find('\n', pos);
        std::string_view line = payload.substr(
            pos, eol == std::string_view::npos ? payload.size() - pos : eol - pos);
        if (line.starts_with("type=")) {
            return std::string(line.substr(5));
        }
        if (eol == std::string_view::npos) {
            break;
        }
        pos = eol + 1;
    }
    return "?";
}

std::uint64_t stream_seed(std::uint64_t seed, std::string_view label) {
    Bytes digest = crypto::derive_seed32(seed, label);
    std::uint64_t out = 0;
    for (int i = 0; i < 8; ++i) {
        out |= static_cast<std::uint64_t>(digest[i]) << (8 * i);
    }
    return out;
}

} // namespace

void AuditLog::append(Tick t, std::string_view entity, std::string_view event,
                      std::string_view correlation_id, std::string_view outcome,
                      std::string_view detail) {
    std::string line = "t=" + std::to_string(t);
    line += " entity=";
    line += sanitize(entity);
    line += " event=";
    line += sanitize(event);
    line += " corr=";
    line += correlation_id.empty() ? std::string("-") : sanitize(correlation_id);
    line += " outcome=";
    line += outcome.empty() ? std::string("-") : sanitize(outcome);
    line += " detail=";
    line += detail.empty() ? std::string("-") : sanitize(detail);
    lines_.push_back(std::move(line));
}

std::string AuditLog::text() const {
    std::string out;
    for (const std::string& line : lines_) {
        out += line;
        out.push_back('\n');
    }
    return out;
}

Network::Network(NetworkPolicy policy, AuditLog& audit)
    : policy_(policy), audit_(audit), app_rng_(stream_seed(policy.seed, "app")),
      fault_rng_(stream_seed(policy.seed, "fault")) {}

void Network::register_entity(Entity& entity) {
    entities_[entity.id()] = &entity;
}

Result<Unit, NetError> Network::send(std::string_view from, std::string_view to,
                                     std::string_view correlation_id, std::string payload) {
    if (entities_.find(std::string(to)) == entities_.end()) {
        return NetError{NetError::Code::UnknownEndpoint,
                        "no endpoint registered for '" + std::string(to) + "'"};
    }
    Envelope envelope;
    envelope.seq = next_seq_++;
    envelope.from = std::string(from);
    envelope.to = std::string(to);
    envelope.correlation_id = std::string(correlation_id);
    envelope.payload = std::move(payload);
    envelope.sent_at = now_;
    envelope.delivered_at = now_ + policy_.base_latency;

    std::string detail = "to:" + envelope.to + " type:" + payload_type(envelope.payload) +
                         " seq:" + std::to_string(envelope.seq);
    audit_.append(now_, envelope.from, "send", envelope.correlation_id, "queued", detail);

    if (policy_.drop_probability > 0.0 && fault_rng_.next_unit() < policy_.drop_probability) {
        audit_.append(now_, envelope.to, "drop", envelope.correlation_id, "dropped", detail);
        return Unit{};
    }
    queue_.emplace(std::make_pair(envelope.delivered_at, envelope.seq), std::move(envelope));
    return Unit{};
}

Result<Unit, NetError> Network::run_until_idle(std::uint64_t max_events) {
    std::uint64_t delivered = 0;
    while (!queue_.empty()) {
        if (delivered >= max_events) {
            return NetError{NetError::Code::LivelockGuard,
                            "event cap " + std::to_string(max_events) + " exceeded"};
        }
        auto first = queue_.begin();
        Envelope envelope = std::move(first->second);
        queue_.erase(first);
        now_ = std::max(now_, envelope.delivered_at);
        ++delivered;

        audit_.append(now_, envelope.to, "deliver", envelope.correlation_id, "ok",
                      "from:" + envelope.from + " type:" + payload_type(envelope.payload) +
                          " seq:" + std::to_string(envelope.seq));
        Entity* recipient = entities_.at(envelope.to);
        NetContext ctx(*this, envelope.to);
        recipient->on_envelope(envelope, ctx);
    }
    return Unit{};
}

void NetContext::send(std::string_view to, std::string_view correlation_id,
                      std::string payload) {
    auto sent = network_.send(self_, to, correlation_id, std::move(payload));
    if (!sent.ok()) {
        network_.audit().append(network_.now(), self_, "send", correlation_id, "error",
                                sent.error().detail);
    }
}

void NetContext::audit(std::string_view event, std::string_view correlation_id,
                       std::string_view outcome, std::string_view detail) {
    network_.audit().append(network_.now(), self_, event, correlation_id, outcome, detail);
}

} // namespace fedweaver::simnet
