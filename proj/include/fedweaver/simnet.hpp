/*
 * SPDX-License-Identifier: Apache-2.0
 */
#ifndef FEDWEAVER_SIMNET_HPP
#define FEDWEAVER_SIMNET_HPP

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "fedweaver/common.hpp"
#include "fedweaver/rng.hpp"

namespace fedweaver::simnet {

struct Envelope {
    std::uint64_t seq = 0; // unique and gapless per run, assigned at send
    std::string from;
    std::string to;
    std::string correlation_id;
    std::string payload; // one canonical record per message
    Tick sent_at = 0;
    Tick delivered_at = 0;
};

struct NetworkPolicy {
    Tick base_latency = 1;
    double drop_probability = 0.0;
    std::uint64_t seed = 0;
};

/// Append-only, line-delimited run log with a stable field order:
///   t=<tick> entity=<id> event=<kind> corr=<id> outcome=<s> detail=<s>
/// Byte-identical across runs of the same (scenario, seed).
class AuditLog {
public:
    void append(Tick t, std::string_view entity, std::string_view event,
                std::string_view correlation_id, std::string_view outcome,
                std::string_view detail = "");

    const std::vector<std::string>& lines() const { return lines_; }
    std::string text() const;

private:
    std::vector<std::string> lines_;
};

class NetContext;

/// A sequential state machine addressed by entity id. Handlers run one at
/// a time; all cross-entity interaction goes through envelopes.
class Entity {
public:
    virtual ~Entity() = default;
    virtual const std::string& id() const = 0;
    virtual void on_envelope(const Envelope& envelope, NetContext& ctx) = 0;
};

struct NetError {
    enum class Code { UnknownEndpoint, LivelockGuard };
    Code code;
    std::string detail;
};

/// Single-threaded deterministic message loop. Delivery order is
/// (delivered_at, seq); ties cannot occur since seq is unique.
class Network {
public:
    Network(NetworkPolicy policy, AuditLog& audit);

    void register_entity(Entity& entity);

    Result<Unit, NetError> send(std::string_view from, std::string_view to,
                                std::string_view correlation_id, std::string payload);

    /// Delivers queued envelopes until the queue drains, advancing the
    /// logical clock to each envelope's due tick. Stops with LivelockGuard
    /// after max_events deliveries.
    Result<Unit, NetError> run_until_idle(std::uint64_t max_events = 100000);

    Tick now() const { return now_; }
    void advance_clock(Tick by) { now_ += by; }

    /// Seeded stream for application randomness (opaque ids, nonces,
    /// salts). Fault decisions draw from a separate stream so enabling
    /// drops does not shift credential bytes.
    DeterministicRng& rng() { return app_rng_; }

    AuditLog& audit() { return audit_; }

private:
    NetworkPolicy policy_;
    AuditLog& audit_;
    DeterministicRng app_rng_;
    DeterministicRng fault_rng_;
    Tick now_ = 0;
    std::uint64_t next_seq_ = 1;
    std::map<std::string, Entity*> entities_;
    std::map<std::pair<Tick, std::uint64_t>, Envelope> queue_;
};

/// Handler-side view of the network: send follow-ups, read the clock,
/// draw randomness, append audit events as the handling entity.
class NetContext {
public:
    NetContext(Network& network, std::string self) : network_(network), self_(std::move(self)) {}

    void send(std::string_view to, std::string_view correlation_id, std::string payload);
    Tick now() const { return network_.now(); }
    DeterministicRng& rng() { return network_.rng(); }
    void audit(std::string_view event, std::string_view correlation_id,
               std::string_view outcome, std::string_view detail = "");

private:
    Network& network_;
    std::string self_;
};

} // namespace fedweaver::simnet

#endif
