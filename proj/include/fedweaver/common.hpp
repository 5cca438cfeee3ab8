/*
 * SPDX-License-Identifier: Apache-2.0
 */
#ifndef FEDWEAVER_COMMON_HPP
#define FEDWEAVER_COMMON_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace fedweaver {

/// Logical simulation time. Every expiry comparison in the testbed uses
/// ticks; nothing reads the wall clock.
using Tick = std::uint64_t;

using Bytes = std::vector<unsigned char>;

struct Unit {};

/// Minimal success-or-error carrier. T and E must be distinct types.
template <typename T, typename E>
class Result {
public:
    Result(T value) : state_(std::in_place_index<0>, std::move(value)) {}
    Result(E error) : state_(std::in_place_index<1>, std::move(error)) {}

    bool ok() const { return state_.index() == 0; }
    explicit operator bool() const { return ok(); }

    T& value() & { return std::get<0>(state_); }
    const T& value() const& { return std::get<0>(state_); }
    T&& take() { return std::get<0>(std::move(state_)); }

    E& error() & { return std::get<1>(state_); }
    const E& error() const& { return std::get<1>(state_); }

private:
    std::variant<T, E> state_;
};

} // namespace fedweaver

#endif
