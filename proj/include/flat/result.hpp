#pragma once

#include <cassert>
#include <utility>
#include <variant>

namespace flat {

/// Minimal expected-style result: either a value or a typed error.
/// Protocol and codec failures are ordinary values here, not exceptions —
/// adversarial inputs are an expected outcome, and callers must branch on them.
template <typename T, typename E>
class Result {
public:
    Result(T value) : data_(std::in_place_index<0>, std::move(value)) {}
    Result(E error) : data_(std::in_place_index<1>, std::move(error)) {}

    static Result ok(T value) { return Result(std::move(value)); }
    static Result err(E error) { return Result(std::move(error)); }

    bool has_value() const { return data_.index() == 0; }
    explicit operator bool() const { return has_value(); }

    T& value() {
        assert(has_value());
        return std::get<0>(data_);
    }
    const T& value() const {
        assert(has_value());
        return std::get<0>(data_);
    }
    E error() const {
        assert(!has_value());
        return std::get<1>(data_);
    }

    T& operator*() { return value(); }
    const T& operator*() const { return value(); }
    T* operator->() { return &value(); }
    const T* operator->() const { return &value(); }

private:
    std::variant<T, E> data_;
};

}  // namespace flat
