#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace catalpa {

using Word = std::uint64_t;
using Address = std::uintptr_t;

inline constexpr std::size_t kWordBytes = sizeof(Word);

/// Raised when a HeapConfig violates its invariants or the reservation fails.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when the mutator breaks the interface contract (arity, ref mask,
/// frozen registry, LIFO root frames, ...).
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Recoverable allocation failure: no page could be found even after collecting.
class OutOfMemory : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Internal corruption detected by the collector (rc underflow, overflow, ...).
class InvariantViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

struct HeapConfig {
    std::size_t page_bytes = 4096;
    std::size_t nursery_threshold_bytes = std::size_t{2} << 20;
    std::size_t heap_reserve_bytes = std::size_t{256} << 20;

    // Release budget per collection is ceil(N * num / den).
    std::uint32_t decrement_budget_num = 3;
    std::uint32_t decrement_budget_den = 2;

    double bin_width = 0.05;

    std::size_t root_capacity_words = std::size_t{1} << 16;
    std::size_t global_words = 256;

    /// Throws ConfigError describing the first violated invariant.
    void validate() const;

    /// ceil(allocations * budget factor)
    std::size_t release_budget(std::size_t allocations) const noexcept {
        return (allocations * decrement_budget_num + decrement_budget_den - 1) / decrement_budget_den;
    }
};

} // namespace catalpa
