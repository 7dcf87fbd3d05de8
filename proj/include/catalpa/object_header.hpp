#pragma once

#include "catalpa/config.hpp"

#include <cstdint>
#include <limits>

namespace catalpa {

using TypeId = std::uint16_t;

// Single metadata word at the base of every allocated slot:
//
//   bits  0..31  reference count (heap in-edges only)
//   bits 32..47  type id
//   bit  48      mark      (young objects, during a collection)
//   bit  49      old       (RC space)
//   bit  50      rootref   (in the current root snapshot)
//   bit  51      forwarded (husk; forwarding address in the first field)
//   bit  52      queued    (on the decrement worklist)
class ObjectHeader {
public:
    static constexpr Word kRcMask = 0xffff'ffffULL;
    static constexpr unsigned kTypeShift = 32;
    static constexpr Word kTypeMask = 0xffffULL << kTypeShift;
    static constexpr Word kMark = Word{1} << 48;
    static constexpr Word kOld = Word{1} << 49;
    static constexpr Word kRootRef = Word{1} << 50;
    static constexpr Word kForwarded = Word{1} << 51;
    static constexpr Word kQueued = Word{1} << 52;

    constexpr ObjectHeader() = default;
    constexpr explicit ObjectHeader(Word bits) : bits_(bits) {}

    static constexpr ObjectHeader fresh(TypeId type) {
        return ObjectHeader(static_cast<Word>(type) << kTypeShift);
    }

    constexpr Word bits() const { return bits_; }

    constexpr TypeId type() const { return static_cast<TypeId>((bits_ & kTypeMask) >> kTypeShift); }
    constexpr std::uint32_t rc() const { return static_cast<std::uint32_t>(bits_ & kRcMask); }

    constexpr bool marked() const { return (bits_ & kMark) != 0; }
    constexpr bool old() const { return (bits_ & kOld) != 0; }
    constexpr bool young() const { return !old(); }
    constexpr bool rootref() const { return (bits_ & kRootRef) != 0; }
    constexpr bool forwarded() const { return (bits_ & kForwarded) != 0; }
    constexpr bool queued() const { return (bits_ & kQueued) != 0; }

    constexpr void set(Word flag, bool on) { bits_ = on ? (bits_ | flag) : (bits_ & ~flag); }

    void increment() {
        if (rc() == std::numeric_limits<std::uint32_t>::max()) {
            throw InvariantViolation("reference count overflow");
        }
        ++bits_;
    }

    void decrement() {
        if (rc() == 0) {
            throw InvariantViolation("reference count decremented below zero");
        }
        --bits_;
    }

private:
    Word bits_ = 0;
};

static_assert(sizeof(ObjectHeader) == sizeof(Word));

/// View of an object in heap memory: header word followed by its fields.
inline ObjectHeader& header_at(Address a) { return *reinterpret_cast<ObjectHeader*>(a); }
inline Word* fields_at(Address a) { return reinterpret_cast<Word*>(a) + 1; }

} // namespace catalpa
