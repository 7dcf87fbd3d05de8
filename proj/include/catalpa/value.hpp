#pragma once

#include "catalpa/config.hpp"
#include "catalpa/object_header.hpp"

#include <bit>

namespace catalpa {

/// Handle to a heap object. Valid while the object is reachable from a root
/// frame; unrooted young objects may move at any allocation point, so re-read
/// them through a rooted parent after allocating.
struct ObjectRef {
    Address address = 0;
    TypeId type = 0;

    friend bool operator==(const ObjectRef&, const ObjectRef&) = default;
};

/// A field or root value: either an opaque word or an object reference.
class Value {
public:
    constexpr Value() = default;

    static constexpr Value word(Word w) { return Value(w, 0, false); }
    static Value real(double d) { return word(std::bit_cast<Word>(d)); }
    static constexpr Value ref(ObjectRef r) { return Value(r.address, r.type, true); }

    constexpr bool is_ref() const { return is_ref_; }
    constexpr Word bits() const { return bits_; }
    double as_real() const { return std::bit_cast<double>(bits_); }

    ObjectRef as_ref() const {
        if (!is_ref_) throw ContractViolation("value is not an object reference");
        return ObjectRef{static_cast<Address>(bits_), type_};
    }

private:
    constexpr Value(Word bits, TypeId type, bool is_ref) : bits_(bits), type_(type), is_ref_(is_ref) {}

    Word bits_ = 0;
    TypeId type_ = 0;
    bool is_ref_ = false;
};

} // namespace catalpa
