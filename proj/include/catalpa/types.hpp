#pragma once

#include "catalpa/config.hpp"
#include "catalpa/object_header.hpp"

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace catalpa {

using ClassId = std::uint16_t;

struct TypeDescriptor {
    TypeId id = 0;
    std::string name;
    std::uint32_t slot_count = 0;
    std::vector<bool> ref_mask;          // size == slot_count
    std::vector<std::uint32_t> ref_slots; // ascending indices with ref_mask set
    ClassId size_class = 0;               // valid once the registry is frozen
    std::size_t slot_bytes = 0;

    bool is_ref_slot(std::size_t slot) const { return ref_mask[slot]; }
};

struct SizeClass {
    ClassId id = 0;
    std::size_t slot_bytes = 0;
    std::size_t slots_per_page = 0;
    // floor(offset / slot_bytes) == (offset * reciprocal) >> kReciprocalShift
    // for every in-page offset.
    std::uint64_t reciprocal = 0;

    static constexpr unsigned kReciprocalShift = 40;

    std::size_t slot_of(std::size_t offset) const {
        return static_cast<std::size_t>((offset * reciprocal) >> kReciprocalShift);
    }
};

/// Bytes occupied by an object with `slot_count` fields. Zero-field objects are
/// padded by one word so an evacuated husk can always hold a forwarding address.
constexpr std::size_t object_bytes(std::uint32_t slot_count) {
    return kWordBytes * (1 + (slot_count == 0 ? 1 : slot_count));
}

/// Closed-world registry: append-only until frozen, dense ids from 0.
class TypeRegistry {
public:
    TypeId register_type(std::string_view name, std::uint32_t slot_count,
                         std::initializer_list<std::uint32_t> ref_slots);
    TypeId register_type(std::string_view name, std::uint32_t slot_count,
                         const std::vector<std::uint32_t>& ref_slots);

    /// Builds one size class per distinct object size. Idempotent.
    void freeze(std::size_t page_bytes);

    bool frozen() const { return frozen_; }
    std::size_t size() const { return types_.size(); }
    const TypeDescriptor& type(TypeId id) const;
    const std::vector<TypeDescriptor>& types() const { return types_; }
    const std::vector<SizeClass>& size_classes() const { return classes_; }

private:
    std::vector<TypeDescriptor> types_;
    std::vector<SizeClass> classes_;
    bool frozen_ = false;
};

} // namespace catalpa
