#include "catalpa/types.hpp"

#include <algorithm>
#include <limits>
#include <map>

namespace catalpa {

TypeId TypeRegistry::register_type(std::string_view name, std::uint32_t slot_count,
                                   std::initializer_list<std::uint32_t> ref_slots) {
    return register_type(name, slot_count, std::vector<std::uint32_t>(ref_slots));
}

TypeId TypeRegistry::register_type(std::string_view name, std::uint32_t slot_count,
                                   const std::vector<std::uint32_t>& ref_slots) {
    if (frozen_) {
        throw ContractViolation("type registry is frozen; cannot register '" + std::string(name) + "'");
    }
    if (types_.size() > std::numeric_limits<TypeId>::max()) {
        throw ContractViolation("too many types");
    }
    TypeDescriptor t;
    t.id = static_cast<TypeId>(types_.size());
    t.name = std::string(name);
    t.slot_count = slot_count;
    t.ref_mask.assign(slot_count, false);
    for (auto s : ref_slots) {
        if (s >= slot_count) {
            throw ContractViolation("ref slot " + std::to_string(s) + " out of range for type '" + t.name + "'");
        }
        t.ref_mask[s] = true;
    }
    for (std::uint32_t s = 0; s < slot_count; ++s) {
        if (t.ref_mask[s]) t.ref_slots.push_back(s);
    }
    t.slot_bytes = object_bytes(slot_count);
    types_.push_back(std::move(t));
    return types_.back().id;
}

void TypeRegistry::freeze(std::size_t page_bytes) {
    if (frozen_) return;
    std::map<std::size_t, ClassId> by_size;
    for (auto& t : types_) {
        if (t.slot_bytes > page_bytes) {
            throw ConfigError("type '" + t.name + "' does not fit in a page");
        }
        by_size.emplace(t.slot_bytes, 0);
    }
    for (auto& [bytes, id] : by_size) {
        id = static_cast<ClassId>(classes_.size());
        SizeClass c;
        c.id = id;
        c.slot_bytes = bytes;
        c.slots_per_page = page_bytes / bytes;
        c.reciprocal = ((std::uint64_t{1} << SizeClass::kReciprocalShift) + bytes - 1) / bytes;
        classes_.push_back(c);
    }
    for (auto& t : types_) t.size_class = by_size.at(t.slot_bytes);
    frozen_ = true;
}

const TypeDescriptor& TypeRegistry::type(TypeId id) const {
    if (id >= types_.size()) throw ContractViolation("unknown type id " + std::to_string(id));
    return types_[id];
}

} // namespace catalpa
