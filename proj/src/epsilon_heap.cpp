#include "catalpa/epsilon_heap.hpp"

#include "catalpa/object_header.hpp"

#include <sys/mman.h>

#include <string>

namespace catalpa {

EpsilonHeap::EpsilonHeap(const HeapConfig& config)
    : config_(config), roots_(config.root_capacity_words, config.global_words) {
    config_.validate();
    const std::size_t pages = config_.heap_reserve_bytes / config_.page_bytes;
    mapping_bytes_ = (pages + 1) * config_.page_bytes;
    void* m = ::mmap(nullptr, mapping_bytes_, PROT_READ | PROT_WRITE,
                     MAP_PRIVATE | MAP_ANONYMOUS | MAP_NORESERVE, -1, 0);
    if (m == MAP_FAILED) {
        throw ConfigError("failed to reserve " + std::to_string(mapping_bytes_) + " bytes");
    }
    mapping_ = m;
    const Address mask = config_.page_bytes - 1;
    base_ = (reinterpret_cast<Address>(m) + mask) & ~mask;
    cursor_ = limit_ = base_;
    end_ = base_ + pages * config_.page_bytes;
}

EpsilonHeap::~EpsilonHeap() {
    if (mapping_ != nullptr) ::munmap(mapping_, mapping_bytes_);
}

TypeId EpsilonHeap::register_type(std::string_view name, std::uint32_t slot_count,
                                  std::initializer_list<std::uint32_t> ref_slots) {
    return registry_.register_type(name, slot_count, ref_slots);
}

TypeId EpsilonHeap::register_type(std::string_view name, std::uint32_t slot_count,
                                  const std::vector<std::uint32_t>& ref_slots) {
    return registry_.register_type(name, slot_count, ref_slots);
}

void EpsilonHeap::freeze() { registry_.freeze(config_.page_bytes); }

Address EpsilonHeap::epsilon_alloc(TypeId type) {
    const std::size_t bytes = registry_.type(type).slot_bytes;
    if (cursor_ + bytes > limit_) {
        const Address mask = config_.page_bytes - 1;
        const Address want = (cursor_ + bytes + mask) & ~mask;
        if (want > end_) throw OutOfMemory("epsilon heap reserve exhausted");
        limit_ = want;
    }
    const Address a = cursor_;
    cursor_ += bytes;
    ++allocations_;
    header_at(a) = ObjectHeader::fresh(type);
    return a;
}

ObjectRef EpsilonHeap::construct(TypeId type, std::span<const Value> fields) {
    if (!registry_.frozen()) throw ContractViolation("construct before freeze");
    const TypeDescriptor& t = registry_.type(type);
    if (fields.size() != t.slot_count) {
        throw ContractViolation("type '" + t.name + "' expects " + std::to_string(t.slot_count) + " fields");
    }
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (fields[i].is_ref() != t.ref_mask[i]) {
            throw ContractViolation("field " + std::to_string(i) + " of '" + t.name + "' has the wrong kind");
        }
        if (fields[i].is_ref()) {
            const ObjectRef r = fields[i].as_ref();
            if (r.address < base_ || r.address >= cursor_ || header_at(r.address).type() != r.type) {
                throw ContractViolation("object reference does not address a live object");
            }
        }
    }
    const Address a = epsilon_alloc(type);
    Word* out = fields_at(a);
    for (std::size_t i = 0; i < fields.size(); ++i) out[i] = fields[i].bits();
    if (fields.empty()) out[0] = 0;
    return ObjectRef{a, type};
}

Value EpsilonHeap::read_field(ObjectRef obj, std::size_t slot) const {
    const TypeDescriptor& t = registry_.type(obj.type);
    if (slot >= t.slot_count) {
        throw ContractViolation("slot " + std::to_string(slot) + " out of range for '" + t.name + "'");
    }
    const Word w = fields_at(obj.address)[slot];
    if (!t.ref_mask[slot]) return Value::word(w);
    return Value::ref(ObjectRef{static_cast<Address>(w), header_at(static_cast<Address>(w)).type()});
}

FrameToken EpsilonHeap::root_push(std::span<const Value> values) {
    scratch_.clear();
    for (const auto& v : values) scratch_.push_back(v.bits());
    return roots_.push(scratch_);
}

} // namespace catalpa
