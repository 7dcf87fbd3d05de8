#pragma once

#include "catalpa/collection_record.hpp"
#include "catalpa/config.hpp"
#include "catalpa/roots.hpp"
#include "catalpa/types.hpp"
#include "catalpa/value.hpp"

#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

namespace catalpa {

/// Throughput baseline: bump allocation over a reserved range, never
/// reclaims, never collects. Shares the mutator interface with Heap so a
/// workload performs byte-identical application work on both.
class EpsilonHeap {
public:
    explicit EpsilonHeap(const HeapConfig& config = {});
    ~EpsilonHeap();

    EpsilonHeap(const EpsilonHeap&) = delete;
    EpsilonHeap& operator=(const EpsilonHeap&) = delete;

    TypeId register_type(std::string_view name, std::uint32_t slot_count,
                         std::initializer_list<std::uint32_t> ref_slots = {});
    TypeId register_type(std::string_view name, std::uint32_t slot_count,
                         const std::vector<std::uint32_t>& ref_slots);
    void freeze();
    bool frozen() const { return registry_.frozen(); }
    const TypeRegistry& types() const { return registry_; }

    /// Returns the cursor and advances it by the type's object size,
    /// committing page-sized steps as the limit is reached.
    Address epsilon_alloc(TypeId type);

    ObjectRef construct(TypeId type, std::span<const Value> fields);
    ObjectRef construct(TypeId type, std::initializer_list<Value> fields) {
        return construct(type, std::span<const Value>(fields.begin(), fields.size()));
    }
    Value read_field(ObjectRef obj, std::size_t slot) const;

    FrameToken root_push(std::span<const Value> values);
    FrameToken root_push(std::initializer_list<Value> values) {
        return root_push(std::span<const Value>(values.begin(), values.size()));
    }
    void root_pop(FrameToken frame) { roots_.pop(frame); }
    void root_set(FrameToken frame, std::size_t index, Value v) { roots_.set(frame, index, v.bits()); }
    Word root_get(FrameToken frame, std::size_t index) const { return roots_.get(frame, index); }
    void set_global(std::size_t index, Value v) { roots_.set_global(index, v.bits()); }
    Word global(std::size_t index) const { return roots_.global(index); }

    const std::vector<CollectionRecord>& records() const { return records_; }
    std::size_t collections() const { return 0; }
    std::uint64_t total_allocations() const { return allocations_; }
    std::uint64_t total_allocated_bytes() const { return cursor_ - base_; }
    std::size_t committed_bytes() const { return limit_ - base_; }
    const HeapConfig& config() const { return config_; }

    Address cursor() const { return cursor_; }
    Address limit() const { return limit_; }

private:
    HeapConfig config_;
    TypeRegistry registry_;
    RootRegion roots_;
    void* mapping_ = nullptr;
    std::size_t mapping_bytes_ = 0;
    Address base_ = 0;
    Address cursor_ = 0;
    Address limit_ = 0;
    Address end_ = 0;
    std::uint64_t allocations_ = 0;
    std::vector<Word> scratch_;
    std::vector<CollectionRecord> records_; // always empty
};

} // namespace catalpa
