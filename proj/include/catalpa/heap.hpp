#pragma once

#include "catalpa/collector.hpp"
#include "catalpa/config.hpp"
#include "catalpa/heap_observer.hpp"
#include "catalpa/page_heap.hpp"
#include "catalpa/roots.hpp"
#include "catalpa/types.hpp"
#include "catalpa/value.hpp"

#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace catalpa {

/// The mutator-facing heap: closed-world type registry, immutable object
/// construction, conservatively scanned roots, and the collector that runs
/// inline on the allocation slow path. Single-threaded.
///
/// Usage: register every type, freeze(), then construct objects. Keep every
/// ObjectRef that must survive an allocation in a root frame.
class Heap {
public:
    explicit Heap(const HeapConfig& config = {});
    ~Heap();

    Heap(const Heap&) = delete;
    Heap& operator=(const Heap&) = delete;

    TypeId register_type(std::string_view name, std::uint32_t slot_count,
                         std::initializer_list<std::uint32_t> ref_slots = {});
    TypeId register_type(std::string_view name, std::uint32_t slot_count,
                         const std::vector<std::uint32_t>& ref_slots);
    void freeze();
    bool frozen() const { return registry_.frozen(); }
    const TypeRegistry& types() const { return registry_; }

    /// Allocates and initializes an object. `fields` must match the type's
    /// arity, with ObjectRefs exactly in the ref slots.
    ObjectRef construct(TypeId type, std::span<const Value> fields);
    ObjectRef construct(TypeId type, std::initializer_list<Value> fields) {
        return construct(type, std::span<const Value>(fields.begin(), fields.size()));
    }

    Value read_field(ObjectRef obj, std::size_t slot) const;

    FrameToken root_push(std::span<const Value> values);
    FrameToken root_push(std::initializer_list<Value> values) {
        return root_push(std::span<const Value>(values.begin(), values.size()));
    }
    void root_pop(FrameToken frame);
    void root_set(FrameToken frame, std::size_t index, Value v);
    Word root_get(FrameToken frame, std::size_t index) const { return roots_.get(frame, index); }
    void set_global(std::size_t index, Value v);
    Word global(std::size_t index) const { return roots_.global(index); }

    /// Explicit full collection.
    CollectionRecord collect();

    /// Re-derives a handle from a root word (e.g. after reading it back).
    std::optional<ObjectRef> ref_from_word(Word w) const;

    const std::vector<CollectionRecord>& records() const { return collector().records(); }
    std::size_t collections() const { return records().size(); }
    std::uint64_t total_allocations() const;
    std::uint64_t total_allocated_bytes() const;
    std::size_t committed_bytes() const { return pages_.committed_bytes(); }

    const HeapConfig& config() const { return pages_.config(); }
    const PageHeap& pages() const { return pages_; }
    PageHeap& pages() { return pages_; }
    const RootRegion& roots() const { return roots_; }
    Collector& collector();
    const Collector& collector() const;

    /// Visits every allocated slot of every non-Free page: f(address, header).
    template <class F>
    void for_each_object(F&& f) const {
        for (std::size_t p = 0; p < pages_.committed_pages(); ++p) {
            const PageMeta& m = pages_.meta(p);
            if (m.state == PageState::Free) continue;
            const SizeClass& cls = pages_.size_class(m.size_class);
            const auto bits = pages_.alloc_bitmap(p);
            for (std::size_t w = 0; w < bits.size(); ++w) {
                std::uint64_t b = bits[w];
                while (b != 0) {
                    const std::size_t slot = w * 64 + static_cast<std::size_t>(std::countr_zero(b));
                    b &= b - 1;
                    const Address a = pages_.page_base(p) + slot * cls.slot_bytes;
                    f(a, header_at(a));
                }
            }
        }
    }

    void set_observer(HeapObserver* o);
    HeapObserver* observer() const { return observer_; }

private:
    Address alloc_slow(ClassId c, TypeId type);
    void check_ref(ObjectRef r) const;

    PageHeap pages_;
    TypeRegistry registry_;
    RootRegion roots_;
    std::unique_ptr<Collector> collector_;
    HeapObserver* observer_ = nullptr;
    std::vector<Word> scratch_;
};

} // namespace catalpa
