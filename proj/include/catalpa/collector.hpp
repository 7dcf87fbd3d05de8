#pragma once

#include "catalpa/collection_record.hpp"
#include "catalpa/heap_observer.hpp"
#include "catalpa/page_heap.hpp"
#include "catalpa/roots.hpp"
#include "catalpa/types.hpp"

#include <chrono>
#include <cstddef>
#include <deque>
#include <iosfwd>
#include <span>
#include <vector>

namespace catalpa {

struct RootCandidates {
    std::vector<Address> all;   // ascending canonical addresses, duplicate-free
    std::vector<Address> young; // ascending subset that is still young
};

/// Young collection with deferred reference counting of the old space:
///
///   mark_roots -> mark_heap -> process_marked_young -> sweep_nursery
///   -> compute_dead_roots -> process_decrements
///
/// There are no old->young edges (objects are immutable once constructed), so
/// the nursery is traced without consulting the old space.
class Collector {
public:
    Collector(PageHeap& heap, const TypeRegistry& types, const RootRegion& roots);

    /// A draining collection ignores the release budget; used only when an
    /// allocation would otherwise fail.
    CollectionRecord collect(bool drain = false);

    // Individual phases; collect() runs them in order.
    RootCandidates mark_roots();
    std::vector<Address> mark_heap(std::span<const Address> young_roots);
    void process_marked_young(std::span<const Address> order, std::span<const Address> young_roots);
    std::size_t sweep_nursery();
    std::size_t compute_dead_roots(std::vector<Address> current);
    std::size_t process_decrements(std::size_t budget);

    const std::vector<Address>& root_snapshot() const { return snapshot_; }
    const std::deque<Address>& worklist() const { return worklist_; }
    const std::vector<CollectionRecord>& records() const { return records_; }
    /// Record of the cycle in progress (or the phases run by hand).
    const CollectionRecord& current() const { return current_; }

    void set_observer(HeapObserver* o) { observer_ = o; }
    void set_trace(std::ostream* out) { trace_ = out; }
    /// When set, every old-object header the collector reads or writes is
    /// appended here (duplicates included).
    void set_touch_log(std::vector<Address>* log) { touch_log_ = log; }

private:
    struct Layout {
        std::span<const std::uint32_t> ref_slots;
        ClassId size_class = 0;
        std::size_t words = 0;
    };

    const Layout& layout(Address a) const { return layouts_[header_at(a).type()]; }
    void touch(Address a) {
        if (touch_log_ != nullptr) touch_log_->push_back(a);
    }
    void trace(const char* phase);

    PageHeap& heap_;
    const TypeRegistry& types_;
    const RootRegion& roots_;
    std::vector<Layout> layouts_;

    std::vector<Address> snapshot_;
    std::deque<Address> worklist_;
    std::vector<std::size_t> touched_pages_;
    std::vector<CollectionRecord> records_;
    CollectionRecord current_;

    HeapObserver* observer_ = nullptr;
    std::ostream* trace_ = nullptr;
    std::vector<Address>* touch_log_ = nullptr;
    std::chrono::steady_clock::time_point epoch_;
};

} // namespace catalpa
