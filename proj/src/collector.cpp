#include "catalpa/collector.hpp"

#include <algorithm>
#include <cstring>
#include <limits>
#include <ostream>
#include <utility>

namespace catalpa {

Collector::Collector(PageHeap& heap, const TypeRegistry& types, const RootRegion& roots)
    : heap_(heap), types_(types), roots_(roots), epoch_(std::chrono::steady_clock::now()) {
    if (!types.frozen()) throw ContractViolation("collector requires a frozen type registry");
    for (const auto& t : types.types()) {
        layouts_.push_back(Layout{t.ref_slots, t.size_class, t.slot_bytes / kWordBytes});
    }
}

void Collector::trace(const char* phase) {
    if (trace_ == nullptr) return;
    const auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - epoch_);
    *trace_ << "gc[" << current_.index << "] " << phase << " t=" << ns.count() << " work=" << current_.work_units
            << " marked=" << current_.marked << " evacuated=" << current_.evacuated
            << " in_place=" << current_.promoted_in_place << " swept=" << current_.swept
            << " released=" << current_.released << " backlog=" << worklist_.size() << '\n';
}

CollectionRecord Collector::collect(bool drain) {
    const auto t0 = std::chrono::steady_clock::now();
    if (observer_ != nullptr) observer_->on_collection_begin();

    current_ = CollectionRecord{};
    current_.index = records_.size();
    current_.start_ns = static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(t0 - epoch_).count());
    current_.allocations = heap_.allocs_since_gc();
    current_.bytes_since_gc = heap_.bytes_since_gc();
    current_.drain = drain;
    current_.budget = drain ? std::numeric_limits<std::size_t>::max()
                            : heap_.config().release_budget(current_.allocations);
    heap_.take_thread_work(); // free-list threading done by the mutator is allocation work

    heap_.retire_alloc_pages();
    RootCandidates roots = mark_roots();
    trace("mark_roots");
    const std::vector<Address> order = mark_heap(roots.young);
    trace("mark_heap");
    process_marked_young(order, roots.young);
    heap_.retire_evac_pages();
    trace("process_marked_young");
    sweep_nursery();
    trace("sweep_nursery");
    compute_dead_roots(std::move(roots.all));
    trace("compute_dead_roots");
    process_decrements(current_.budget);
    trace("process_decrements");

    current_.work_units += heap_.take_thread_work();
    current_.deferred_backlog = worklist_.size();
    current_.committed_bytes = heap_.committed_bytes();
    current_.pause_ns = static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - t0).count());
    records_.push_back(current_);
    if (observer_ != nullptr) observer_->on_collection_end(current_);
    return current_;
}

RootCandidates Collector::mark_roots() {
    RootCandidates rc;
    roots_.for_each_word([&](Word w) {
        ++current_.work_units;
        if (auto a = heap_.validate_candidate(w)) rc.all.push_back(*a);
    });
    current_.root_words = roots_.scan_size();
    std::sort(rc.all.begin(), rc.all.end());
    rc.all.erase(std::unique(rc.all.begin(), rc.all.end()), rc.all.end());
    for (const Address a : rc.all) {
        if (header_at(a).young()) {
            rc.young.push_back(a);
        } else {
            touch(a);
        }
    }
    return rc;
}

std::vector<Address> Collector::mark_heap(std::span<const Address> young_roots) {
    struct Frame {
        Address obj;
        std::size_t next;
    };
    std::vector<Address> order;
    std::vector<Frame> stack;

    auto discover = [&](Address a) {
        ObjectHeader& h = header_at(a);
        if (h.old()) {
            touch(a);
            return;
        }
        if (h.marked()) return;
        h.set(ObjectHeader::kMark, true);
        heap_.set_mark(a);
        ++current_.marked;
        ++current_.work_units;
        stack.push_back(Frame{a, 0});
    };

    for (const Address root : young_roots) {
        discover(root);
        while (!stack.empty()) {
            Frame& f = stack.back();
            const auto& refs = layout(f.obj).ref_slots;
            if (f.next < refs.size()) {
                const Address child = static_cast<Address>(fields_at(f.obj)[refs[f.next++]]);
                discover(child);
            } else {
                order.push_back(f.obj);
                stack.pop_back();
            }
        }
    }
    return order;
}

void Collector::process_marked_young(std::span<const Address> order, std::span<const Address> young_roots) {
    for (const Address obj : order) {
        const Layout& lay = layout(obj);
        ObjectHeader& h = header_at(obj);
        Address target = obj;

        const bool rooted = std::binary_search(young_roots.begin(), young_roots.end(), obj);
        Address copy = rooted ? 0 : heap_.evac_alloc(lay.size_class);
        h.set(ObjectHeader::kMark, false);
        if (copy == 0) {
            // Rooted (cannot move), or no evacuation page left: promote in place.
            h.set(ObjectHeader::kOld, true);
            h.set(ObjectHeader::kRootRef, rooted);
            ++current_.promoted_in_place;
        } else {
            std::memcpy(reinterpret_cast<void*>(copy), reinterpret_cast<const void*>(obj), lay.words * kWordBytes);
            ObjectHeader fresh = ObjectHeader::fresh(h.type());
            fresh.set(ObjectHeader::kOld, true);
            header_at(copy) = fresh;
            h.set(ObjectHeader::kForwarded, true);
            heap_.clear_mark(obj);
            fields_at(obj)[0] = copy;
            current_.work_units += lay.words;
            ++current_.evacuated;
            if (observer_ != nullptr) observer_->on_evacuate(obj, copy);
            target = copy;
        }
        current_.survivor_bytes += lay.words * kWordBytes;

        Word* fields = fields_at(target);
        for (const std::uint32_t s : lay.ref_slots) {
            Address child = static_cast<Address>(fields[s]);
            if (header_at(child).forwarded()) {
                child = static_cast<Address>(fields_at(child)[0]);
                fields[s] = child;
            }
            ++current_.work_units;
            touch(child);
            header_at(child).increment();
            ++current_.work_units;
        }
    }
}

std::size_t Collector::sweep_nursery() {
    std::size_t freed = 0;
    for (const std::size_t page : heap_.nursery_pages()) {
        const SizeClass& cls = heap_.size_class(heap_.meta(page).size_class);
        if (observer_ != nullptr) {
            freed += heap_.sweep_young(page, [&](Address a) {
                if (!header_at(a).forwarded()) observer_->on_release(a);
            });
        } else {
            freed += heap_.sweep_young(page, [](Address) {});
        }
        current_.work_units += cls.slots_per_page;
        heap_.thread_freelist(page);
        heap_.settle_page(page);
    }
    heap_.clear_nursery_pages();
    heap_.reset_allocation_counters();
    // Every evacuated object left exactly one husk in a nursery page.
    const std::size_t reclaimed = freed - current_.evacuated;
    current_.swept += reclaimed;
    return reclaimed;
}

std::size_t Collector::compute_dead_roots(std::vector<Address> current) {
    std::size_t enqueued = 0;
    std::size_t i = 0;
    std::size_t j = 0;
    auto dropped = [&](Address a) {
        ObjectHeader& h = header_at(a);
        touch(a);
        h.set(ObjectHeader::kRootRef, false);
        if (h.rc() == 0 && !h.queued()) {
            h.set(ObjectHeader::kQueued, true);
            worklist_.push_back(a);
            ++enqueued;
        }
    };
    auto added = [&](Address a) {
        touch(a);
        header_at(a).set(ObjectHeader::kRootRef, true);
    };
    while (i < snapshot_.size() || j < current.size()) {
        ++current_.work_units;
        if (j == current.size() || (i < snapshot_.size() && snapshot_[i] < current[j])) {
            dropped(snapshot_[i++]);
        } else if (i == snapshot_.size() || current[j] < snapshot_[i]) {
            added(current[j++]);
        } else {
            ++i;
            ++j;
        }
    }
    snapshot_ = std::move(current);
    return enqueued;
}

std::size_t Collector::process_decrements(std::size_t budget) {
    std::size_t released = 0;
    touched_pages_.clear();
    while (released < budget && !worklist_.empty()) {
        const Address a = worklist_.front();
        worklist_.pop_front();
        ++current_.work_units;
        touch(a);
        ObjectHeader& h = header_at(a);
        h.set(ObjectHeader::kQueued, false);
        if (h.rc() != 0 || h.rootref()) {
            ++current_.skipped;
            continue;
        }
        const Layout& lay = layout(a);
        const Word* fields = fields_at(a);
        // Children go to the front so a dead subtree finishes before any
        // garbage discovered in a later collection.
        for (auto it = lay.ref_slots.rbegin(); it != lay.ref_slots.rend(); ++it) {
            const Address child = static_cast<Address>(fields[*it]);
            ObjectHeader& ch = header_at(child);
            touch(child);
            ch.decrement();
            ++current_.work_units;
            if (ch.rc() == 0 && !ch.rootref() && !ch.queued()) {
                ch.set(ObjectHeader::kQueued, true);
                worklist_.push_front(child);
            }
        }
        if (observer_ != nullptr) observer_->on_release(a);
        heap_.release_slot(a);
        touched_pages_.push_back(heap_.page_of(a));
        ++released;
        ++current_.work_units;
    }
    std::sort(touched_pages_.begin(), touched_pages_.end());
    touched_pages_.erase(std::unique(touched_pages_.begin(), touched_pages_.end()), touched_pages_.end());
    for (const std::size_t p : touched_pages_) heap_.settle_page(p);
    current_.work_units += touched_pages_.size();
    current_.released += released;
    return released;
}

} // namespace catalpa
