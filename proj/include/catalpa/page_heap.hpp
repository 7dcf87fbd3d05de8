#pragma once

#include "catalpa/config.hpp"
#include "catalpa/object_header.hpp"
#include "catalpa/types.hpp"

#include <bit>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace catalpa {

enum class PageState : std::uint8_t {
    Free,
    NurseryActive,
    NurseryFull,
    Evacuation,
    OldPartial,
    OldFull,
};

const char* to_string(PageState s);

inline constexpr std::size_t kNoPage = std::numeric_limits<std::size_t>::max();
inline constexpr ClassId kNoClass = std::numeric_limits<ClassId>::max();

struct PageMeta {
    PageState state = PageState::Free;
    ClassId size_class = kNoClass;
    std::uint32_t live_count = 0;   // exact at collection boundaries only
    std::uint32_t bin = 0;          // meaningful while OldPartial
    std::uint32_t bin_pos = 0;      // index inside its bin vector
    Address freelist_head = 0;      // 0 terminates; links live in slot word 0
};

/// One per size class. The active free-list head is cached here and written
/// back to the page's meta when the page is retired.
struct Allocator {
    SizeClass cls;
    Address freelist_head = 0;
    std::size_t alloc_page = kNoPage;
    std::size_t evac_page = kNoPage;
    Address evac_head = 0;
    std::size_t allocs_since_gc = 0;
    std::size_t bytes_since_gc = 0;
};

/// Owns the reserved address range, the page side table, per-page allocation
/// and young bitmaps, the per-class allocators and utilization bins.
class PageHeap {
public:
    explicit PageHeap(const HeapConfig& config);
    ~PageHeap();

    PageHeap(const PageHeap&) = delete;
    PageHeap& operator=(const PageHeap&) = delete;

    /// Creates one allocator per size class. The registry must be frozen.
    void attach(const TypeRegistry& registry);

    const HeapConfig& config() const { return config_; }
    Address base() const { return base_; }
    std::size_t page_count() const { return pages_.size(); }
    std::size_t page_bytes() const { return config_.page_bytes; }
    std::size_t page_of(Address a) const { return (a - base_) >> page_shift_; }
    Address page_base(std::size_t page) const { return base_ + (page << page_shift_); }
    const PageMeta& meta(std::size_t page) const { return pages_[page]; }
    PageMeta& meta(std::size_t page) { return pages_[page]; }
    bool contains(Address a) const { return a >= base_ && a < base_ + committed_pages_ * config_.page_bytes; }

    std::size_t class_count() const { return allocators_.size(); }
    const SizeClass& size_class(ClassId c) const { return allocators_[c].cls; }
    Allocator& allocator(ClassId c) { return allocators_[c]; }
    const Allocator& allocator(ClassId c) const { return allocators_[c]; }

    /// Pops the active free-list. Returns 0 on a miss, without side effects.
    Address alloc_fast(ClassId c, TypeId type) {
        Allocator& a = allocators_[c];
        const Address entry = a.freelist_head;
        if (entry == 0) return 0;
        a.freelist_head = *reinterpret_cast<const Word*>(entry);
        const std::size_t off = entry - base_;
        const std::size_t page = off >> page_shift_;
        const std::size_t slot = a.cls.slot_of(off & page_mask_);
        set_bit(alloc_bits_, page, slot);
        set_bit(young_bits_, page, slot);
        ++a.allocs_since_gc;
        a.bytes_since_gc += a.cls.slot_bytes;
        header_at(entry) = ObjectHeader::fresh(type);
        return entry;
    }

    /// Retires the exhausted alloc page and installs a fresh one. Returns false
    /// when no page can be acquired.
    bool refill(ClassId c);

    /// Priority: lowest nonempty utilization bin of this class, then a Free
    /// page. The page's free-list is threaded in ascending address order and
    /// its state set to `as`. Returns kNoPage on exhaustion.
    std::size_t acquire_page(ClassId c, PageState as);

    /// Accepts any word that lies inside an allocated slot of a non-Free page
    /// and returns that slot's base address.
    std::optional<Address> validate_candidate(Word w) const {
        if (w < base_) return std::nullopt;
        const std::size_t off = w - base_;
        const std::size_t page = off >> page_shift_;
        if (page >= committed_pages_) return std::nullopt;
        const PageMeta& m = pages_[page];
        if (m.state == PageState::Free) return std::nullopt;
        const SizeClass& cls = allocators_[m.size_class].cls;
        const std::size_t slot = cls.slot_of(off & page_mask_);
        if (slot >= cls.slots_per_page || !test_bit(alloc_bits_, page, slot)) return std::nullopt;
        return page_base(page) + slot * cls.slot_bytes;
    }

    bool is_allocated(Address a) const { return validate_candidate(a) == a; }

    // Per-slot bitmaps.
    std::size_t slot_index(std::size_t page, Address a) const {
        return allocators_[pages_[page].size_class].cls.slot_of((a - base_) & page_mask_);
    }
    bool allocated(std::size_t page, std::size_t slot) const { return test_bit(alloc_bits_, page, slot); }
    bool young(std::size_t page, std::size_t slot) const { return test_bit(young_bits_, page, slot); }
    bool marked(std::size_t page, std::size_t slot) const { return test_bit(mark_bits_, page, slot); }
    void set_mark(Address a) {
        const std::size_t page = page_of(a);
        set_bit(mark_bits_, page, slot_index(page, a));
    }
    void clear_mark(Address a) {
        const std::size_t page = page_of(a);
        clear_bit(mark_bits_, page, slot_index(page, a));
    }
    void mark_allocated(Address a);
    std::span<const std::uint64_t> alloc_bitmap(std::size_t page) const {
        return {alloc_bits_.data() + page * bitmap_words_, bitmap_words_};
    }
    std::span<const std::uint64_t> young_bitmap(std::size_t page) const {
        return {young_bits_.data() + page * bitmap_words_, bitmap_words_};
    }
    std::size_t live_slots(std::size_t page) const;

    /// Threads every bitmap-clear slot of `page` into its meta free-list in
    /// ascending order. Returns the number of slots threaded.
    std::size_t thread_freelist(std::size_t page);

    /// Frees every young slot of `page` whose mark bit is clear (dead objects
    /// and evacuated husks), calling on_free(address) first for each, then
    /// clears the page's young and mark bits. Works a bitmap word at a time
    /// and never reads a dead object. Returns the number of slots freed.
    template <class F>
    std::size_t sweep_young(std::size_t page, F&& on_free) {
        const SizeClass& cls = allocators_[pages_[page].size_class].cls;
        const Address pb = page_base(page);
        const std::size_t base = page * bitmap_words_;
        std::size_t freed = 0;
        for (std::size_t i = 0; i < bitmap_words_; ++i) {
            std::uint64_t dead = young_bits_[base + i] & ~mark_bits_[base + i];
            alloc_bits_[base + i] &= ~dead;
            young_bits_[base + i] = 0;
            mark_bits_[base + i] = 0;
            freed += static_cast<std::size_t>(std::popcount(dead));
            while (dead != 0) {
                on_free(pb + (i * 64 + static_cast<std::size_t>(std::countr_zero(dead))) * cls.slot_bytes);
                dead &= dead - 1;
            }
        }
        return freed;
    }

    /// Returns a slot to its page (clears the bitmap bit, pushes the free-list).
    /// Bin and state updates are deferred to settle_page().
    void release_slot(Address a);

    /// Clears young bits and the given slots; used by the nursery sweep.
    void clear_young_bits(std::size_t page);
    void clear_allocated(std::size_t page, std::size_t slot) { clear_bit(alloc_bits_, page, slot); }

    /// Recomputes state and utilization bin from the exact live count.
    void settle_page(std::size_t page);

    /// Utilization bin for `live` of `capacity` slots.
    std::uint32_t bin_for(std::size_t live, std::size_t capacity) const;
    std::size_t bin_count() const { return bin_count_; }
    const std::vector<std::size_t>& bin(ClassId c, std::size_t b) const { return bins_[c][b]; }

    /// Pops a slot from the class's evacuation page, acquiring a new one when
    /// it runs dry. Returns 0 when no page can be acquired.
    Address evac_alloc(ClassId c);

    /// Writes each allocator's cached head back to its page and detaches
    /// alloc pages; they become NurseryFull until swept.
    void retire_alloc_pages();
    /// Detaches evacuation pages and settles them into old space.
    void retire_evac_pages();

    const std::vector<std::size_t>& nursery_pages() const { return nursery_pages_; }
    void clear_nursery_pages() { nursery_pages_.clear(); }

    std::size_t committed_pages() const { return committed_pages_; }
    std::size_t committed_bytes() const { return committed_pages_ * config_.page_bytes; }
    std::size_t free_pages_available() const;

    std::size_t allocs_since_gc() const;
    std::size_t bytes_since_gc() const;
    void reset_allocation_counters();

    /// Slots threaded while building free-lists since the last call.
    std::size_t take_thread_work() { return std::exchange(thread_work_, 0); }

private:
    void set_bit(std::vector<std::uint64_t>& bits, std::size_t page, std::size_t slot) {
        bits[page * bitmap_words_ + (slot >> 6)] |= std::uint64_t{1} << (slot & 63);
    }
    void clear_bit(std::vector<std::uint64_t>& bits, std::size_t page, std::size_t slot) {
        bits[page * bitmap_words_ + (slot >> 6)] &= ~(std::uint64_t{1} << (slot & 63));
    }
    bool test_bit(const std::vector<std::uint64_t>& bits, std::size_t page, std::size_t slot) const {
        return (bits[page * bitmap_words_ + (slot >> 6)] >> (slot & 63)) & 1;
    }

    void bin_insert(std::size_t page, std::uint32_t b);
    void bin_remove(std::size_t page);
    std::size_t take_free_page();
    void make_free(std::size_t page);

    HeapConfig config_;
    void* mapping_ = nullptr;
    std::size_t mapping_bytes_ = 0;
    Address base_ = 0;
    unsigned page_shift_ = 0;
    std::size_t page_mask_ = 0;
    std::size_t bitmap_words_ = 0;
    std::size_t bin_count_ = 0;

    std::vector<PageMeta> pages_;
    std::vector<std::uint64_t> alloc_bits_;
    std::vector<std::uint64_t> young_bits_;
    std::vector<std::uint64_t> mark_bits_;
    std::vector<Allocator> allocators_;
    std::vector<std::vector<std::vector<std::size_t>>> bins_; // [class][bin] -> pages
    std::vector<std::size_t> free_committed_;
    std::size_t committed_pages_ = 0;
    std::vector<std::size_t> nursery_pages_;
    std::vector<std::size_t> evac_pages_;
    std::size_t thread_work_ = 0;
};

} // namespace catalpa
