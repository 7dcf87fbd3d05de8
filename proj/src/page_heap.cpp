#include "catalpa/page_heap.hpp"

#include <sys/mman.h>

#include <cmath>
#include <string>

namespace catalpa {

const char* to_string(PageState s) {
    switch (s) {
    case PageState::Free: return "Free";
    case PageState::NurseryActive: return "NurseryActive";
    case PageState::NurseryFull: return "NurseryFull";
    case PageState::Evacuation: return "Evacuation";
    case PageState::OldPartial: return "OldPartial";
    case PageState::OldFull: return "OldFull";
    }
    return "?";
}

PageHeap::PageHeap(const HeapConfig& config) : config_(config) {
    config_.validate();
    const std::size_t pages = config_.heap_reserve_bytes / config_.page_bytes;
    page_shift_ = static_cast<unsigned>(std::countr_zero(config_.page_bytes));
    page_mask_ = config_.page_bytes - 1;

    // Over-reserve by one page so the base can be aligned to page_bytes.
    mapping_bytes_ = (pages + 1) * config_.page_bytes;
    void* m = ::mmap(nullptr, mapping_bytes_, PROT_READ | PROT_WRITE,
                     MAP_PRIVATE | MAP_ANONYMOUS | MAP_NORESERVE, -1, 0);
    if (m == MAP_FAILED) {
        throw ConfigError("failed to reserve " + std::to_string(mapping_bytes_) + " bytes");
    }
    mapping_ = m;
    const Address raw = reinterpret_cast<Address>(m);
    base_ = (raw + page_mask_) & ~static_cast<Address>(page_mask_);

    const std::size_t max_slots = config_.page_bytes / object_bytes(0);
    bitmap_words_ = (max_slots + 63) / 64;
    pages_.resize(pages);
    alloc_bits_.assign(pages * bitmap_words_, 0);
    young_bits_.assign(pages * bitmap_words_, 0);
    mark_bits_.assign(pages * bitmap_words_, 0);
    bin_count_ = static_cast<std::size_t>(std::ceil(1.0 / config_.bin_width - 1e-9));
    if (bin_count_ == 0) bin_count_ = 1;
}

PageHeap::~PageHeap() {
    if (mapping_ != nullptr) ::munmap(mapping_, mapping_bytes_);
}

void PageHeap::attach(const TypeRegistry& registry) {
    if (!registry.frozen()) throw ContractViolation("type registry must be frozen before use");
    allocators_.clear();
    for (const auto& c : registry.size_classes()) {
        Allocator a;
        a.cls = c;
        allocators_.push_back(a);
    }
    bins_.assign(allocators_.size(), std::vector<std::vector<std::size_t>>(bin_count_));
}

std::uint32_t PageHeap::bin_for(std::size_t live, std::size_t capacity) const {
    const double u = static_cast<double>(live) / static_cast<double>(capacity);
    auto b = static_cast<std::size_t>(std::floor(u / config_.bin_width + 1e-9));
    if (b >= bin_count_) b = bin_count_ - 1;
    return static_cast<std::uint32_t>(b);
}

void PageHeap::bin_insert(std::size_t page, std::uint32_t b) {
    PageMeta& m = pages_[page];
    auto& v = bins_[m.size_class][b];
    m.bin = b;
    m.bin_pos = static_cast<std::uint32_t>(v.size());
    v.push_back(page);
}

void PageHeap::bin_remove(std::size_t page) {
    PageMeta& m = pages_[page];
    auto& v = bins_[m.size_class][m.bin];
    const std::size_t last = v.back();
    v[m.bin_pos] = last;
    pages_[last].bin_pos = m.bin_pos;
    v.pop_back();
}

std::size_t PageHeap::take_free_page() {
    if (!free_committed_.empty()) {
        const std::size_t p = free_committed_.back();
        free_committed_.pop_back();
        return p;
    }
    if (committed_pages_ < pages_.size()) return committed_pages_++;
    return kNoPage;
}

std::size_t PageHeap::free_pages_available() const {
    return free_committed_.size() + (pages_.size() - committed_pages_);
}

void PageHeap::make_free(std::size_t page) {
    PageMeta& m = pages_[page];
    if (m.state == PageState::OldPartial) bin_remove(page);
    // The page keeps its last size class and free-list (which now covers
    // every slot) until it is re-acquired.
    m.state = PageState::Free;
    m.live_count = 0;
    for (std::size_t i = 0; i < bitmap_words_; ++i) {
        young_bits_[page * bitmap_words_ + i] = 0;
        mark_bits_[page * bitmap_words_ + i] = 0;
    }
    free_committed_.push_back(page);
}

std::size_t PageHeap::acquire_page(ClassId c, PageState as) {
    std::size_t page = kNoPage;
    for (std::size_t b = 0; b < bin_count_ && page == kNoPage; ++b) {
        auto& v = bins_[c][b];
        if (!v.empty()) {
            page = v.back();
            bin_remove(page);
        }
    }
    if (page == kNoPage) {
        page = take_free_page();
        if (page == kNoPage) return kNoPage;
        pages_[page].size_class = c;
        pages_[page].live_count = 0;
    }
    pages_[page].state = as;
    thread_freelist(page);
    return page;
}

std::size_t PageHeap::thread_freelist(std::size_t page) {
    PageMeta& m = pages_[page];
    const SizeClass& cls = allocators_[m.size_class].cls;
    const Address pb = page_base(page);
    const std::size_t words = (cls.slots_per_page + 63) / 64;
    Address head = 0;
    Word* tail = &head;
    std::size_t n = 0;
    for (std::size_t i = 0; i < words; ++i) {
        std::uint64_t free = ~alloc_bits_[page * bitmap_words_ + i];
        const std::size_t rest = cls.slots_per_page - i * 64;
        if (rest < 64) free &= (std::uint64_t{1} << rest) - 1;
        while (free != 0) {
            const Address a = pb + (i * 64 + static_cast<std::size_t>(std::countr_zero(free))) * cls.slot_bytes;
            *tail = a;
            tail = reinterpret_cast<Word*>(a);
            free &= free - 1;
            ++n;
        }
    }
    *tail = 0;
    m.freelist_head = head;
    thread_work_ += n + 1;
    return n;
}

bool PageHeap::refill(ClassId c) {
    Allocator& a = allocators_[c];
    if (a.alloc_page != kNoPage) {
        PageMeta& m = pages_[a.alloc_page];
        m.freelist_head = a.freelist_head;
        m.state = PageState::NurseryFull;
        a.alloc_page = kNoPage;
        a.freelist_head = 0;
    }
    const std::size_t page = acquire_page(c, PageState::NurseryActive);
    if (page == kNoPage) return false;
    nursery_pages_.push_back(page);
    a.alloc_page = page;
    a.freelist_head = pages_[page].freelist_head;
    return true;
}

Address PageHeap::evac_alloc(ClassId c) {
    Allocator& a = allocators_[c];
    if (a.evac_head == 0) {
        if (a.evac_page != kNoPage) pages_[a.evac_page].freelist_head = 0;
        const std::size_t page = acquire_page(c, PageState::Evacuation);
        if (page == kNoPage) {
            a.evac_page = kNoPage;
            return 0;
        }
        a.evac_page = page;
        a.evac_head = pages_[page].freelist_head;
        evac_pages_.push_back(page);
    }
    const Address entry = a.evac_head;
    a.evac_head = *reinterpret_cast<const Word*>(entry);
    mark_allocated(entry);
    return entry;
}

void PageHeap::mark_allocated(Address a) {
    const std::size_t page = page_of(a);
    set_bit(alloc_bits_, page, slot_index(page, a));
}

std::size_t PageHeap::live_slots(std::size_t page) const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < bitmap_words_; ++i) {
        n += static_cast<std::size_t>(std::popcount(alloc_bits_[page * bitmap_words_ + i]));
    }
    return n;
}

void PageHeap::release_slot(Address a) {
    const std::size_t page = page_of(a);
    PageMeta& m = pages_[page];
    const std::size_t slot = slot_index(page, a);
    if (!test_bit(alloc_bits_, page, slot)) {
        throw InvariantViolation("release of an unallocated slot");
    }
    clear_bit(alloc_bits_, page, slot);
    *reinterpret_cast<Word*>(a) = m.freelist_head;
    m.freelist_head = a;
    if (m.live_count > 0) --m.live_count;
}

void PageHeap::clear_young_bits(std::size_t page) {
    for (std::size_t i = 0; i < bitmap_words_; ++i) young_bits_[page * bitmap_words_ + i] = 0;
}

void PageHeap::settle_page(std::size_t page) {
    PageMeta& m = pages_[page];
    const std::size_t live = live_slots(page);
    const std::size_t capacity = allocators_[m.size_class].cls.slots_per_page;
    m.live_count = static_cast<std::uint32_t>(live);
    if (live == 0) {
        make_free(page);
        return;
    }
    if (live == capacity) {
        if (m.state == PageState::OldPartial) bin_remove(page);
        m.state = PageState::OldFull;
        return;
    }
    const std::uint32_t b = bin_for(live, capacity);
    if (m.state == PageState::OldPartial) {
        if (m.bin == b) return;
        bin_remove(page);
    }
    m.state = PageState::OldPartial;
    bin_insert(page, b);
}

void PageHeap::retire_alloc_pages() {
    for (auto& a : allocators_) {
        if (a.alloc_page == kNoPage) continue;
        PageMeta& m = pages_[a.alloc_page];
        m.freelist_head = a.freelist_head;
        m.state = PageState::NurseryFull;
        a.alloc_page = kNoPage;
        a.freelist_head = 0;
    }
}

void PageHeap::retire_evac_pages() {
    for (auto& a : allocators_) {
        if (a.evac_page == kNoPage) continue;
        pages_[a.evac_page].freelist_head = a.evac_head;
        a.evac_page = kNoPage;
        a.evac_head = 0;
    }
    for (const std::size_t p : evac_pages_) settle_page(p);
    evac_pages_.clear();
}

std::size_t PageHeap::allocs_since_gc() const {
    std::size_t n = 0;
    for (const auto& a : allocators_) n += a.allocs_since_gc;
    return n;
}

std::size_t PageHeap::bytes_since_gc() const {
    std::size_t n = 0;
    for (const auto& a : allocators_) n += a.bytes_since_gc;
    return n;
}

void PageHeap::reset_allocation_counters() {
    for (auto& a : allocators_) {
        a.allocs_since_gc = 0;
        a.bytes_since_gc = 0;
    }
}

} // namespace catalpa
