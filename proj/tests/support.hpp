#pragma once

#include "catalpa/heap.hpp"

#include <algorithm>
#include <map>
#include <vector>

namespace catalpa::test {

inline HeapConfig small_config(std::size_t nursery = 8192, std::size_t reserve = std::size_t{4} << 20,
                               std::size_t page = 4096) {
    HeapConfig c;
    c.page_bytes = page;
    c.nursery_threshold_bytes = nursery;
    c.heap_reserve_bytes = reserve;
    c.root_capacity_words = 4096;
    c.global_words = 16;
    return c;
}

// Types shared by the hand-built graphs below.
struct Types {
    TypeId leaf;   // 1 raw word
    TypeId link;   // ref, raw
    TypeId pair;   // ref, ref
    TypeId triple; // ref, raw, raw
};

inline Types register_basic(Heap& h) {
    Types t{};
    t.leaf = h.register_type("Leaf", 1);
    t.link = h.register_type("Link", 2, {0});
    t.pair = h.register_type("Pair", 2, {0, 1});
    t.triple = h.register_type("Triple", 3, {0});
    h.freeze();
    return t;
}

/// In-degree of every allocated object counted from the heap itself, the way
/// a reader of the memory would: old objects' ref slots only.
inline std::map<Address, std::uint32_t> heap_indegree(const Heap& h) {
    std::map<Address, std::uint32_t> in;
    h.for_each_object([&](Address a, const ObjectHeader& hd) {
        in.try_emplace(a, 0);
        if (!hd.old() || hd.forwarded()) return;
        for (const auto s : h.types().type(hd.type()).ref_slots) ++in[static_cast<Address>(fields_at(a)[s])];
    });
    return in;
}

inline std::size_t object_count(const Heap& h) {
    std::size_t n = 0;
    h.for_each_object([&](Address, const ObjectHeader&) { ++n; });
    return n;
}

inline std::size_t freelist_length(const PageHeap& p, std::size_t page) {
    std::size_t n = 0;
    for (Address e = p.meta(page).freelist_head; e != 0; e = *reinterpret_cast<const Word*>(e)) ++n;
    return n;
}

} // namespace catalpa::test
