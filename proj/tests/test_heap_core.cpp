#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"

#include "catalpa/mutator.hpp"

#include <random>
#include <set>

using namespace catalpa;
using namespace catalpa::test;

TEST_CASE("heap configuration") {
    HeapConfig c;
    c.heap_reserve_bytes = std::size_t{64} << 20;
    c.page_bytes = 4096;
    PageHeap p(c);
    CHECK(p.page_count() == 16384);
    bool all_free = true;
    for (std::size_t i = 0; i < p.page_count(); ++i) all_free = all_free && p.meta(i).state == PageState::Free;
    CHECK(all_free);
    CHECK(p.committed_bytes() == 0);

    HeapConfig zero;
    zero.heap_reserve_bytes = 0;
    CHECK_THROWS_AS(zero.validate(), ConfigError);
    CHECK_THROWS_AS(PageHeap{zero}, ConfigError);

    HeapConfig ok;
    ok.heap_reserve_bytes = std::size_t{8} << 20;
    ok.page_bytes = 4096;
    ok.nursery_threshold_bytes = std::size_t{2} << 20;
    CHECK_NOTHROW(ok.validate());

    HeapConfig bad = ok;
    bad.page_bytes = 3000;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ok;
    bad.nursery_threshold_bytes = 5000;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ok;
    bad.decrement_budget_num = 2;
    bad.decrement_budget_den = 2;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    CHECK(ok.release_budget(1000) == 1500);
    CHECK(ok.release_budget(3) == 5);
    CHECK(ok.release_budget(0) == 0);
}

TEST_CASE("type registry") {
    Heap h(small_config());
    const TypeId temp = h.register_type("TempRange", 2);
    const TypeId pair = h.register_type("Pair", 2, {0, 1});
    const TypeId empty = h.register_type("Unit", 0);
    CHECK_THROWS_AS(h.register_type("Bad", 2, {2}), ContractViolation);
    h.freeze();

    CHECK(temp == 0);
    CHECK(h.types().type(temp).slot_bytes == 24);
    CHECK(h.types().type(temp).ref_slots.empty());
    CHECK(h.types().type(pair).ref_slots == std::vector<std::uint32_t>{0, 1});
    CHECK(h.types().type(pair).is_ref_slot(1));
    CHECK(h.types().type(empty).slot_bytes == 16);
    // Same size, same class.
    CHECK(h.types().type(temp).size_class == h.types().type(pair).size_class);
    CHECK_THROWS_AS(h.register_type("Late", 1), ContractViolation);
    CHECK_THROWS_AS(h.types().type(99), ContractViolation);
}

TEST_CASE("size class reciprocal division is exact for every in-page offset") {
    for (std::size_t page = 64; page <= 65536; page *= 2) {
        TypeRegistry reg;
        for (std::uint32_t slots = 0; slots <= 24; ++slots) {
            if (object_bytes(slots) <= page) reg.register_type("T" + std::to_string(slots), slots, {});
        }
        reg.freeze(page);
        for (const auto& c : reg.size_classes()) {
            CHECK(c.slots_per_page == page / c.slot_bytes);
            bool exact = true;
            for (std::size_t off = 0; off < page; ++off) exact = exact && c.slot_of(off) == off / c.slot_bytes;
            CHECK_MESSAGE(exact, "page ", page, " slot ", c.slot_bytes);
        }
    }
}

TEST_CASE("fast path pops the page free-list") {
    TypeRegistry reg;
    reg.register_type("Leaf", 1, {});
    reg.freeze(4096);
    PageHeap p(small_config());
    p.attach(reg);

    // Nothing installed yet: a miss.
    CHECK(p.alloc_fast(0, 0) == 0);

    REQUIRE(p.refill(0));
    const std::size_t page = p.allocator(0).alloc_page;
    const Address s0 = p.allocator(0).freelist_head;
    const Address s1 = *reinterpret_cast<const Word*>(s0);
    const Address got = p.alloc_fast(0, 0);
    CHECK(got == s0);
    CHECK(p.allocator(0).freelist_head == s1);
    CHECK(p.allocated(page, 0));
    CHECK(p.young(page, 0));
    CHECK(!p.allocated(page, 1));
    CHECK(p.alloc_fast(0, 0) - got == 16);
    CHECK(p.allocs_since_gc() == 2);
    CHECK(p.bytes_since_gc() == 32);
}

TEST_CASE("consecutive constructs on a fresh page are one slot apart") {
    Heap h(small_config());
    const Types t = register_basic(h);
    const ObjectRef a = h.construct(t.link, {Value::ref(h.construct(t.leaf, {Value::word(1)})), Value::word(2)});
    const ObjectRef b = h.construct(t.link, {Value::ref(a), Value::word(3)});
    CHECK(b.address - a.address == 24);
}

TEST_CASE("slow path: page acquisition below the trigger, one collection at it") {
    Heap h(small_config(8192));
    const Types t = register_basic(h);

    for (int i = 0; i < 256; ++i) h.construct(t.leaf, {Value::word(static_cast<Word>(i))});
    CHECK(h.committed_bytes() == 4096);
    h.construct(t.leaf, {Value::word(0)});
    CHECK(h.committed_bytes() == 8192);
    CHECK(h.collections() == 0);

    for (int i = 257; i < 512; ++i) h.construct(t.leaf, {Value::word(0)});
    CHECK(h.pages().bytes_since_gc() == 8192);
    CHECK(h.collections() == 0);
    const ObjectRef after = h.construct(t.leaf, {Value::word(77)});
    CHECK(h.collections() == 1);
    CHECK(h.records()[0].allocations == 512);
    CHECK(h.read_field(after, 0).bits() == 77);
}

TEST_CASE("exhausting the reserve with a fully rooted heap raises OutOfMemory") {
    Heap h(small_config(8192, 64 * 1024));
    const Types t = register_basic(h);
    h.set_global(0, Value::ref(h.construct(t.leaf, {Value::word(0)})));
    bool threw = false;
    try {
        for (int i = 0; i < 1'000'000; ++i) {
            const ObjectRef prev = *h.ref_from_word(h.global(0));
            h.set_global(0, Value::ref(h.construct(t.link, {Value::ref(prev), Value::word(static_cast<Word>(i))})));
        }
    } catch (const OutOfMemory&) {
        threw = true;
    }
    CHECK(threw);
    // Everything allocated is still reachable.
    CHECK(h.committed_bytes() == 64 * 1024);
}

TEST_CASE("acquire_page prefers the emptiest utilization bin") {
    TypeRegistry reg;
    reg.register_type("Leaf", 1, {});
    reg.freeze(4096);
    PageHeap p(small_config());
    p.attach(reg);
    const std::size_t spp = p.size_class(0).slots_per_page;
    REQUIRE(spp == 256);

    // Both fresh before either settles, or the second would reuse the first.
    const std::size_t b = p.acquire_page(0, PageState::NurseryActive);
    const std::size_t a = p.acquire_page(0, PageState::NurseryActive);
    auto fill = [&](std::size_t page, std::size_t live) {
        for (std::size_t s = 0; s < live; ++s) p.mark_allocated(p.page_base(page) + s * 16);
        p.settle_page(page);
    };
    fill(b, 205); // 80%
    fill(a, 26);  // 10%
    CHECK(p.meta(a).state == PageState::OldPartial);
    CHECK(p.meta(a).bin == 2);
    CHECK(p.meta(b).bin == 16);

    const std::size_t got = p.acquire_page(0, PageState::NurseryActive);
    CHECK(got == a);
    CHECK(freelist_length(p, a) == spp - 26);
    // Threaded in ascending address order over the clear slots.
    Address prev = 0;
    bool ascending = true;
    for (Address e = p.meta(a).freelist_head; e != 0; e = *reinterpret_cast<const Word*>(e)) {
        ascending = ascending && e > prev && e >= p.page_base(a) + 26 * 16;
        prev = e;
    }
    CHECK(ascending);

    CHECK(p.bin_for(53, 100) == 10);
    CHECK(p.bin_for(1, 170) == 0);
    CHECK(p.bin_for(100, 100) == 19);

    // With no partial pages left in the class, a fresh page covers every slot.
    p.settle_page(got);
    TypeRegistry reg2;
    reg2.register_type("Leaf", 1, {});
    reg2.freeze(4096);
    PageHeap q(small_config());
    q.attach(reg2);
    const std::size_t fresh = q.acquire_page(0, PageState::NurseryActive);
    CHECK(freelist_length(q, fresh) == spp);
}

TEST_CASE("validate_candidate accepts exactly the words inside allocated slots") {
    Heap h(small_config(8192));
    const Types t = register_basic(h);
    RootScope<Heap> keep(h, 1);
    const ObjectRef a = h.construct(t.link, {Value::ref(h.construct(t.leaf, {Value::word(5)})), Value::word(9)});
    keep.set(0, a);

    CHECK(h.pages().validate_candidate(a.address) == a.address);
    CHECK(h.pages().validate_candidate(a.address + 8) == a.address);
    CHECK(h.pages().validate_candidate(a.address + 16) == a.address);
    CHECK(!h.pages().validate_candidate(42));
    CHECK(!h.pages().validate_candidate(h.pages().base() + (std::size_t{3} << 20)));

    // A free slot's address is rejected.
    const Address next_free = h.pages().allocator(h.types().type(t.link).size_class).freelist_head;
    REQUIRE(next_free != 0);
    CHECK(!h.pages().validate_candidate(next_free));

    // Seeded heap: every word of committed memory against a shadow extent map.
    std::mt19937_64 rng(11);
    std::vector<ObjectRef> made;
    for (int i = 0; i < 3000; ++i) {
        const auto pick = rng() % 3;
        if (pick == 0) made.push_back(h.construct(t.leaf, {Value::word(rng())}));
        else if (pick == 1) made.push_back(h.construct(t.triple, {Value::ref(a), Value::word(1), Value::word(2)}));
        else made.push_back(h.construct(t.link, {Value::ref(a), Value::word(3)}));
    }
    std::map<Address, std::size_t> extent; // base -> bytes
    h.for_each_object([&](Address base, const ObjectHeader& hd) {
        extent[base] = h.types().type(hd.type()).slot_bytes;
    });
    REQUIRE(h.pages().committed_pages() > 0);
    bool saw_free_page = false;
    std::size_t mismatches = 0;
    for (std::size_t pg = 0; pg < h.pages().committed_pages(); ++pg) {
        saw_free_page = saw_free_page || h.pages().meta(pg).state == PageState::Free;
        const Address pb = h.pages().page_base(pg);
        for (Address w = pb; w < pb + h.pages().page_bytes(); w += 8) {
            std::optional<Address> expect;
            auto it = extent.upper_bound(w);
            if (it != extent.begin()) {
                --it;
                if (w < it->first + it->second) expect = it->first;
            }
            if (h.pages().validate_candidate(w) != expect) ++mismatches;
        }
    }
    CHECK(mismatches == 0);
    CHECK(h.collections() > 0);
    CHECK(saw_free_page);
}

TEST_CASE("construct and read_field") {
    Heap h(small_config());
    const Types t = register_basic(h);
    RootScope<Heap> r(h, 2);
    r.set(0, h.construct(t.leaf, {Value::word(7)}));
    r.set(1, h.construct(t.link, {Value::ref(r.ref(0)), Value::word(8)}));
    CHECK(h.read_field(r.ref(1), 0).as_ref() == r.ref(0));
    CHECK(h.read_field(r.ref(0), 0).bits() == 7);
    CHECK_THROWS_AS(h.read_field(r.ref(0), 1), ContractViolation);

    CHECK_THROWS_AS(h.construct(t.leaf, {Value::ref(r.ref(0))}), ContractViolation);
    CHECK_THROWS_AS(h.construct(t.link, {Value::word(1), Value::word(2)}), ContractViolation);
    CHECK_THROWS_AS(h.construct(t.link, {Value::ref(r.ref(0))}), ContractViolation);
    CHECK_THROWS_AS(h.construct(t.link, {Value::ref(ObjectRef{42, t.leaf}), Value::word(0)}), ContractViolation);

    Heap cold(small_config());
    cold.register_type("Leaf", 1);
    CHECK_THROWS_AS(cold.construct(0, {Value::word(1)}), ContractViolation);
}

TEST_CASE("reading a ref slot after evacuation yields the moved child") {
    Heap h(small_config());
    const Types t = register_basic(h);
    RootScope<Heap> r(h, 1);
    const ObjectRef child = h.construct(t.leaf, {Value::word(31)});
    r.set(0, h.construct(t.link, {Value::ref(child), Value::word(0)}));
    h.collect();
    const ObjectRef moved = h.read_field(r.ref(0), 0).as_ref();
    CHECK(moved.address != child.address);
    CHECK(h.read_field(moved, 0).bits() == 31);
    CHECK(header_at(moved.address).old());
    CHECK(header_at(moved.address).rc() == 1);
}

TEST_CASE("a long rooted chain crosses the nursery threshold") {
    Heap h(HeapConfig{});
    const Types t = register_basic(h);
    RootScope<Heap> r(h, 1);
    r.set(0, h.construct(t.leaf, {Value::word(0)}));
    RootScope<Heap> head(h, 1);
    head.set(0, h.construct(t.triple, {Value::ref(r.ref(0)), Value::word(0), Value::word(0)}));
    for (int i = 1; i < 100'000; ++i) {
        head.set(0, h.construct(t.triple, {Value::ref(head.ref(0)), Value::word(static_cast<Word>(i)), Value::word(0)}));
    }
    CHECK(h.collections() >= 1);
    // Walk back to the leaf.
    std::size_t n = 0;
    ObjectRef at = head.ref(0);
    while (at.type == t.triple) {
        at = h.read_field(at, 0).as_ref();
        ++n;
    }
    CHECK(n == 100'000);
}

TEST_CASE("root frames") {
    Heap h(small_config());
    const Types t = register_basic(h);

    const ObjectRef kept = h.construct(t.leaf, {Value::word(1)});
    const FrameToken f = h.root_push({Value::ref(kept)});
    const ObjectRef lost = h.construct(t.leaf, {Value::word(2)});
    const FrameToken g = h.root_push({Value::word(42)});
    const CollectionRecord rec = h.collect();
    CHECK(h.pages().is_allocated(kept.address));
    CHECK(header_at(kept.address).old());
    CHECK(header_at(kept.address).rootref());
    CHECK(!h.pages().is_allocated(lost.address));
    CHECK(rec.marked == 1);
    CHECK(rec.promoted_in_place == 1);
    CHECK(rec.swept == 1);

    CHECK_THROWS_AS(h.root_pop(f), ContractViolation);
    h.root_pop(g);
    h.root_pop(f);
    CHECK_THROWS_AS(h.root_pop(f), ContractViolation);

    // Interior pointer retains and pins its object.
    const ObjectRef inner = h.construct(t.link, {Value::ref(kept), Value::word(5)});
    const FrameToken i = h.root_push({Value::word(inner.address + 8)});
    const CollectionRecord rec2 = h.collect();
    CHECK(rec2.promoted_in_place == 1);
    CHECK(rec2.evacuated == 0);
    CHECK(h.pages().is_allocated(inner.address));
    CHECK(header_at(inner.address).old());
    h.root_pop(i);

    HeapConfig tiny = small_config();
    tiny.root_capacity_words = 2;
    Heap th(tiny);
    register_basic(th);
    std::vector<Value> three(3);
    CHECK_THROWS_AS(th.root_push(three), ContractViolation);
    CHECK_THROWS_AS(th.set_global(99, Value::word(0)), ContractViolation);
}
