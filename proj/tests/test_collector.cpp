#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"

#include "catalpa/mutator.hpp"

#include <random>

using namespace catalpa;
using namespace catalpa::test;

namespace {

struct ReleaseLog : HeapObserver {
    std::vector<Address> released;
    void on_release(Address a) override { released.push_back(a); }
};

std::vector<Address> only(const std::vector<Address>& log, std::initializer_list<Address> keep) {
    std::vector<Address> out;
    for (const Address a : log) {
        if (std::find(keep.begin(), keep.end(), a) != keep.end()) out.push_back(a);
    }
    return out;
}

void garbage(Heap& h, TypeId leaf, int n) {
    for (int i = 0; i < n; ++i) h.construct(leaf, {Value::word(static_cast<Word>(i))});
}

} // namespace

TEST_CASE("an empty collection does nothing") {
    Heap h(small_config());
    register_basic(h);
    const auto r = h.collect();
    CHECK(r.marked == 0);
    CHECK(r.released == 0);
    CHECK(r.allocations == 0);
    CHECK(r.budget == 0);
    const auto r2 = h.collect();
    CHECK(r2.marked == 0);
    CHECK(r2.index == 1);
}

TEST_CASE("a root-referenced young object is promoted in place") {
    Heap h(small_config());
    const Types t = register_basic(h);
    RootScope<Heap> r(h, 1);
    r.set(0, h.construct(t.leaf, {Value::word(1)}));
    const auto rec = h.collect();
    CHECK(rec.promoted_in_place == 1);
    CHECK(rec.evacuated == 0);
    const ObjectHeader hd = header_at(r.ref(0).address);
    CHECK(hd.old());
    CHECK(hd.rc() == 0);
    CHECK(hd.rootref());
}

TEST_CASE("root -> A -> B: A stays, B moves") {
    Heap h(small_config());
    const Types t = register_basic(h);
    RootScope<Heap> r(h, 1);
    const ObjectRef b = h.construct(t.leaf, {Value::word(2)});
    r.set(0, h.construct(t.link, {Value::ref(b), Value::word(0)}));
    const auto rec = h.collect();
    CHECK(rec.promoted_in_place == 1);
    CHECK(rec.evacuated == 1);
    CHECK(rec.marked == 2);
    const Address a = r.ref(0).address;
    const Address moved = fields_at(a)[0];
    CHECK(moved != b.address);
    CHECK(header_at(a).rc() == 0);
    CHECK(header_at(a).rootref());
    CHECK(header_at(moved).rc() == 1);
    CHECK(!header_at(moved).rootref());
    CHECK(header_at(moved).old());
    CHECK(!h.pages().is_allocated(b.address));
}

TEST_CASE("mark_roots canonicalizes, deduplicates and rejects") {
    Heap h(small_config());
    const Types t = register_basic(h);
    const ObjectRef a = h.construct(t.link, {Value::ref(h.construct(t.leaf, {Value::word(0)})), Value::word(0)});
    const Address free_slot = h.pages().allocator(h.types().type(t.link).size_class).freelist_head;
    REQUIRE(free_slot != 0);

    const FrameToken f = h.root_push({Value::ref(a), Value::word(42), Value::ref(a), Value::word(a.address + 8),
                                      Value::word(free_slot)});
    h.pages().retire_alloc_pages();
    const RootCandidates rc = h.collector().mark_roots();
    CHECK(rc.all == std::vector<Address>{a.address});
    CHECK(rc.young == std::vector<Address>{a.address});
    (void)f;
}

TEST_CASE("mark_heap visits the young DAG in post-order and stops at old objects") {
    Heap h(small_config());
    const Types t = register_basic(h);

    // Old X first.
    RootScope<Heap> keep(h, 1);
    keep.set(0, h.construct(t.leaf, {Value::word(9)}));
    h.collect();
    const ObjectRef x = keep.ref(0);

    const ObjectRef d = h.construct(t.link, {Value::ref(x), Value::word(0)});
    const ObjectRef b = h.construct(t.link, {Value::ref(d), Value::word(1)});
    const ObjectRef c = h.construct(t.link, {Value::ref(d), Value::word(2)});
    const ObjectRef a = h.construct(t.pair, {Value::ref(b), Value::ref(c)});
    // A disjoint rooted chain of three.
    const ObjectRef e3 = h.construct(t.leaf, {Value::word(3)});
    const ObjectRef e2 = h.construct(t.link, {Value::ref(e3), Value::word(0)});
    const ObjectRef e1 = h.construct(t.link, {Value::ref(e2), Value::word(0)});
    RootScope<Heap> roots(h, 2);
    roots.set(0, a);
    roots.set(1, e1);

    h.pages().retire_alloc_pages();
    const RootCandidates rc = h.collector().mark_roots();
    const std::size_t before = h.collector().current().marked; // phases run by hand accumulate
    const std::vector<Address> order = h.collector().mark_heap(rc.young);
    CHECK(order.size() == 7); // 4 diamond + 3 chain, X excluded
    CHECK(!header_at(x.address).marked());
    auto pos = [&](Address p) { return std::find(order.begin(), order.end(), p) - order.begin(); };
    CHECK(pos(d.address) < pos(b.address));
    CHECK(pos(d.address) < pos(c.address));
    CHECK(pos(b.address) < pos(a.address));
    CHECK(pos(c.address) < pos(a.address));
    CHECK(pos(e3.address) < pos(e2.address));
    CHECK(pos(e2.address) < pos(e1.address));
    CHECK(h.collector().current().marked - before == 7);
}

TEST_CASE("promotion rewrites slots and increments every target once") {
    Heap h(small_config());
    const Types t = register_basic(h);

    SUBCASE("rooted A -> rooted B") {
        const ObjectRef b = h.construct(t.leaf, {Value::word(0)});
        const ObjectRef a = h.construct(t.link, {Value::ref(b), Value::word(0)});
        RootScope<Heap> r(h, 2);
        r.set(0, a);
        r.set(1, b);
        const auto rec = h.collect();
        CHECK(rec.promoted_in_place == 2);
        CHECK(header_at(a.address).rc() == 0);
        CHECK(header_at(a.address).rootref());
        CHECK(header_at(b.address).rc() == 1);
        CHECK(header_at(b.address).rootref());
        CHECK(fields_at(a.address)[0] == b.address);
    }
    SUBCASE("young A -> old X") {
        RootScope<Heap> keep(h, 1);
        keep.set(0, h.construct(t.leaf, {Value::word(0)}));
        h.collect();
        const Address x = keep.ref(0).address;
        CHECK(header_at(x).rc() == 0);
        RootScope<Heap> r(h, 1);
        r.set(0, h.construct(t.link, {Value::ref(keep.ref(0)), Value::word(0)}));
        h.collect();
        CHECK(header_at(x).rc() == 1);
        RootScope<Heap> r2(h, 1);
        r2.set(0, h.construct(t.pair, {Value::ref(keep.ref(0)), Value::ref(keep.ref(0))}));
        h.collect();
        CHECK(header_at(x).rc() == 3);
    }
}

TEST_CASE("sweep settles nursery pages") {
    Heap h(small_config(64 * 1024));
    const Types t = register_basic(h);
    const std::size_t spp = h.pages().size_class(h.types().type(t.link).size_class).slots_per_page;
    REQUIRE(spp == 170);
    const ObjectRef leaf = h.construct(t.leaf, {Value::word(0)});
    RootScope<Heap> pin(h, 1);
    pin.set(0, leaf);

    // Page 1: one pinned survivor. Page 2: one evacuated survivor. Page 3: nothing.
    std::vector<ObjectRef> page1, page2, page3;
    for (std::size_t i = 0; i < spp; ++i) page1.push_back(h.construct(t.link, {Value::ref(leaf), Value::word(i)}));
    for (std::size_t i = 0; i < spp; ++i) page2.push_back(h.construct(t.link, {Value::ref(leaf), Value::word(i)}));
    for (std::size_t i = 0; i < spp; ++i) page3.push_back(h.construct(t.link, {Value::ref(leaf), Value::word(i)}));
    const std::size_t p1 = h.pages().page_of(page1[0].address);
    const std::size_t p2 = h.pages().page_of(page2[0].address);
    const std::size_t p3 = h.pages().page_of(page3[0].address);
    REQUIRE(h.pages().page_of(page1.back().address) == p1);
    REQUIRE(p1 != p2);
    REQUIRE(p2 != p3);

    RootScope<Heap> r(h, 1);
    r.set(0, page1[5]);
    const ObjectRef holder = h.construct(t.link, {Value::ref(page2[7]), Value::word(0)});
    RootScope<Heap> r2(h, 1);
    r2.set(0, holder);
    const auto rec = h.collect();
    CHECK(rec.promoted_in_place == 3); // leaf, page1[5], holder
    CHECK(rec.evacuated == 1);

    CHECK(h.pages().meta(p1).state == PageState::OldPartial);
    CHECK(h.pages().meta(p1).bin == 0);
    CHECK(freelist_length(h.pages(), p1) == spp - 1);
    CHECK(h.pages().meta(p2).state == PageState::Free); // only a husk was left
    CHECK(freelist_length(h.pages(), p2) == spp);
    CHECK(h.pages().meta(p3).state == PageState::Free);
    CHECK(freelist_length(h.pages(), p3) == spp);
    CHECK(rec.swept == 3 * spp - 2);
}

TEST_CASE("snapshot diff") {
    Heap h(small_config());
    const Types t = register_basic(h);
    const ObjectRef a = h.construct(t.leaf, {Value::word(1)});
    const ObjectRef b = h.construct(t.leaf, {Value::word(2)});
    const ObjectRef c = h.construct(t.leaf, {Value::word(3)});
    const ObjectRef d = h.construct(t.leaf, {Value::word(4)});
    const ObjectRef x = h.construct(t.link, {Value::ref(d), Value::word(0)});
    RootScope<Heap> r(h, 4);
    r.set(0, a);
    r.set(1, b);
    r.set(2, c);
    r.set(3, x);
    h.collect();
    const Address dm = fields_at(x.address)[0]; // d was evacuated
    REQUIRE(header_at(dm).rc() == 1);

    SUBCASE("prev {a,b,c,x}, cur {b,d,x}") {
        std::vector<Address> cur{b.address, dm, x.address};
        std::sort(cur.begin(), cur.end());
        const std::size_t enq = h.collector().compute_dead_roots(cur);
        CHECK(enq == 2);
        CHECK(!header_at(a.address).rootref());
        CHECK(!header_at(c.address).rootref());
        CHECK(header_at(b.address).rootref());
        CHECK(header_at(dm).rootref());
        CHECK(h.collector().worklist().size() == 2);
        CHECK(h.collector().root_snapshot() == cur);
    }
    SUBCASE("identical snapshot enqueues nothing") {
        const std::vector<Address> same = h.collector().root_snapshot();
        CHECK(h.collector().compute_dead_roots(same) == 0);
        CHECK(h.collector().worklist().empty());
    }
}

TEST_CASE("dropping a root of a referenced object defers it to the counts") {
    Heap h(small_config());
    const Types t = register_basic(h);
    const ObjectRef o = h.construct(t.leaf, {Value::word(0)});
    RootScope<Heap> holders(h, 3);
    for (std::size_t i = 0; i < 3; ++i) holders.set(i, h.construct(t.link, {Value::ref(o), Value::word(i)}));
    {
        RootScope<Heap> r(h, 1);
        r.set(0, o);
        h.collect();
        CHECK(header_at(o.address).rc() == 3);
        CHECK(header_at(o.address).rootref());
    }
    garbage(h, t.leaf, 10);
    const auto rec = h.collect();
    CHECK(!header_at(o.address).rootref());
    CHECK(h.pages().is_allocated(o.address));
    CHECK(rec.released == 0);

    // Dropping the holders releases them and then o.
    for (std::size_t i = 0; i < 3; ++i) holders.set(i, Value::word(0));
    garbage(h, t.leaf, 10);
    const auto rec2 = h.collect();
    CHECK(rec2.released == 4);
    CHECK(!h.pages().is_allocated(o.address));
}

TEST_CASE("decrement cascade releases a chain in order") {
    Heap h(small_config());
    const Types t = register_basic(h);
    ReleaseLog log;
    h.set_observer(&log);
    const ObjectRef c = h.construct(t.leaf, {Value::word(0)});
    const ObjectRef b = h.construct(t.link, {Value::ref(c), Value::word(0)});
    Address aa = 0, ba = 0, ca = 0;
    {
        RootScope<Heap> r(h, 1);
        r.set(0, h.construct(t.link, {Value::ref(b), Value::word(0)}));
        h.collect();
        aa = r.ref(0).address;
        ba = fields_at(aa)[0];
        ca = fields_at(ba)[0];
    }
    log.released.clear();
    garbage(h, t.leaf, 2); // budget ceil(1.5 * 2) = 3
    const auto rec = h.collect();
    CHECK(rec.budget == 3);
    CHECK(rec.released == 3);
    CHECK(only(log.released, {aa, ba, ca}) == std::vector<Address>{aa, ba, ca});
    h.set_observer(nullptr);
}

TEST_CASE("release budget caps a long cascade and the rest is deferred") {
    Heap h(small_config(std::size_t{1} << 20));
    const Types t = register_basic(h);
    {
        RootScope<Heap> head(h, 1);
        head.set(0, h.construct(t.leaf, {Value::word(0)}));
        for (int i = 1; i < 5000; ++i) head.set(0, h.construct(t.link, {Value::ref(head.ref(0)), Value::word(0)}));
        h.collect();
        CHECK(object_count(h) == 5000);
    }
    garbage(h, t.leaf, 1000);
    const auto rec = h.collect();
    CHECK(rec.allocations == 1000);
    CHECK(rec.budget == 1500);
    CHECK(rec.released == 1500);
    CHECK(object_count(h) == 3500);
    CHECK(rec.deferred_backlog >= 1);

    // Later collections finish the job within their own budgets.
    std::size_t later = 0;
    for (int i = 0; i < 3; ++i) {
        garbage(h, t.leaf, 1000);
        later += h.collect().released;
    }
    CHECK(later == 3500);
    CHECK(object_count(h) == 0);
}

TEST_CASE("an enqueued object re-rooted before processing is skipped") {
    Heap h(small_config());
    const Types t = register_basic(h);
    const ObjectRef a = h.construct(t.leaf, {Value::word(0)});
    {
        RootScope<Heap> r(h, 1);
        r.set(0, a);
        h.collect();
    }
    // No allocations: budget 0, so a waits on the worklist.
    const auto rec = h.collect();
    CHECK(rec.budget == 0);
    CHECK(h.collector().worklist().size() == 1);
    CHECK(header_at(a.address).queued());

    RootScope<Heap> again(h, 1);
    again.set(0, a);
    garbage(h, t.leaf, 4);
    const auto rec2 = h.collect();
    CHECK(rec2.skipped == 1);
    CHECK(rec2.released == 0);
    CHECK(h.pages().is_allocated(a.address));
    CHECK(!header_at(a.address).queued());
    CHECK(header_at(a.address).rootref());
}

TEST_CASE("a draining collection ignores the budget") {
    Heap h(small_config());
    const Types t = register_basic(h);
    {
        RootScope<Heap> head(h, 1);
        head.set(0, h.construct(t.leaf, {Value::word(0)}));
        for (int i = 1; i < 300; ++i) head.set(0, h.construct(t.link, {Value::ref(head.ref(0)), Value::word(0)}));
        h.collect();
    }
    const auto rec = h.collector().collect(true);
    CHECK(rec.drain);
    CHECK(rec.released == 300);
    CHECK(object_count(h) == 0);
}

TEST_CASE("random mutation keeps counts exact and the old space closed") {
    Heap h(small_config(16 * 1024));
    const Types t = register_basic(h);
    std::mt19937_64 rng(7);
    RootScope<Heap> slots(h, 8);
    for (std::size_t i = 0; i < 8; ++i) slots.set(i, h.construct(t.leaf, {Value::word(i)}));
    for (int step = 0; step < 40'000; ++step) {
        const std::size_t i = rng() % 8;
        const std::size_t j = rng() % 8;
        switch (rng() % 4) {
        case 0: slots.set(i, h.construct(t.leaf, {Value::word(rng())})); break;
        case 1: slots.set(i, h.construct(t.link, {Value::ref(slots.ref(j)), Value::word(0)})); break;
        case 2: slots.set(i, h.construct(t.pair, {Value::ref(slots.ref(i)), Value::ref(slots.ref(j))})); break;
        default: slots.set(i, h.construct(t.triple, {Value::ref(slots.ref(j)), Value::word(1), Value::word(2)}));
        }
    }
    h.collect();
    REQUIRE(h.collections() > 10);

    const auto in = heap_indegree(h);
    std::size_t wrong_rc = 0, old_to_young = 0, young = 0;
    h.for_each_object([&](Address a, const ObjectHeader& hd) {
        if (!hd.old()) ++young;
        if (hd.rc() != in.at(a)) ++wrong_rc;
        for (const auto s : h.types().type(hd.type()).ref_slots) {
            if (!header_at(static_cast<Address>(fields_at(a)[s])).old()) ++old_to_young;
        }
    });
    CHECK(wrong_rc == 0);
    CHECK(old_to_young == 0);
    CHECK(young == 0);
    for (const auto& r : h.records()) {
        if (!r.drain) CHECK(r.released <= r.budget);
    }
}

TEST_CASE("work units are a deterministic function of the run") {
    auto trace = [] {
        Heap h(small_config(16 * 1024));
        const Types t = register_basic(h);
        std::mt19937_64 rng(3);
        RootScope<Heap> slots(h, 4);
        for (std::size_t i = 0; i < 4; ++i) slots.set(i, h.construct(t.leaf, {Value::word(i)}));
        for (int step = 0; step < 20'000; ++step) {
            const std::size_t i = rng() % 4;
            slots.set(i, h.construct(t.pair, {Value::ref(slots.ref(i)), Value::ref(slots.ref(rng() % 4))}));
            if (rng() % 16 == 0) slots.set(i, h.construct(t.leaf, {Value::word(0)}));
        }
        std::vector<std::uint64_t> w;
        for (const auto& r : h.records()) w.push_back(r.work_units);
        return w;
    };
    const auto a = trace();
    CHECK(!a.empty());
    CHECK(a == trace());
}
