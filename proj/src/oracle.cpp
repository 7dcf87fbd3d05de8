#include "catalpa/oracle.hpp"

#include <algorithm>
#include <iomanip>
#include <limits>
#include <sstream>

namespace catalpa {

namespace {

std::string hex(Address a) {
    std::ostringstream s;
    s << "0x" << std::hex << a;
    return s.str();
}

std::string describe(Oracle::NodeId id, Address a) {
    return "node " + std::to_string(id) + " at " + hex(a);
}

std::size_t saturating_add(std::size_t a, std::size_t b) {
    return a > std::numeric_limits<std::size_t>::max() - b ? std::numeric_limits<std::size_t>::max() : a + b;
}

} // namespace

bool InvariantReport::passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed(); });
}

CheckResult& InvariantReport::check(const std::string& name) {
    for (auto& c : checks) {
        if (c.name == name) return c;
    }
    CheckResult c;
    c.name = name;
    checks.push_back(std::move(c));
    return checks.back();
}

const CheckResult* InvariantReport::find(const std::string& name) const {
    for (const auto& c : checks) {
        if (c.name == name) return &c;
    }
    return nullptr;
}

void InvariantReport::merge(const InvariantReport& other) {
    for (const auto& o : other.checks) {
        CheckResult& c = check(o.name);
        c.evaluations += o.evaluations;
        if (c.violations == 0 && o.violations != 0) c.first_violation = o.first_violation;
        c.violations += o.violations;
    }
}

nlohmann::json InvariantReport::to_json() const {
    nlohmann::json out = nlohmann::json::object();
    out["passed"] = passed();
    nlohmann::json list = nlohmann::json::array();
    for (const auto& c : checks) {
        nlohmann::json j{{"name", c.name},
                         {"passed", c.passed()},
                         {"evaluations", c.evaluations},
                         {"violations", c.violations}};
        if (!c.passed()) j["first_violation"] = c.first_violation;
        list.push_back(std::move(j));
    }
    out["checks"] = std::move(list);
    return out;
}

Oracle::Oracle(Heap& heap, bool check_each_collection)
    : heap_(heap), check_each_collection_(check_each_collection), globals_(heap.roots().global_count()) {
    if (!heap.frozen()) throw ContractViolation("attach the oracle after freeze()");
    if (heap.total_allocations() != 0) throw ContractViolation("attach the oracle before the first allocation");
    for (auto* name : {"safety", "event_consistency", "bounded_liveness", "fringe_touch"}) events_.check(name);
    consistency_ = &events_.check("event_consistency");
    heap_.set_observer(this);
    heap_.collector().set_touch_log(&touch_log_);
}

Oracle::~Oracle() {
    if (heap_.observer() == this) heap_.set_observer(nullptr);
    heap_.collector().set_touch_log(nullptr);
}

void Oracle::fault(const std::string& what) { consistency_->fail(what); }

std::size_t Oracle::faults() const {
    std::size_t n = 0;
    for (const auto& c : events_.checks) n += c.violations;
    return n;
}

std::optional<Oracle::NodeId> Oracle::node_at(Address a) const {
    const auto it = by_address_.find(a);
    if (it == by_address_.end()) return std::nullopt;
    return it->second;
}

std::optional<Oracle::NodeId> Oracle::node_containing(Word w) const {
    auto it = by_address_.upper_bound(static_cast<Address>(w));
    if (it == by_address_.begin()) return std::nullopt;
    --it;
    const Node& n = nodes_[it->second];
    if (w < n.address + n.bytes) return it->second;
    return std::nullopt;
}

std::span<const Oracle::NodeId> Oracle::children(NodeId id) const {
    const Node& n = nodes_[id];
    return {child_ids_.data() + n.child_offset, n.child_count};
}

std::span<const Word> Oracle::fields(NodeId id) const {
    const Node& n = nodes_[id];
    return {field_words_.data() + n.field_offset, n.slot_count};
}

Oracle::RootEntry Oracle::entry_for(Value v, const char* where) {
    RootEntry e;
    e.raw = v.bits();
    if (v.is_ref()) {
        const auto id = node_at(v.as_ref().address);
        if (!id) {
            fault(std::string(where) + " of a reference to no known object at " + hex(v.as_ref().address));
        } else {
            e.is_ref = true;
            e.node = *id;
        }
    }
    return e;
}

void Oracle::on_construct(ObjectRef obj, std::span<const Value> values) {
    ++consistency_->evaluations;
    const TypeDescriptor& t = heap_.types().type(obj.type);
    Node n;
    n.type = obj.type;
    n.address = obj.address;
    n.bytes = static_cast<std::uint32_t>(t.slot_bytes);
    n.slot_count = t.slot_count;
    n.field_offset = field_words_.size();
    n.child_offset = child_ids_.size();
    n.born = completed_;
    const auto id = static_cast<NodeId>(nodes_.size());

    for (const Value& v : values) {
        field_words_.push_back(v.bits());
        if (!v.is_ref()) continue;
        const auto child = node_at(v.as_ref().address);
        if (!child) {
            fault("construct of " + describe(id, obj.address) + " references no known object at " +
                  hex(v.as_ref().address));
            continue;
        }
        if (*child >= id) fault("cycle: " + describe(id, obj.address) + " references a younger node");
        child_ids_.push_back(*child);
        ++n.child_count;
    }
    if (!by_address_.emplace(obj.address, id).second) {
        fault("construct at " + hex(obj.address) + " overlaps live " +
              describe(by_address_[obj.address], obj.address));
        by_address_[obj.address] = id;
    }
    nodes_.push_back(n);
    ++unreleased_;
}

void Oracle::on_root_push(FrameToken frame, std::span<const Value> values) {
    ++consistency_->evaluations;
    if (frame.depth != frames_.size()) fault("root frame pushed out of order");
    std::vector<RootEntry> entries;
    entries.reserve(values.size());
    for (const Value& v : values) entries.push_back(entry_for(v, "root push"));
    frames_.push_back(std::move(entries));
}

void Oracle::on_root_pop(FrameToken frame) {
    ++consistency_->evaluations;
    if (frames_.empty() || frame.depth + 1 != frames_.size()) {
        fault("root frame popped out of order");
        return;
    }
    frames_.pop_back();
}

void Oracle::on_root_set(FrameToken frame, std::size_t index, Value v) {
    ++consistency_->evaluations;
    if (frame.depth >= frames_.size() || index >= frames_[frame.depth].size()) {
        fault("root set outside a live frame");
        return;
    }
    frames_[frame.depth][index] = entry_for(v, "root set");
}

void Oracle::on_global_set(std::size_t index, Value v) {
    ++consistency_->evaluations;
    if (index >= globals_.size()) {
        fault("global index out of range");
        return;
    }
    globals_[index] = entry_for(v, "global set");
}

template <class F>
void Oracle::for_each_root(F&& f) const {
    for (const auto& e : globals_) f(e);
    for (const auto& frame : frames_) {
        for (const auto& e : frame) f(e);
    }
}

namespace {

template <class Children>
void close_over(std::vector<bool>& mask, std::vector<Oracle::NodeId>& stack, Children&& children) {
    while (!stack.empty()) {
        const Oracle::NodeId n = stack.back();
        stack.pop_back();
        for (const Oracle::NodeId c : children(n)) {
            if (!mask[c]) {
                mask[c] = true;
                stack.push_back(c);
            }
        }
    }
}

} // namespace

std::vector<bool> Oracle::reachable_mask() const {
    std::vector<bool> mask(nodes_.size(), false);
    std::vector<NodeId> stack;
    for_each_root([&](const RootEntry& e) {
        if (e.is_ref && !mask[e.node]) {
            mask[e.node] = true;
            stack.push_back(e.node);
        }
    });
    close_over(mask, stack, [&](NodeId n) { return children(n); });
    return mask;
}

std::vector<Oracle::NodeId> Oracle::reachable_set() const {
    const auto mask = reachable_mask();
    std::vector<NodeId> out;
    for (NodeId i = 0; i < mask.size(); ++i) {
        if (mask[i]) out.push_back(i);
    }
    return out;
}

std::vector<bool> Oracle::conservative_mask() const {
    std::vector<bool> mask(nodes_.size(), false);
    std::vector<NodeId> stack;
    for_each_root([&](const RootEntry& e) {
        if (e.is_ref) return;
        if (const auto n = node_containing(e.raw); n && !mask[*n]) {
            mask[*n] = true;
            stack.push_back(*n);
        }
    });
    close_over(mask, stack, [&](NodeId n) { return children(n); });
    return mask;
}

std::size_t Oracle::live_bytes() const {
    const auto mask = reachable_mask();
    std::size_t bytes = 0;
    for (NodeId i = 0; i < mask.size(); ++i) {
        if (mask[i]) bytes += nodes_[i].bytes;
    }
    return bytes;
}

void Oracle::on_collection_begin() {
    reachable_at_begin_ = reachable_mask();
    released_this_cycle_.clear();
    released_addresses_.clear();
    touch_log_.clear();

    // Old objects the collector may legitimately touch, known before it runs.
    fringe_allowed_.clear();
    for (NodeId i = 0; i < nodes_.size(); ++i) {
        const Node& n = nodes_[i];
        if (n.released || n.born != completed_) continue;
        for (const NodeId c : children(i)) fringe_allowed_.insert(c);
    }
    for (const NodeId n : previous_root_nodes_) fringe_allowed_.insert(n);
    previous_root_nodes_.clear();
    for_each_root([&](const RootEntry& e) {
        if (const auto n = node_containing(e.raw)) previous_root_nodes_.push_back(*n);
    });
    std::sort(previous_root_nodes_.begin(), previous_root_nodes_.end());
    previous_root_nodes_.erase(std::unique(previous_root_nodes_.begin(), previous_root_nodes_.end()),
                               previous_root_nodes_.end());
    for (const NodeId n : previous_root_nodes_) fringe_allowed_.insert(n);
    for (const Address a : heap_.collector().worklist()) {
        if (const auto n = node_at(a)) fringe_allowed_.insert(*n);
    }
}

void Oracle::on_evacuate(Address from, Address to) {
    ++consistency_->evaluations;
    const auto it = by_address_.find(from);
    if (it == by_address_.end()) {
        fault("evacuation of unknown address " + hex(from));
        return;
    }
    const NodeId id = it->second;
    if (nodes_[id].born != completed_) fault("evacuation of old " + describe(id, from));
    by_address_.erase(it);
    if (!by_address_.emplace(to, id).second) {
        fault("evacuation of " + describe(id, from) + " onto live object at " + hex(to));
    }
    nodes_[id].address = to;
}

void Oracle::on_release(Address a) {
    ++consistency_->evaluations;
    const auto it = by_address_.find(a);
    if (it == by_address_.end()) {
        fault("release of unknown address " + hex(a));
        return;
    }
    const NodeId id = it->second;
    auto& safety = events_.check("safety");
    ++safety.evaluations;
    if (id < reachable_at_begin_.size() && reachable_at_begin_[id]) {
        safety.fail("released reachable " + describe(id, a));
    }
    by_address_.erase(it);
    nodes_[id].released = true;
    --unreleased_;
    released_this_cycle_.push_back(id);
    released_addresses_.emplace(a, id);
}

void Oracle::check_fringe(const CollectionRecord& record) {
    auto& fringe = events_.check("fringe_touch");
    ++fringe.evaluations;
    std::unordered_set<NodeId> allowed = fringe_allowed_;
    for (const NodeId id : released_this_cycle_) {
        if (nodes_[id].born == completed_) continue; // dead young, never an old touch
        allowed.insert(id);
        for (const NodeId c : children(id)) allowed.insert(c);
    }
    for (const Address a : touch_log_) {
        std::optional<NodeId> id = node_at(a);
        if (!id) {
            const auto it = released_addresses_.find(a);
            if (it != released_addresses_.end()) id = it->second;
        }
        if (!id) {
            fringe.fail("collection " + std::to_string(record.index) + " touched unknown address " + hex(a));
        } else if (!allowed.contains(*id)) {
            fringe.fail("collection " + std::to_string(record.index) + " touched non-fringe " + describe(*id, a));
        }
    }
    touch_log_.clear();
}

void Oracle::check_liveness(const CollectionRecord& record) {
    auto& live = events_.check("bounded_liveness");
    ++live.evaluations;
    const auto reach = reachable_mask();
    const auto retained = conservative_mask();

    for (auto it = obligations_.begin(); it != obligations_.end();) {
        Obligation& ob = *it;
        if (ob.deadline && record.index >= *ob.deadline) {
            for (const NodeId id : ob.nodes) {
                if (!nodes_[id].released && !retained[id]) {
                    live.fail("unreachable at collection " + std::to_string(ob.collection) + " but unreleased by " +
                              std::to_string(record.index) + ": " + describe(id, nodes_[id].address));
                }
            }
            it = obligations_.erase(it);
            continue;
        }
        ob.cumulative_budget = saturating_add(ob.cumulative_budget, record.budget);
        if (!ob.deadline && ob.cumulative_budget >= ob.nodes.size()) ob.deadline = record.index + 1;
        ++it;
    }

    // Garbage pending after this collection. Released in order ahead of
    // anything discovered later, so the budgets of the following collections
    // bound when it is gone.
    Obligation ob;
    ob.collection = record.index;
    for (NodeId i = 0; i < nodes_.size(); ++i) {
        if (!nodes_[i].released && !reach[i] && !retained[i]) ob.nodes.push_back(i);
    }
    if (!ob.nodes.empty()) obligations_.push_back(std::move(ob));
}

void Oracle::on_collection_end(const CollectionRecord& record) {
    check_fringe(record);
    ++completed_;
    check_liveness(record);
    if (check_each_collection_) {
        boundaries_.merge(check_invariants(heap_, false));
    }
}

void Oracle::check_work_bound(const Heap& heap, const CollectionRecord& record, InvariantReport& report) const {
    // Analytic per-collection cost: every allocation contributes at most a
    // fixed number of marks, copied words, fixups, increments and one page's
    // sweep and threading; releases cost their dequeue, decrements and settle.
    std::size_t max_refs = 0;
    std::size_t max_words = 0;
    for (const auto& t : heap.types().types()) {
        max_refs = std::max(max_refs, t.ref_slots.size());
        max_words = std::max(max_words, t.slot_bytes / kWordBytes);
    }
    std::size_t max_spp = 0;
    for (const auto& c : heap.types().size_classes()) max_spp = std::max(max_spp, c.slots_per_page);

    const auto& records = heap.records();
    const std::size_t prev_roots = record.index > 0 ? records[record.index - 1].root_words : 0;
    const std::size_t nursery_words = heap.config().nursery_threshold_bytes / kWordBytes;
    const std::size_t c1 = 4;
    const std::size_t c2 = 4;
    const std::size_t c3 = 4 + 2 * max_refs + max_words + 3 * (max_spp + 1);
    const std::size_t budget =
        record.drain ? heap.config().release_budget(record.allocations) + record.released : record.budget;
    const std::size_t bound = c1 * nursery_words + c2 * (record.root_words + prev_roots) + c3 * budget;

    auto& c = report.check("work_bound");
    ++c.evaluations;
    if (record.work_units > bound + record.skipped) {
        c.fail("collection " + std::to_string(record.index) + " used " + std::to_string(record.work_units) +
               " work units, bound " + std::to_string(bound));
    }
}

InvariantReport Oracle::cumulative() const {
    InvariantReport out = events_;
    out.merge(boundaries_);
    return out;
}

InvariantReport Oracle::check_invariants(const Heap& heap) const { return check_invariants(heap, true); }

InvariantReport Oracle::check_invariants(const Heap& heap, bool with_events) const {
    InvariantReport report;
    if (with_events) report.merge(events_);
    const PageHeap& pages = heap.pages();
    const Collector& collector = heap.collector();

    // Shadow and heap agree on which objects exist, where, and what they hold.
    auto& bijection = report.check("address_bijection");
    auto& immutable = report.check("immutable_fields");
    auto& dag = report.check("dag");
    ++bijection.evaluations;
    ++immutable.evaluations;
    ++dag.evaluations;
    std::vector<std::size_t> indegree(nodes_.size(), 0);
    for (NodeId i = 0; i < nodes_.size(); ++i) {
        const Node& n = nodes_[i];
        if (n.released) continue;
        if (!pages.is_allocated(n.address) || header_at(n.address).type() != n.type) {
            bijection.fail(describe(i, n.address) + " is not an allocated object of its type");
            continue;
        }
        const TypeDescriptor& t = heap.types().type(n.type);
        const Word* words = fields_at(n.address);
        const auto kids = children(i);
        const auto raw = fields(i);
        std::size_t k = 0;
        for (std::size_t s = 0; s < t.slot_count; ++s) {
            if (t.ref_mask[s]) {
                const NodeId c = kids[k++];
                if (c >= i) dag.fail(describe(i, n.address) + " has a non-older child");
                if (nodes_[c].released) {
                    bijection.fail(describe(i, n.address) + " references released node " + std::to_string(c));
                } else if (words[s] != nodes_[c].address) {
                    immutable.fail(describe(i, n.address) + " slot " + std::to_string(s) + " does not address node " +
                                   std::to_string(c));
                }
                ++indegree[c];
            } else if (words[s] != raw[s]) {
                immutable.fail(describe(i, n.address) + " slot " + std::to_string(s) + " changed");
            }
        }
    }
    std::size_t heap_objects = 0;
    auto& young = report.check("no_young_objects");
    auto& old_young = report.check("no_old_to_young");
    ++young.evaluations;
    ++old_young.evaluations;
    heap.for_each_object([&](Address a, const ObjectHeader& h) {
        ++heap_objects;
        if (!node_at(a)) bijection.fail("heap object at " + hex(a) + " has no shadow node");
        if (h.young() || h.forwarded() || h.marked()) {
            young.fail("object at " + hex(a) + " is young, forwarded or marked at a boundary");
        }
        if (!h.old()) return;
        const TypeDescriptor& t = heap.types().type(h.type());
        for (const auto s : t.ref_slots) {
            const Address target = static_cast<Address>(fields_at(a)[s]);
            if (!pages.is_allocated(target)) {
                old_young.fail("old object at " + hex(a) + " slot " + std::to_string(s) + " addresses a free slot");
            } else if (!header_at(target).old()) {
                old_young.fail("old object at " + hex(a) + " slot " + std::to_string(s) + " addresses young object " +
                               hex(target));
            }
        }
    });
    if (heap_objects != unreleased_) {
        bijection.fail("heap holds " + std::to_string(heap_objects) + " objects, shadow " +
                       std::to_string(unreleased_));
    }

    // Reference counts equal in-degrees from unreleased parents.
    auto& rc = report.check("rc_exact");
    ++rc.evaluations;
    for (NodeId i = 0; i < nodes_.size(); ++i) {
        const Node& n = nodes_[i];
        if (n.released || !pages.is_allocated(n.address)) continue;
        const std::uint32_t got = header_at(n.address).rc();
        if (got != indegree[i]) {
            rc.fail(describe(i, n.address) + " has rc " + std::to_string(got) + ", in-degree " +
                    std::to_string(indegree[i]));
        }
    }

    // Root snapshot matches the shadow's own canonicalization of root words.
    auto& snap = report.check("root_snapshot");
    ++snap.evaluations;
    const auto& snapshot = collector.root_snapshot();
    if (!std::is_sorted(snapshot.begin(), snapshot.end()) ||
        std::adjacent_find(snapshot.begin(), snapshot.end()) != snapshot.end()) {
        snap.fail("snapshot is not strictly ascending");
    }
    if (!heap.records().empty()) {
        std::vector<Address> expected;
        for (const NodeId n : previous_root_nodes_) {
            if (!nodes_[n].released) expected.push_back(nodes_[n].address);
        }
        std::sort(expected.begin(), expected.end());
        if (expected != snapshot) {
            snap.fail("snapshot has " + std::to_string(snapshot.size()) + " members, shadow roots " +
                      std::to_string(expected.size()));
        }
    }
    heap.for_each_object([&](Address a, const ObjectHeader& h) {
        if (h.rootref() != std::binary_search(snapshot.begin(), snapshot.end(), a)) {
            snap.fail("rootref flag of " + hex(a) + " disagrees with the snapshot");
        }
    });

    // Page table, bitmaps, free-lists and bins agree.
    auto& duality = report.check("freelist_duality");
    auto& page_state = report.check("page_state");
    ++duality.evaluations;
    ++page_state.evaluations;
    for (std::size_t p = 0; p < pages.committed_pages(); ++p) {
        const PageMeta& m = pages.meta(p);
        const std::string where = "page " + std::to_string(p);
        const std::size_t live = pages.live_slots(p);
        switch (m.state) {
        case PageState::Free:
            if (live != 0) page_state.fail(where + " is Free with " + std::to_string(live) + " live slots");
            break;
        case PageState::OldFull:
        case PageState::OldPartial:
            break;
        default:
            page_state.fail(where + " is " + to_string(m.state) + " at a collection boundary");
        }
        if (m.size_class == kNoClass) {
            if (m.state != PageState::Free) page_state.fail(where + " has no size class");
            continue;
        }
        const SizeClass& cls = pages.size_class(m.size_class);
        if (m.state == PageState::OldFull && live != cls.slots_per_page) {
            page_state.fail(where + " is OldFull with free slots");
        }
        if (m.state == PageState::OldPartial) {
            if (live == 0 || live == cls.slots_per_page) page_state.fail(where + " is OldPartial but empty or full");
            const auto b = pages.bin_for(live, cls.slots_per_page);
            const auto& members = pages.bin(m.size_class, b);
            if (m.bin != b || m.bin_pos >= members.size() || members[m.bin_pos] != p) {
                page_state.fail(where + " is not filed in utilization bin " + std::to_string(b));
            }
        }
        if (m.live_count != live) page_state.fail(where + " live count is stale");

        // Free-list threads exactly the clear bits.
        const Address base = pages.page_base(p);
        std::size_t listed = 0;
        for (Address e = m.freelist_head; e != 0; e = *reinterpret_cast<const Word*>(e)) {
            if (e < base || e >= base + pages.page_bytes() || (e - base) % cls.slot_bytes != 0) {
                duality.fail(where + " free-list leaves the page at " + hex(e));
                break;
            }
            const std::size_t slot = (e - base) / cls.slot_bytes;
            if (slot >= cls.slots_per_page || pages.allocated(p, slot)) {
                duality.fail(where + " free-list holds allocated slot " + std::to_string(slot));
                break;
            }
            if (++listed > cls.slots_per_page) {
                duality.fail(where + " free-list is cyclic");
                break;
            }
        }
        if (listed != cls.slots_per_page - live) {
            duality.fail(where + " threads " + std::to_string(listed) + " slots, bitmap has " +
                         std::to_string(cls.slots_per_page - live) + " clear");
        }
    }

    // Everything unreachable yet unreleased is explained by a raw root word
    // or by pending decrements.
    auto& gap = report.check("conservative_gap");
    ++gap.evaluations;
    const auto reach = reachable_mask();
    auto explained = conservative_mask();
    {
        std::vector<NodeId> stack;
        for (const Address a : collector.worklist()) {
            const auto n = node_at(a);
            if (n && !explained[*n]) {
                explained[*n] = true;
                stack.push_back(*n);
            }
        }
        close_over(explained, stack, [&](NodeId n) { return children(n); });
    }
    std::size_t live_bytes = 0;
    for (NodeId i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].released) continue;
        if (reach[i]) {
            live_bytes += nodes_[i].bytes;
        } else if (!explained[i]) {
            gap.fail("unreachable " + describe(i, nodes_[i].address) + " is retained without cause");
        }
    }

    // Collection-level properties of the most recent record.
    if (!heap.records().empty()) {
        const CollectionRecord& r = heap.records().back();
        auto& eff = report.check("effectiveness");
        ++eff.evaluations;
        if (r.deferred_backlog != 0 && r.released != r.budget) {
            eff.fail("collection " + std::to_string(r.index) + " released " + std::to_string(r.released) +
                     " of budget " + std::to_string(r.budget) + " with " + std::to_string(r.deferred_backlog) +
                     " pending");
        }
        check_work_bound(heap, r, report);
    }

    auto& overhead = report.check("memory_overhead");
    ++overhead.evaluations;
    const std::size_t slack = std::max<std::size_t>(std::size_t{1} << 20, live_bytes / 4);
    const std::size_t limit = live_bytes + heap.config().nursery_threshold_bytes + slack;
    if (heap.committed_bytes() > limit) {
        overhead.fail("committed " + std::to_string(heap.committed_bytes()) + " bytes exceeds " +
                      std::to_string(limit) + " (live " + std::to_string(live_bytes) + ")");
    }
    return report;
}

} // namespace catalpa
