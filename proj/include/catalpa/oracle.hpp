#pragma once

#include "catalpa/heap.hpp"
#include "catalpa/heap_observer.hpp"

#include <json.hpp>

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

namespace catalpa {

struct CheckResult {
    std::string name;
    std::size_t evaluations = 0;
    std::size_t violations = 0;
    std::string first_violation;

    bool passed() const { return violations == 0; }
    void fail(const std::string& what) {
        if (violations++ == 0) first_violation = what;
    }
};

struct InvariantReport {
    std::deque<CheckResult> checks; // stable references across check()

    bool passed() const;
    CheckResult& check(const std::string& name);
    const CheckResult* find(const std::string& name) const;
    /// Accumulates counts from another report, keeping the first violation.
    void merge(const InvariantReport& other);
    nlohmann::json to_json() const;
};

/// Independent shadow model of the logical object graph. It learns about the
/// heap only through observer events and the public inspection interface
/// (object walk, page table, root snapshot, worklist) and never shares code
/// paths with the collector: reachability is precise, and conservative words
/// are canonicalized against its own address map.
///
/// Attaching an Oracle turns on the collector's touch log; every collection
/// is checked on completion and folded into cumulative().
class Oracle : public HeapObserver {
public:
    using NodeId = std::uint32_t;

    struct Node {
        TypeId type = 0;
        Address address = 0;
        std::uint32_t bytes = 0;
        std::uint32_t slot_count = 0;
        std::uint64_t field_offset = 0;  // into field words
        std::uint64_t child_offset = 0;  // into child ids
        std::uint32_t child_count = 0;
        std::uint64_t born = 0;          // collections completed before construction
        bool released = false;
    };

    struct RootEntry {
        bool is_ref = false;
        NodeId node = 0;
        Word raw = 0;
    };

    explicit Oracle(Heap& heap, bool check_each_collection = true);
    ~Oracle() override;

    Oracle(const Oracle&) = delete;
    Oracle& operator=(const Oracle&) = delete;

    // HeapObserver
    void on_construct(ObjectRef obj, std::span<const Value> fields) override;
    void on_root_push(FrameToken frame, std::span<const Value> values) override;
    void on_root_pop(FrameToken frame) override;
    void on_root_set(FrameToken frame, std::size_t index, Value v) override;
    void on_global_set(std::size_t index, Value v) override;
    void on_collection_begin() override;
    void on_evacuate(Address from, Address to) override;
    void on_release(Address a) override;
    void on_collection_end(const CollectionRecord& record) override;

    /// Precise transitive closure from the logical roots (raw words never retain).
    std::vector<NodeId> reachable_set() const;
    std::vector<bool> reachable_mask() const;
    /// Closure from nodes whose extent contains a raw root word.
    std::vector<bool> conservative_mask() const;

    /// Boundary checks against the heap's current state.
    InvariantReport check_invariants(const Heap& heap) const;

    /// Event-level checks plus every per-collection boundary check so far.
    InvariantReport cumulative() const;
    std::size_t faults() const;

    std::size_t node_count() const { return nodes_.size(); }
    const Node& node(NodeId id) const { return nodes_[id]; }
    std::span<const NodeId> children(NodeId id) const;
    std::span<const Word> fields(NodeId id) const;
    std::optional<NodeId> node_at(Address a) const;
    /// Node whose [address, address + bytes) contains w.
    std::optional<NodeId> node_containing(Word w) const;
    std::size_t live_bytes() const;
    std::size_t unreleased() const { return unreleased_; }

private:
    struct Obligation {
        std::uint64_t collection = 0;
        std::vector<NodeId> nodes;
        std::size_t cumulative_budget = 0;
        std::optional<std::uint64_t> deadline;
    };

    InvariantReport check_invariants(const Heap& heap, bool with_events) const;
    RootEntry entry_for(Value v, const char* where);
    void fault(const std::string& what);
    void check_liveness(const CollectionRecord& record);
    void check_fringe(const CollectionRecord& record);
    void check_work_bound(const Heap& heap, const CollectionRecord& record, InvariantReport& report) const;
    template <class F>
    void for_each_root(F&& f) const;

    Heap& heap_;
    bool check_each_collection_;
    std::vector<Node> nodes_;
    std::vector<Word> field_words_;
    std::vector<NodeId> child_ids_;
    std::map<Address, NodeId> by_address_;
    std::vector<std::vector<RootEntry>> frames_;
    std::vector<RootEntry> globals_;
    std::size_t unreleased_ = 0;
    std::uint64_t completed_ = 0;

    // Per-collection state.
    std::vector<bool> reachable_at_begin_;
    std::vector<Address> touch_log_;
    std::unordered_set<NodeId> fringe_allowed_;
    std::vector<NodeId> released_this_cycle_;
    std::map<Address, NodeId> released_addresses_;
    std::vector<NodeId> previous_root_nodes_;
    std::vector<Obligation> obligations_;

    InvariantReport events_;     // safety and event-level faults
    CheckResult* consistency_ = nullptr;
    InvariantReport boundaries_;
};

} // namespace catalpa
