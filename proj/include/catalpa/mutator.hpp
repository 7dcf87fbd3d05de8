#pragma once

#include "catalpa/roots.hpp"
#include "catalpa/value.hpp"

#include <concepts>
#include <cstddef>
#include <span>
#include <vector>

namespace catalpa {

/// What a workload needs from a heap; satisfied by Heap and EpsilonHeap.
template <class H>
concept MutatorHeap = requires(H& h, const H& ch, TypeId t, std::span<const Value> vs, ObjectRef r,
                               FrameToken f, std::size_t i, Value v) {
    { h.construct(t, vs) } -> std::same_as<ObjectRef>;
    { ch.read_field(r, i) } -> std::same_as<Value>;
    { h.root_push(vs) } -> std::same_as<FrameToken>;
    h.root_pop(f);
    h.root_set(f, i, v);
    h.set_global(i, v);
    { ch.global(i) } -> std::same_as<Word>;
    { ch.root_get(f, i) } -> std::same_as<Word>;
    { ch.collections() } -> std::convertible_to<std::size_t>;
    { ch.committed_bytes() } -> std::convertible_to<std::size_t>;
};

/// A fixed-size root frame popped on scope exit. Slots start as word 0.
/// Scopes nest, so frames are released in LIFO order.
template <MutatorHeap H>
class RootScope {
public:
    RootScope(H& heap, std::size_t slots) : heap_(heap), values_(slots) {
        frame_ = heap_.root_push(std::span<const Value>(values_));
    }
    /// A frame holding `init`, e.g. references pinned across allocations.
    RootScope(H& heap, std::span<const Value> init) : heap_(heap), values_(init.begin(), init.end()) {
        frame_ = heap_.root_push(std::span<const Value>(values_));
    }
    ~RootScope() { heap_.root_pop(frame_); }

    RootScope(const RootScope&) = delete;
    RootScope& operator=(const RootScope&) = delete;

    void set(std::size_t i, Value v) {
        values_[i] = v;
        heap_.root_set(frame_, i, v);
    }
    void set(std::size_t i, ObjectRef r) { set(i, Value::ref(r)); }

    ObjectRef ref(std::size_t i) const { return values_[i].as_ref(); }
    const Value& value(std::size_t i) const { return values_[i]; }
    FrameToken frame() const { return frame_; }

private:
    H& heap_;
    std::vector<Value> values_;
    FrameToken frame_;
};

} // namespace catalpa
