#pragma once

#include "catalpa/collection_record.hpp"
#include "catalpa/roots.hpp"
#include "catalpa/value.hpp"

#include <span>

namespace catalpa {

/// Event stream for verification harnesses. Benchmark runs leave it unset.
class HeapObserver {
public:
    virtual ~HeapObserver() = default;

    virtual void on_construct(ObjectRef, std::span<const Value>) {}
    virtual void on_root_push(FrameToken, std::span<const Value>) {}
    virtual void on_root_pop(FrameToken) {}
    virtual void on_root_set(FrameToken, std::size_t, Value) {}
    virtual void on_global_set(std::size_t, Value) {}

    virtual void on_collection_begin() {}
    virtual void on_evacuate(Address, Address) {}
    /// A dead young object swept, or an old object released.
    virtual void on_release(Address) {}
    virtual void on_collection_end(const CollectionRecord&) {}
};

} // namespace catalpa
