#pragma once

#include <cstddef>
#include <cstdint>

namespace catalpa {

/// Per-collection statistics. `work_units` is a deterministic logical clock:
/// +1 per root word scanned, object marked, word copied, ref-slot fixup, rc
/// operation, slot swept or threaded, dequeue and release.
struct CollectionRecord {
    std::uint64_t index = 0;
    std::uint64_t start_ns = 0;   // steady clock, relative to heap creation
    std::uint64_t pause_ns = 0;
    std::uint64_t work_units = 0;

    std::size_t allocations = 0;  // N: objects handed out since the previous collection
    std::size_t bytes_since_gc = 0;
    std::size_t budget = 0;       // ceil(factor * N), or unbounded for a draining collection
    bool drain = false;

    std::size_t root_words = 0;
    std::size_t marked = 0;
    std::size_t evacuated = 0;
    std::size_t promoted_in_place = 0;
    std::size_t swept = 0;        // dead young objects reclaimed by the sweep
    std::size_t released = 0;     // old objects released by decrement processing
    std::size_t skipped = 0;      // worklist entries resurrected before release
    std::size_t deferred_backlog = 0;
    std::size_t committed_bytes = 0;
    std::size_t survivor_bytes = 0;
};

} // namespace catalpa
