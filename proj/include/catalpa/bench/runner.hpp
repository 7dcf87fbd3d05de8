#pragma once

#include "catalpa/bench/stats.hpp"
#include "catalpa/bench/workloads.hpp"
#include "catalpa/collection_record.hpp"
#include "catalpa/config.hpp"
#include "catalpa/oracle.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace catalpa::bench {

enum class CollectorKind : std::uint8_t { Catalpa, Epsilon };

const char* to_string(CollectorKind k);
std::optional<CollectorKind> parse_collector(std::string_view s);

struct RunOptions {
    Workload workload;
    CollectorKind collector = CollectorKind::Catalpa;
    HeapConfig config;
    /// Attach the oracle (catalpa only). Slows the run considerably.
    bool verify = false;
};

struct TaskSample {
    WorkloadKind kind = WorkloadKind::NBody;
    double ms = 0;
    std::uint64_t pause_ns = 0;     // collections that ran inside this task
    std::size_t collections = 0;
};

struct StatsReport {
    WorkloadKind workload = WorkloadKind::NBody;
    CollectorKind collector = CollectorKind::Catalpa;
    std::size_t page_bytes = 0;
    std::size_t nursery_bytes = 0;
    std::uint64_t seed = 0;

    double wall_clock_s = 0;
    std::vector<TaskSample> tasks;
    std::vector<CollectionRecord> pauses;
    std::vector<std::int64_t> pause_task; // task index per pause, -1 outside any task
    std::size_t max_committed_bytes = 0;
    std::uint64_t allocations = 0;
    std::uint64_t allocated_bytes = 0;
    std::uint64_t checksum = 0;

    bool out_of_memory = false; // partial results
    std::string error;
    std::optional<nlohmann::json> oracle;

    std::size_t collections() const { return pauses.size(); }
    /// Σ survivor bytes / Σ bytes allocated since the previous collection.
    double survival_rate() const;
    Summary task_summary() const;
    Summary pause_ns_summary() const;
    Summary work_summary() const;
};

/// Runs `task_count` tasks; collector faults other than out-of-memory
/// propagate. Pauses are attributed to the task during which they occur.
StatsReport run_workload(const RunOptions& options);

/// Splits a server run by request kind. Kinds that never ran map to nullopt.
std::map<WorkloadKind, std::optional<StatsReport>> disaggregate(const StatsReport& mixed);

/// Heap geometry for oracle stress runs: a small nursery so a few thousand
/// nodes span many collections, varied by seed.
HeapConfig stress_config(std::uint64_t seed);

struct VerifyResult {
    InvariantReport report;
    std::size_t nodes = 0;
    std::size_t collections = 0;
    bool passed() const { return report.passed(); }
};

/// Seeded stress run of at least `nodes` allocations under the oracle,
/// ending with every root dropped and a draining collection.
VerifyResult verify_stress(std::uint64_t seed, std::size_t nodes, const HeapConfig& config);

struct SweepPoint {
    std::size_t live_mb = 0;
    std::size_t live_bytes = 0;
    std::vector<CollectionRecord> steady; // collections after the live heap was built
    Summary work_units;
    Summary pause_ns;
};

/// Builds a live old heap of each size, then measures collections under a
/// fixed churn of `churn_tasks` nbody tasks.
std::vector<SweepPoint> run_sweep(const std::vector<std::size_t>& live_mb, std::size_t churn_tasks,
                                  std::uint64_t seed, HeapConfig config, double task_ms = 5.0);

} // namespace catalpa::bench
