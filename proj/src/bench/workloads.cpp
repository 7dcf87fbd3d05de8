#include "catalpa/bench/workloads.hpp"

#include <cmath>

namespace catalpa::bench {

const char* to_string(WorkloadKind k) {
    switch (k) {
    case WorkloadKind::NBody: return "nbody";
    case WorkloadKind::Raytracer: return "raytracer";
    case WorkloadKind::Db: return "db";
    case WorkloadKind::Server: return "server";
    case WorkloadKind::Stress: return "stress";
    }
    return "?";
}

std::optional<WorkloadKind> parse_workload(std::string_view s) {
    for (const auto k : {WorkloadKind::NBody, WorkloadKind::Raytracer, WorkloadKind::Db, WorkloadKind::Server,
                         WorkloadKind::Stress}) {
        if (s == to_string(k)) return k;
    }
    return std::nullopt;
}

std::size_t task_iterations(WorkloadKind kind, double target_task_ms) {
    if (!(target_task_ms > 0)) throw ConfigError("target task time must be positive");
    double per_ms = 0;
    switch (kind) {
    case WorkloadKind::NBody: per_ms = 16.0; break;     // steps
    case WorkloadKind::Raytracer: per_ms = 750.0; break; // pixels
    case WorkloadKind::Db: per_ms = 190.0; break;       // transactions
    case WorkloadKind::Stress: per_ms = 500.0; break;   // random operations
    case WorkloadKind::Server: throw ContractViolation("server tasks take the size of the drawn kind");
    }
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(per_ms * target_task_ms)));
}

} // namespace catalpa::bench
