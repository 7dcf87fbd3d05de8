#pragma once

#include "catalpa/bench/runner.hpp"

#include <json.hpp>

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace catalpa::bench {

enum class Format : std::uint8_t { Json, Csv };

std::optional<Format> parse_format(std::string_view s);

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Stable schema:
///   {workload, collector, config{page_bytes, nursery_bytes, seed}, wall_clock_s,
///    collections, survival_rate, max_committed_bytes,
///    pause_ns{p50, p95, p99, samples}, task_ms{p50, p95, p99, mean, sigma, samples},
///    per_kind{<kind>: {count, p50, p95, p99, mean, sigma} | null}}
/// plus `partial`/`error` after an out-of-memory stop and `oracle` for verified
/// runs. Pause percentiles are null when there were no collections.
nlohmann::json to_json(const StatsReport& r);

/// Header row plus one row per collection.
std::string to_csv(const StatsReport& r);

/// Writes the report to `path` ("-" for stdout). Throws IoError.
void emit(const StatsReport& r, Format format, const std::string& path);

nlohmann::json to_json(const Summary& s);
nlohmann::json to_json(const std::vector<SweepPoint>& sweep);

} // namespace catalpa::bench
