#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace catalpa::bench {

/// Nearest-rank percentile of an ascending sample list: the smallest sample
/// with at least pct percent of the list at or below it. Requires a
/// non-empty list and 0 < pct <= 100.
double nearest_rank(std::span<const double> sorted, double pct);

struct Summary {
    std::size_t count = 0;
    double p50 = 0;
    double p95 = 0;
    double p99 = 0;
    double mean = 0;
    double sigma = 0; // population standard deviation
};

/// Exact summary over the full sample list; count == 0 for an empty list.
Summary summarize(std::span<const double> samples);

} // namespace catalpa::bench
