#include "catalpa/bench/stats.hpp"

#include "catalpa/config.hpp"

#include <algorithm>
#include <cmath>

namespace catalpa::bench {

double nearest_rank(std::span<const double> sorted, double pct) {
    if (sorted.empty()) throw ContractViolation("percentile of an empty sample list");
    if (!(pct > 0.0 && pct <= 100.0)) throw ContractViolation("percentile must lie in (0, 100]");
    const auto n = static_cast<double>(sorted.size());
    auto rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * n - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, sorted.size());
    return sorted[rank - 1];
}

Summary summarize(std::span<const double> samples) {
    Summary s;
    s.count = samples.size();
    if (samples.empty()) return s;
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    s.p50 = nearest_rank(sorted, 50);
    s.p95 = nearest_rank(sorted, 95);
    s.p99 = nearest_rank(sorted, 99);
    double sum = 0;
    for (const double x : samples) sum += x;
    s.mean = sum / static_cast<double>(s.count);
    double sq = 0;
    for (const double x : samples) sq += (x - s.mean) * (x - s.mean);
    s.sigma = std::sqrt(sq / static_cast<double>(s.count));
    return s;
}

} // namespace catalpa::bench
