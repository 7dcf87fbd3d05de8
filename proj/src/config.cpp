#include "catalpa/config.hpp"

#include <bit>

namespace catalpa {

void HeapConfig::validate() const {
    if (page_bytes == 0 || !std::has_single_bit(page_bytes)) {
        throw ConfigError("page_bytes must be a power of two");
    }
    if (page_bytes < 64 || page_bytes > (std::size_t{1} << 20)) {
        throw ConfigError("page_bytes must be between 64 B and 1 MiB");
    }
    if (nursery_threshold_bytes == 0 || nursery_threshold_bytes % page_bytes != 0) {
        throw ConfigError("nursery_threshold_bytes must be a positive multiple of page_bytes");
    }
    if (heap_reserve_bytes == 0 || heap_reserve_bytes < page_bytes) {
        throw ConfigError("heap_reserve_bytes must cover at least one page");
    }
    if (decrement_budget_den == 0 || decrement_budget_num <= decrement_budget_den) {
        throw ConfigError("decrement budget factor must be > 1");
    }
    if (!(bin_width > 0.0 && bin_width <= 1.0)) {
        throw ConfigError("bin_width must lie in (0, 1]");
    }
    if (root_capacity_words == 0) {
        throw ConfigError("root region needs a nonzero capacity");
    }
}

} // namespace catalpa
