#include "common.hpp"

namespace pairvit {

std::atomic<uint64_t>& warn_count() {
    static std::atomic<uint64_t> count{0};
    return count;
}

void warnf(const char* fmt, ...) {
    warn_count().fetch_add(1, std::memory_order_relaxed);
    va_list args;
    va_start(args, fmt);
    std::fprintf(stderr, "[warn] ");
    std::vfprintf(stderr, fmt, args);
    std::fprintf(stderr, "\n");
    va_end(args);
}

}  // namespace pairvit
