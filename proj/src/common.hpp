#pragma once

#include <atomic>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace pairvit {

// Scalar type for all tensor math. Double by default; -DPAIRVIT_SINGLE
// switches training builds to float. Gradient checks are only meaningful
// in double builds and the test suite assumes the default.
#ifdef PAIRVIT_SINGLE
using real = float;
#else
using real = double;
#endif

// Error taxonomy used by the CLI to map failures onto exit codes.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Warning channel: stderr plus a counter the tests can observe.
std::atomic<uint64_t>& warn_count();
void warnf(const char* fmt, ...);

// SplitMix64. Used to derive independent RNG streams from (seed, index)
// so parallel workers and per-sample augmentation stay reproducible.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    uint64_t s = mix64(seed ^ 0x2545f4914f6cdd1dULL);
    s = mix64(s ^ a);
    s = mix64(s ^ (b + 0x165667b19e3779f9ULL));
    s = mix64(s ^ (c + 0x27d4eb2f165667c5ULL));
    return s;
}

}  // namespace pairvit
