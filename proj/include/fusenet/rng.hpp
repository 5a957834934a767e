#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "fusenet/errors.hpp"

// Self-contained deterministic RNG stack.  Everything downstream (init,
// shuffles, noise, sampling) draws from these primitives so that a given
// seed reproduces bit-identical runs on rebuilds of the same toolchain.
// std::mt19937 + std:: distributions are avoided on purpose: the engine
// result streams would then depend on the standard library's
// implementation-defined distribution algorithms.

namespace fusenet {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Stable seed for a named sub-stream.  Used to give every independent
// consumer (per-modality init, fold shuffle, sampler, ...) its own stream
// derived from one user-facing seed.  Tag-based rather than call-order
// based, so adding a consumer does not disturb the others.
inline std::uint64_t derive_seed(std::uint64_t base, const std::string& tag) {
    return splitmix64(base ^ fnv1a64(tag));
}

// PCG-XSL-RR 128/64 with a fixed stream constant.
class Pcg64 {
public:
    explicit Pcg64(std::uint64_t seed) {
        state_ = 0;
        advance();
        state_ += (static_cast<u128>(splitmix64(seed)) << 64)
                | splitmix64(seed ^ 0x9e3779b97f4a7c15ull);
        advance();
    }

    std::uint64_t next() {
        advance();
        std::uint64_t xored = static_cast<std::uint64_t>(state_ >> 64)
                            ^ static_cast<std::uint64_t>(state_);
        unsigned rot = static_cast<unsigned>(state_ >> 122);
        return (xored >> rot) | (xored << ((64u - rot) & 63u));
    }

    // Uniform in [0,1), 53-bit resolution.
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Unbiased integer in [0,n) by rejection.
    std::uint64_t bounded(std::uint64_t n) {
        if (n == 0) throw PreconditionError("bounded: n must be positive");
        std::uint64_t threshold = (-n) % n;
        for (;;) {
            std::uint64_t x = next();
            if (x >= threshold) return x % n;
        }
    }

    // Standard normal via Box-Muller; second value of each pair is cached.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = static_cast<double>((next() >> 11) + 1) * 0x1.0p-53; // (0,1]
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

    // Fisher-Yates, high index down.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(bounded(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct indices from [0,n), order random (partial Fisher-Yates).
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k) {
        if (k > n)
            throw PreconditionError("sample_indices: requested " + std::to_string(k)
                                    + " from population " + std::to_string(n));
        std::vector<std::size_t> pool(n);
        for (std::size_t i = 0; i < n; ++i) pool[i] = i;
        for (std::size_t i = 0; i < k; ++i) {
            std::size_t j = i + static_cast<std::size_t>(bounded(n - i));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(k);
        return pool;
    }

private:
    using u128 = unsigned __int128;
    static constexpr u128 mult() {
        return (static_cast<u128>(0x2360ed051fc65da4ull) << 64) | 0x4385df649fccf645ull;
    }
    static constexpr u128 inc() {
        return (static_cast<u128>(0x5851f42d4c957f2dull) << 64) | 0x14057b7ef767814full;
    }
    void advance() { state_ = state_ * mult() + inc(); }

    u128 state_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace fusenet
