#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

namespace triphase {

/// Splittable random stream. Child streams are derived from the parent's
/// key by hashing, not by drawing from the parent engine, so the set of
/// streams is independent of the order in which work is scheduled.
class SplitRng {
public:
    explicit SplitRng(std::uint64_t key) : key_(key), engine_(mix(key)) {}

    /// Derives an independent stream for (this stream, purpose).
    SplitRng child(std::uint64_t purpose) const {
        return SplitRng(mix(key_ ^ (0x9E3779B97F4A7C15ULL * (purpose + 1))));
    }

    std::uint64_t key() const { return key_; }
    std::mt19937_64& engine() { return engine_; }

    /// Uniform on [0, 1).
    double uniform() {
        return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
    }

    double normal(double mean = 0.0, double sd = 1.0) {
        return std::normal_distribution<double>(mean, sd)(engine_);
    }

    bool bernoulli(double p) { return uniform() < p; }

    double exponential(double rate = 1.0) {
        return std::exponential_distribution<double>(rate)(engine_);
    }

    double gamma(double shape, double rate) {
        // std::gamma_distribution is parameterized by scale = 1/rate.
        return std::gamma_distribution<double>(shape, 1.0 / rate)(engine_);
    }

    /// Simple random sample without replacement of k items from pool,
    /// returned in ascending order. Partial Fisher-Yates.
    std::vector<int> sample_without_replacement(const std::vector<int>& pool, int k);

    static std::uint64_t mix(std::uint64_t x) {
        // SplitMix64 finalizer.
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }

private:
    std::uint64_t key_;
    std::mt19937_64 engine_;
};

inline std::vector<int> SplitRng::sample_without_replacement(const std::vector<int>& pool, int k) {
    std::vector<int> items(pool);
    const int n = static_cast<int>(items.size());
    if (k > n) k = n;
    for (int i = 0; i < k; ++i) {
        std::uniform_int_distribution<int> pick(i, n - 1);
        std::swap(items[i], items[pick(engine_)]);
    }
    items.resize(k);
    std::sort(items.begin(), items.end());
    return items;
}

} // namespace triphase
