#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace hgm_ehr {

/// Seeded random source with platform-independent draws.
///
/// The standard distributions are implementation-defined, so every draw used
/// by training and data generation goes through the helpers here; only the raw
/// mt19937_64 stream (which is fully specified) is taken from the library.
class Rng {
   public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Unbiased integer in [0, n). n must be positive.
    std::size_t uniform_index(std::size_t n);

    /// Double in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal();
    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(items[i - 1], items[j]);
        }
    }

   private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

// Sub-seed for an independent stream: splitmix64 chain over the master seed,
// the FNV-1a hash of `purpose`, then `fold` and `window`.
std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose,
                          std::uint64_t fold = 0, std::uint64_t window = 0);

}  // namespace hgm_ehr
