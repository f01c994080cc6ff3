#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace mrt {

// All randomness in a run flows from one seed through named substreams, so
// e.g. the shuffle order is independent of how many weights were initialized.
// mt19937_64 is fully specified by the standard; the uniform/normal
// transforms below avoid the implementation-defined std distributions.
class Rng {
  public:
    explicit Rng(uint64_t seed) : eng_(mix(seed)) {}

    static uint64_t hash_name(std::string_view name) {
        uint64_t h = 1469598103934665603ull; // FNV-1a
        for (char c : name) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ull;
        }
        return h;
    }

    static Rng substream(uint64_t seed, std::string_view name) {
        return Rng(mix(seed ^ hash_name(name)));
    }
    static Rng substream(uint64_t seed, std::string_view name, uint64_t index) {
        return Rng(mix(mix(seed ^ hash_name(name)) + index));
    }

    uint64_t next() { return eng_(); }

    // [0,1) with 53-bit resolution
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        // Box-Muller, one value per call; u1 bounded away from 0
        double u1 = (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    // integer in [0, n)
    uint64_t below(uint64_t n) { return next() % n; }

  private:
    static uint64_t mix(uint64_t z) { // splitmix64 finalizer
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::mt19937_64 eng_;
};

} // namespace mrt
