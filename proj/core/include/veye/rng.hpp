#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace veye {

// FNV-1a, used for label-based seed splitting and the hashed language embeddings.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Every random stream in the project derives from one root seed plus a label,
// so module-level streams stay independent of call order elsewhere.
inline std::uint64_t seed_for(std::uint64_t root_seed, std::string_view label) {
    std::uint64_t s = root_seed ^ fnv1a64(label);
    return splitmix64(s);
}

// mt19937_64 with explicit draw helpers. The standard distributions are
// implementation-defined, so uniform/normal are spelled out here.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int lo, int hi_inclusive) {
        return lo + static_cast<int>(engine_() % static_cast<std::uint64_t>(hi_inclusive - lo + 1));
    }

    // Box-Muller
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace veye
