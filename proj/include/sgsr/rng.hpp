#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace sgsr {

// SplitMix64: counter-based 64-bit generator. The state walks a fixed-stride
// counter and each output is a finalizing hash of it, so sequences are
// platform-independent and cheap to split into streams.
//
// Stream derivation: stream k of seed s starts at mix(s) ^ mix(k * phi + 1),
// so distinct (seed, stream) pairs give unrelated sequences.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : state_(mix(seed) ^ mix(stream * kGolden + 1)) {}

    std::uint64_t next_u64() {
        state_ += kGolden;
        return mix(state_);
    }

    // Uniform in [0, 1).
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Uniform on [-1,-gap] u [gap,1]; used where a kink at zero must be avoided.
    double uniform_sym_away_from_zero(double gap) {
        double u = uniform(gap, 1.0);
        return next_u64() & 1 ? u : -u;
    }

    std::uint64_t next_below(std::uint64_t bound) { return next_u64() % bound; }

    // Standard normal via Box-Muller on the portable uniform stream.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        // u1 in (0,1] so the log is finite.
        double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
        double u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    template <typename It>
    void shuffle(It first, It last) {
        auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            std::uint64_t j = next_below(i);
            std::swap(first[i - 1], first[j]);
        }
    }

private:
    static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

    static std::uint64_t mix(std::uint64_t z) {
        z += kGolden;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Named streams so independent pipeline stages never share a sequence.
namespace rng_stream {
inline constexpr std::uint64_t kNoise = 1;
inline constexpr std::uint64_t kParamInit = 2;
inline constexpr std::uint64_t kLshPlanes = 3;
inline constexpr std::uint64_t kCrops = 4;
inline constexpr std::uint64_t kShuffle = 5;
inline constexpr std::uint64_t kSynth = 6;
inline constexpr std::uint64_t kTest = 99;
} // namespace rng_stream

} // namespace sgsr
