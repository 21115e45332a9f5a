#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <string>

#include "sharnn/errors.hpp"

namespace sharnn {

// xoshiro256** with splitmix64 seeding. Self-contained so that streams are
// identical across standard libraries and can be serialized into checkpoints
// as four hex words.
class Rng {
  public:
    Rng() : Rng(0x9e3779b97f4a7c15ull) {}

    explicit Rng(uint64_t seed) { reseed(seed); }

    void reseed(uint64_t seed) {
        uint64_t x = seed;
        for (auto& word : state_) {
            x += 0x9e3779b97f4a7c15ull;
            uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
            word = z ^ (z >> 31);
        }
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    bool bernoulli(double p) { return uniform01() < p; }

    // Box-Muller; draws a fresh pair every call so the stream has no hidden
    // cache that would complicate serialization.
    double normal() {
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Integer in [0, n).
    uint64_t below(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

    std::array<uint64_t, 4> state() const { return state_; }
    void set_state(const std::array<uint64_t, 4>& s) { state_ = s; }

    std::string state_hex() const {
        char buf[4 * 17 + 1];
        std::snprintf(buf, sizeof(buf), "%016llx %016llx %016llx %016llx",
                      (unsigned long long)state_[0], (unsigned long long)state_[1],
                      (unsigned long long)state_[2], (unsigned long long)state_[3]);
        return buf;
    }

    void set_state_hex(const std::string& hex) {
        std::array<uint64_t, 4> s{};
        unsigned long long w[4];
        if (std::sscanf(hex.c_str(), "%llx %llx %llx %llx", &w[0], &w[1], &w[2], &w[3]) != 4) {
            throw FormatError("rng state: expected four hex words, got '" + hex + "'");
        }
        for (int i = 0; i < 4; ++i) s[i] = w[i];
        state_ = s;
    }

  private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::array<uint64_t, 4> state_{};
};

}  // namespace sharnn
