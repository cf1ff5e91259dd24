// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace crome {

// Counter-based splitmix64 generator. One u64 of state, trivially
// serializable into checkpoints and bitwise reproducible across platforms
// (unlike std::mt19937 normal_distribution, whose output is
// implementation-defined).
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n).
    uint64_t uniform_index(uint64_t n) { return n ? next_u64() % n : 0; }

    // Standard normal via Box-Muller.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    }

    // Independent substream, e.g. one per dataset record. The concatenated
    // output of forked streams does not depend on how work is sharded.
    Rng fork(uint64_t stream) const {
        Rng tmp(state_ ^ (0x5851f42d4c957f2dull * (stream + 1)));
        return Rng(tmp.next_u64());
    }

    uint64_t state() const { return state_; }
    void set_state(uint64_t s) { state_ = s; }

private:
    uint64_t state_;
};

}  // namespace crome
