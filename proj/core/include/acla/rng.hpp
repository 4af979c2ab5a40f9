#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace acla {

// Deterministic xoshiro256++ stream.  The standard library distributions are
// implementation-defined, so every draw here is computed explicitly to keep
// runs bit-reproducible across compilers.  State is 4x u64 and serializes
// into checkpoints verbatim.
class Rng {
public:
    Rng() : Rng(0x9e3779b97f4a7c15ull) {}
    explicit Rng(std::uint64_t seed);

    // Derives an independent stream for a named purpose ("data", "mask", ...)
    // so that consuming one stream never shifts another.
    static Rng stream(std::uint64_t seed, std::string_view purpose);

    std::uint64_t next_u64();

    // Uniform in [0,1) with 53 bits of mantissa.
    double uniform01();
    // Uniform in (0,1), never exactly 0 (safe under log).
    double uniform_open01();
    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    // Standard normal via Box-Muller (cosine branch only, stateless).
    double gaussian();
    // Standard Gumbel via inverse CDF: -ln(-ln u).
    double gumbel();

    std::array<std::uint64_t, 4> state() const { return state_; }
    void set_state(const std::array<std::uint64_t, 4>& s) { state_ = s; }

private:
    std::array<std::uint64_t, 4> state_;
};

}  // namespace acla
