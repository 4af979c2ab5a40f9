#pragma once

#include <array>
#include <string>
#include <vector>

#include "acla/optim.hpp"
#include "acla/rng.hpp"
#include "acla/tensor.hpp"

namespace acla {

// Self-describing binary container: magic "ACLA", a little-endian u32 format
// version, then length-prefixed named sections with 64-bit float payloads.
// Round trips are bit-identical; any version or framing mismatch is a load
// error, never a silent coercion.
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    std::string config_text;
    std::uint64_t epoch = 0;

    struct Array {
        std::string name;
        Shape shape;
        std::vector<double> data;
    };
    std::vector<Array> weights;
    std::vector<double> alpha;  // architecture parameters, depth order

    struct AdamSnapshot {
        std::uint64_t t = 0;
        std::vector<std::vector<double>> m, v;
    };
    AdamSnapshot adam_weights;
    AdamSnapshot adam_arch;

    struct StreamState {
        std::string name;
        std::array<std::uint64_t, 4> state{};
    };
    std::vector<StreamState> rng_streams;

    bool has_derived = false;
    std::vector<int> derived_positions;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// ParamStore <-> checkpoint array conversion.
std::vector<Checkpoint::Array> snapshot_params(const ParamStore& params);
void restore_params(ParamStore& params, const std::vector<Checkpoint::Array>& arrays);

Checkpoint::AdamSnapshot snapshot_adam(const Adam& opt);
void restore_adam(Adam& opt, const Checkpoint::AdamSnapshot& snap);

}  // namespace acla
