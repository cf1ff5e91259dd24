// SPDX-License-Identifier: Apache-2.0
//
// Versioned binary snapshot of named parameters, optimizer state and RNG
// state. Byte layout is documented in docs/checkpoint_format.md.
#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "crome/params.hpp"

namespace crome {

struct Checkpoint {
    static constexpr uint32_t kFormatVersion = 1;

    struct TensorEntry {
        Shape shape;
        std::vector<Scalar> values;
    };
    struct OptEntry {
        std::vector<Scalar> m, v;  // first/second moment buffers
    };

    std::map<std::string, TensorEntry> tensors;
    std::map<std::string, OptEntry> optimizer;
    uint64_t optimizer_step = 0;
    uint64_t rng_state = 0;
    std::string meta_json;  // stage metadata

    static Checkpoint from_registry(const ParamRegistry& reg);
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);

// Parses fully before returning; a truncated or corrupt file throws without
// side effects. Unknown format versions are rejected.
Checkpoint load_checkpoint(const std::string& path);

// Copies checkpoint tensors into matching registry parameters. With empty
// prefixes every registry parameter must be present in the checkpoint;
// otherwise only parameters under the prefixes are loaded and the rest keep
// their current values.
void apply_checkpoint(const Checkpoint& ckpt, ParamRegistry& reg,
                      const std::set<std::string>& prefixes = {});

}  // namespace crome
