// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "crome/tensor.hpp"

namespace crome {

// Hierarchical parameter names (e.g. "qformer.block2.cross.k_proj") are the
// contract shared by freeze masks and checkpoints.
class ParamRegistry {
public:
    void add(const std::string& name, Tensor t);
    bool has(const std::string& name) const;
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;

    std::vector<std::string> names() const;
    // Names whose dotted path starts with one of the prefixes.
    std::vector<std::string> names_with_prefix(
        const std::set<std::string>& prefixes) const;

    int64_t count_params(const std::set<std::string>& prefixes) const;
    int64_t count_all() const;

    void zero_grads();

    // requires_grad <- true exactly for params under the given prefixes.
    void apply_freeze(const std::set<std::string>& trainable_prefixes);

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }
    size_t size() const { return params_.size(); }

private:
    std::map<std::string, Tensor> params_;
};

// Prefix match on dotted paths: "adapter." matches "adapter.img.down";
// an exact name also matches itself.
bool name_matches_prefix(const std::string& name, const std::string& prefix);

// FNV-1a over the raw little-endian bytes of the tensor values.
uint64_t tensor_hash(const Tensor& t);
uint64_t fnv1a(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ull);

}  // namespace crome
