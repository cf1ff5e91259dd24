// SPDX-License-Identifier: Apache-2.0
#include "crome/params.hpp"

#include <cstring>

namespace crome {

void ParamRegistry::add(const std::string& name, Tensor t) {
    if (params_.count(name)) throw ContractError("duplicate parameter name: " + name);
    params_.emplace(name, std::move(t));
}

bool ParamRegistry::has(const std::string& name) const { return params_.count(name) > 0; }

Tensor& ParamRegistry::get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("unknown parameter: " + name);
    return it->second;
}

const Tensor& ParamRegistry::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("unknown parameter: " + name);
    return it->second;
}

std::vector<std::string> ParamRegistry::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [k, v] : params_) out.push_back(k);
    return out;
}

std::vector<std::string> ParamRegistry::names_with_prefix(
    const std::set<std::string>& prefixes) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : params_)
        for (const auto& p : prefixes)
            if (name_matches_prefix(k, p)) {
                out.push_back(k);
                break;
            }
    return out;
}

int64_t ParamRegistry::count_params(const std::set<std::string>& prefixes) const {
    int64_t n = 0;
    for (const auto& name : names_with_prefix(prefixes)) n += get(name).numel();
    return n;
}

int64_t ParamRegistry::count_all() const {
    int64_t n = 0;
    for (const auto& [k, v] : params_) n += v.numel();
    return n;
}

void ParamRegistry::zero_grads() {
    for (auto& [k, v] : params_) v.zero_grad();
}

void ParamRegistry::apply_freeze(const std::set<std::string>& trainable_prefixes) {
    for (auto& [k, v] : params_) {
        bool trainable = false;
        for (const auto& p : trainable_prefixes)
            if (name_matches_prefix(k, p)) {
                trainable = true;
                break;
            }
        v.set_requires_grad(trainable);
        if (!trainable) v.zero_grad();
    }
}

bool name_matches_prefix(const std::string& name, const std::string& prefix) {
    if (prefix.empty()) return false;
    if (prefix.back() == '.' || prefix.back() == '*') {
        std::string p = prefix;
        while (!p.empty() && (p.back() == '*' || p.back() == '.')) p.pop_back();
        return name == p || (name.size() > p.size() && name.compare(0, p.size(), p) == 0 &&
                             name[p.size()] == '.');
    }
    return name == prefix ||
           (name.size() > prefix.size() && name.compare(0, prefix.size(), prefix) == 0 &&
            name[prefix.size()] == '.');
}

uint64_t fnv1a(const void* data, size_t len, uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

uint64_t tensor_hash(const Tensor& t) {
    return fnv1a(t.values().data(), t.values().size() * sizeof(Scalar));
}

}  // namespace crome
