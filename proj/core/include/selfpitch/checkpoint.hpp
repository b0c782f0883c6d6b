// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "selfpitch/autodiff.hpp"

namespace selfpitch {

/// Named tensors in the shared checkpoint container. Values are stored as
/// 32-bit little-endian floats on disk regardless of in-memory precision.
struct Checkpoint {
    // map keeps a stable on-disk order (sorted by name)
    std::map<std::string, std::pair<ad::Shape, std::vector<float>>> tensors;

    template <typename Real>
    void put(const std::string& name, const ad::Tensor<Real>& t) {
        std::vector<float> v(t.v.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = float(t.v[i]);
        tensors[name] = {t.shape, std::move(v)};
    }

    template <typename Real>
    void get(const std::string& name, ad::Tensor<Real>& out) const {
        const auto it = tensors.find(name);
        if (it == tensors.end()) throw FormatError("checkpoint: missing tensor '" + name + "'");
        if (!(it->second.first == out.shape))
            throw ShapeError("checkpoint: tensor '" + name + "' has shape " + it->second.first.str() +
                             ", expected " + out.shape.str());
        for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = Real(it->second.second[i]);
    }

    bool has(const std::string& name) const { return tensors.count(name) != 0; }
};

// Binary container: magic "PLCK", u32 version, u32 tensor count, then per
// tensor: u32 name length, UTF-8 name, u32 rank, dims, f32 little-endian data.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace selfpitch
