#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "dpfed/numeric.hpp"

namespace dpfed {

// Shape of one dense layer: weight matrix (rows = fan-in, cols = fan-out)
// plus an optional bias row of length cols.
struct LayerShape {
    std::size_t rows = 0;
    std::size_t cols = 0;
    bool has_bias = true;

    std::size_t entries() const { return rows * cols + (has_bias ? cols : 0); }

    friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

// Flat parameter vector with per-layer shape metadata. This is the unit
// exchanged by every protocol step: global weights, local deltas, noise.
struct ParamVector {
    std::vector<double> values;
    std::vector<LayerShape> shapes;

    std::size_t size() const { return values.size(); }

    std::size_t expected_size() const {
        std::size_t n = 0;
        for (const auto& s : shapes) n += s.entries();
        return n;
    }

    bool shape_consistent() const { return values.size() == expected_size(); }

    // Offset of layer `l` within `values`.
    std::size_t layer_offset(std::size_t l) const {
        std::size_t off = 0;
        for (std::size_t i = 0; i < l; ++i) off += shapes[i].entries();
        return off;
    }
};

inline bool same_shape(const ParamVector& a, const ParamVector& b) {
    return a.shapes == b.shapes && a.values.size() == b.values.size();
}

inline void require_same_shape(const ParamVector& a, const ParamVector& b,
                               const char* what) {
    if (!same_shape(a, b))
        throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

inline double l2_norm(const ParamVector& p) { return l2_norm(p.values); }

inline bool all_finite(const ParamVector& p) { return all_finite(p.values); }

// Layer dimensions of the multilayer perceptron: input, hidden..., output.
// Hidden layers use ReLU, the final layer Softmax.
struct MlpSpec {
    std::vector<std::size_t> layer_dims;

    std::size_t layer_count() const {
        return layer_dims.size() < 2 ? 0 : layer_dims.size() - 1;
    }

    void validate() const {
        if (layer_dims.size() < 2)
            throw std::invalid_argument("MlpSpec: need at least 2 dims");
        for (std::size_t d : layer_dims)
            if (d == 0) throw std::invalid_argument("MlpSpec: dim <= 0");
        if (layer_dims.back() < 2)
            throw std::invalid_argument("MlpSpec: output dim must be >= 2");
    }

    std::vector<LayerShape> shapes() const {
        std::vector<LayerShape> out;
        for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l)
            out.push_back({layer_dims[l], layer_dims[l + 1], true});
        return out;
    }
};

}  // namespace dpfed
