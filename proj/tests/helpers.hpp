#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "voxmesh/rng.hpp"
#include "voxmesh/tensor.hpp"

namespace testutil {

using voxmesh::Dtype;
using voxmesh::Shape;
using voxmesh::Tensor;

// Central-difference gradient check. `f` rebuilds the graph from the given
// F64 leaves and returns a scalar loss. Returns the max relative error,
// where rel = |analytic - numeric| / max(1, |analytic|, |numeric|).
inline double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> leaves,
                         double eps = 1e-3) {
    for (auto& l : leaves) l.zero_grad();
    Tensor loss = f();
    voxmesh::backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(leaves.size());
    for (auto& l : leaves) analytic.push_back(l.grad_values());

    double worst = 0.0;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        Tensor& l = leaves[li];
        for (std::int64_t i = 0; i < l.numel(); ++i) {
            const double v0 = l.value_at(i);
            l.set_value_at(i, v0 + eps);
            const double lp = f().item();
            l.set_value_at(i, v0 - eps);
            const double lm = f().item();
            l.set_value_at(i, v0);
            const double num = (lp - lm) / (2.0 * eps);
            const double ana = analytic[li][static_cast<std::size_t>(i)];
            const double rel = std::abs(ana - num) /
                               std::max({1.0, std::abs(ana), std::abs(num)});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

// Random F64 leaf with values drawn uniformly from [lo, hi].
inline Tensor rand_leaf(Shape shape, voxmesh::Rng& rng, double lo = -1.0, double hi = 1.0,
                        bool requires_grad = true) {
    Tensor t = Tensor::zeros(shape, Dtype::F64, requires_grad);
    for (std::int64_t i = 0; i < t.numel(); ++i) t.set_value_at(i, rng.uniform(lo, hi));
    return t;
}

// Random leaf bounded away from zero (for graphs containing relu kinks).
inline Tensor rand_leaf_nonzero(Shape shape, voxmesh::Rng& rng, double margin = 0.05) {
    Tensor t = Tensor::zeros(shape, Dtype::F64, true);
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        const double mag = margin + rng.uniform(0.0, 1.0);
        t.set_value_at(i, rng.uniform() < 0.5 ? -mag : mag);
    }
    return t;
}

}  // namespace testutil
