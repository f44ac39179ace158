#pragma once

// Central-finite-difference validation of the reverse pass. Always run in
// 64-bit: the 1e-4 acceptance tolerance is unreachable in float.

#include <functional>
#include <random>
#include <vector>

#include "scet/tensor.hpp"

namespace scet {

// Maps a set of inputs to one output tensor. Inputs are the differentiated
// leaves; the function may close over constants.
using TensorFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

// Max over all input elements of |analytic - central difference| /
// max(1, |analytic|, |numeric|). The output is reduced to a scalar via a
// fixed random projection so non-scalar functions are covered too.
inline double grad_check(const TensorFn& fn, std::vector<Tensor<double>> inputs,
                         double eps = 1e-5, unsigned seed = 12345) {
    // Inputs may alias tensors checked by an earlier call (copies share
    // nodes), so clear any accumulated gradients before the reverse pass.
    for (auto& in : inputs) {
        in.set_requires_grad(true);
        in.zero_grad();
    }

    Tensor<double> probe = fn(inputs);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<double> proj(probe.size());
    for (auto& v : proj) v = unit(rng);

    auto scalarize = [&](const std::vector<Tensor<double>>& ins) {
        NoGradGuard ng;
        Tensor<double> out = fn(ins);
        double acc = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) acc += proj[i] * out[i];
        return acc;
    };

    // analytic gradients
    {
        Tensor<double> out = fn(inputs);
        Tensor<double> w = Tensor<double>::from(out.shape(), proj);
        Tensor<double> loss = sum(mul(out, w));
        backward(loss);
    }

    double max_err = 0.0;
    for (auto& in : inputs) {
        const std::vector<double>& g = in.grad();
        for (std::size_t i = 0; i < in.size(); ++i) {
            const double saved = in[i];
            in[i] = saved + eps;
            const double fp = scalarize(inputs);
            in[i] = saved - eps;
            const double fm = scalarize(inputs);
            in[i] = saved;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double analytic = g.empty() ? 0.0 : g[i];
            const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
            max_err = std::max(max_err, std::abs(analytic - numeric) / denom);
        }
    }
    return max_err;
}

}  // namespace scet
