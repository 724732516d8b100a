#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dtb/errors.hpp"
#include "dtb/nn/model.hpp"

namespace dtb::nn {

/// Scalar losses used to exercise backpropagation.
///  - LinearProbe: L = sum(output ⊙ R) for a fixed random R — valid for any
///    output layer and gives dL/d(output) = R exactly.
///  - SigmoidBce: mean binary cross-entropy against random 0/1 targets,
///    seeded through the fused sigmoid head; requires a sigmoid output layer.
enum class CheckLoss { LinearProbe, SigmoidBce };

struct GradCheckSpec {
    ArchitectureSpec arch;
    int batch = 2;
    CheckLoss loss = CheckLoss::LinearProbe;
    double epsilon = 1e-5;
    uint64_t seed = 7;
};

/// Compare analytic gradients (every parameter and the input) against central
/// finite differences, in double precision. Returns the maximum relative
/// error, where rel = |a - n| / max(|a|, |n|, 1).
///
/// Runs in TRAIN mode with dropout inactive, so batch-statistic coupling in
/// batchnorm is part of what is verified. Throws NumericalError if any
/// analytic gradient is non-finite.
inline double grad_check(const GradCheckSpec& cfg) {
    if (cfg.epsilon < 1e-7 || cfg.epsilon > 1e-3)
        throw ArgumentError("grad_check epsilon must lie in [1e-7, 1e-3]");
    if (cfg.batch <= 0) throw ArgumentError("grad_check batch must be positive");

    Model<double> model(cfg.arch, cfg.seed);
    const Shape& in_shape = cfg.arch.input;
    Tensor<double> x(cfg.batch, in_shape);
    Rng xr = Rng::derive(cfg.seed, {100});
    for (double& v : x.data) v = xr.uniform(-1.0, 1.0);

    const Shape& out_shape = cfg.arch.output();
    Tensor<double> probe(cfg.batch, out_shape);
    Tensor<double> targets(cfg.batch, out_shape);
    Rng pr = Rng::derive(cfg.seed, {101});
    for (double& v : probe.data) v = pr.uniform(-1.0, 1.0);
    for (double& v : targets.data) v = pr.uniform() < 0.5 ? 0.0 : 1.0;

    // TRAIN-mode forwards update batchnorm running statistics, but those do
    // not enter the TRAIN-mode loss, so the repeated evaluations below remain
    // consistent.
    auto loss_fn = [&]() -> double {
        Tensor<double> out = model.forward(x, RunMode::Train, nullptr, /*cache=*/true);
        if (cfg.loss == CheckLoss::SigmoidBce)
            return Model<double>::bce_loss(model.logits(), targets);
        double s = 0;
        for (size_t i = 0; i < out.size(); ++i) s += out.data[i] * probe.data[i];
        return s;
    };

    // Analytic pass.
    model.zero_grad();
    if (cfg.loss == CheckLoss::SigmoidBce) {
        Tensor<double> out = model.forward(x, RunMode::Train, nullptr, true);
        Tensor<double> seed_grad(out.n, out.c, out.h, out.w);
        const double inv = 1.0 / static_cast<double>(out.size());
        for (size_t i = 0; i < out.size(); ++i)
            seed_grad.data[i] = (out.data[i] - targets.data[i]) * inv;
        model.backward(seed_grad, /*grad_wrt_preactivation=*/true);
    } else {
        model.forward(x, RunMode::Train, nullptr, true);
        model.backward(probe, false);
    }

    double max_rel = 0;
    auto compare = [&](double analytic, double numeric, const std::string& what) {
        if (!std::isfinite(analytic))
            throw NumericalError("non-finite analytic gradient in " + what);
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1.0});
        max_rel = std::max(max_rel, std::abs(analytic - numeric) / denom);
    };
    auto probe_coord = [&](double& coord, double analytic, const std::string& what) {
        const double saved = coord;
        coord = saved + cfg.epsilon;
        const double hi = loss_fn();
        coord = saved - cfg.epsilon;
        const double lo = loss_fn();
        coord = saved;
        compare(analytic, (hi - lo) / (2 * cfg.epsilon), what);
    };

    auto& params = model.params();
    const auto& grads = model.grads();
    for (size_t i = 0; i < params.size(); ++i) {
        const std::string at = "layer " + std::to_string(i);
        auto sweep = [&](std::vector<double>& p, const std::vector<double>& g,
                         const char* name) {
            for (size_t j = 0; j < p.size(); ++j)
                probe_coord(p[j], g[j], at + " " + name + "[" + std::to_string(j) + "]");
        };
        sweep(params[i].weight, grads[i].weight, "weight");
        sweep(params[i].bias, grads[i].bias, "bias");
        sweep(params[i].gamma, grads[i].gamma, "gamma");
        sweep(params[i].beta, grads[i].beta, "beta");
    }
    const Tensor<double>& dx = model.input_grad();
    for (size_t j = 0; j < x.data.size(); ++j)
        probe_coord(x.data[j], dx.data[j], "input[" + std::to_string(j) + "]");
    return max_rel;
}

} // namespace dtb::nn
