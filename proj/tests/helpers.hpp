#pragma once

#include <random>

#include "liftctl/brunovsky.hpp"
#include "liftctl/dictionary.hpp"
#include "liftctl/experiments.hpp"
#include "liftctl/pipeline.hpp"
#include "liftctl/plant.hpp"

namespace testutil {

using namespace liftctl;

// Reference pendulum step written out longhand, independent of plant.cpp.
inline Vec pendulum_reference_step(const Vec& x, double u, const PendulumParams& p = {}) {
    Vec next(2);
    next(0) = x(0) + p.Ts * x(1);
    next(1) = (p.Ts * p.g / p.ell) * std::sin(x(0)) +
              (1.0 - p.Ts * p.mu / (p.m * p.ell * p.ell)) * x(1) +
              (p.Ts / (p.m * p.ell)) * std::cos(x(0)) * u;
    return next;
}

// h-tilde for the pendulum with N = 2: reconstruct x(k-2) from the output
// window by the analytic left inverse, then roll the plant forward twice.
inline double pendulum_h_tilde(const Vec& w, const Vec& xi, const PendulumParams& p = {}) {
    Vec x(2);
    x(0) = w(0);
    x(1) = (w(1) - w(0)) / p.Ts;
    x = pendulum_reference_step(x, xi(0), p);
    x = pendulum_reference_step(x, xi(1), p);
    return x(0);
}

inline Vec random_vec(std::mt19937_64& rng, int n, double lo, double hi) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = uniform_from_bits(rng(), lo, hi);
    return v;
}

inline PipelineConfig default_config() {
    PipelineConfig cfg;
    cfg.output_dir = "test_out";
    return cfg;
}

inline ObservabilityWindow unbounded_window(int N) {
    ObservabilityWindow win;
    win.N = N;
    win.state_box = Box::unbounded(2);
    win.input_box = Interval{};
    return win;
}

// Stable two-state linear SISO plant for empty-dictionary synthesis paths.
inline PlantModel make_linear_plant() {
    PlantModel model;
    model.state_dim = 2;
    model.name = "linear2";
    Mat A(2, 2);
    A << 1.1, 0.3, -0.2, 0.9;
    Vec B(2);
    B << 0.0, 1.0;
    model.step = [A, B](const Vec& x, double u) -> Vec { return A * x + B * u; };
    model.output = [](const Vec& x) { return x(0); };
    model.analytic_inverse = {};
    return model;
}

}  // namespace testutil
