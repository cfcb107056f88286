#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "liftctl/common.hpp"

namespace liftctl {

// Black-box simulable dynamics x+ = step(x, u), y = output(x) with the
// equilibrium pinned at the origin. Built-in models may carry a closed-form
// window inverse which invert_phi() dispatches to instead of iterating.
struct PlantModel {
    int state_dim = 0;
    std::string name;
    std::function<Vec(const Vec&, double)> step;
    std::function<double(const Vec&)> output;

    // Closed-form left inverse of the N-step output map, when one is known:
    // (w, v_{[0,N-2]}) -> x. Checked against the window length at call sites.
    std::function<Vec(const Vec&, const Vec&)> analytic_inverse;
};

// Lifting horizon N together with the admissible sets X (states) and U (inputs).
struct ObservabilityWindow {
    int N = 1;
    Box state_box;   // X
    Interval input_box;  // U

    void validate(int state_dim) const;
};

struct PendulumParams {
    double Ts = 0.1;
    double m = 1.0;
    double ell = 1.0;
    double g = 9.8;
    double mu = 0.01;

    void validate() const;
};

PlantModel make_pendulum(const PendulumParams& params = {});

// Registry keyed by name; "pendulum" is built in. User plants register through
// this API only (no dynamic code loading).
void register_plant(const std::string& name, std::function<PlantModel()> factory);
PlantModel get_plant(const std::string& name);
bool has_plant(const std::string& name);

// F^k(x0, inputs): k-fold composition of the dynamics. k = 0 returns x0.
Vec iterate_dynamics(const PlantModel& model, const Vec& x0, const Vec& inputs);

// Phi_N(x, v_{[0,N-2]}): stacked outputs along the first N steps.
// Rejects x outside X or any v_i outside U.
Vec lift_phi(const PlantModel& model, const ObservabilityWindow& win, const Vec& x,
             const Vec& v);

struct InversionSettings {
    double tol = 1e-9;       // residual tolerance on the recovered window
    int max_iters = 100;
    double fd_step = 1e-6;   // forward-difference Jacobian step
};

// Psi_N(w, v): recovers x with lift_phi(x, v) = w. Dispatches to the model's
// closed form when present, otherwise runs damped Gauss-Newton from seed_x.
Vec invert_phi(const PlantModel& model, const ObservabilityWindow& win, const Vec& w,
               const Vec& v, const Vec& seed_x, const InversionSettings& settings = {});

// psi(w, v_{[0,N-1]}) = F^N(Psi_N(w, v_{[0,N-2]}), v): current state from the
// lifted coordinates.
Vec psi_map(const PlantModel& model, const ObservabilityWindow& win, const Vec& w,
            const Vec& v, const InversionSettings& settings = {});

// One step of the auxiliary system: y_w = h_tilde(w, v), w_next = A_c w + B_c y_w.
struct AuxiliaryStep {
    Vec w_next;
    double y_w;
};
AuxiliaryStep auxiliary_step(const PlantModel& model, const ObservabilityWindow& win,
                             const Vec& w, const Vec& v,
                             const InversionSettings& settings = {});

// Sampled surrogate for the injectivity half of uniform observability: states
// at mutual distance > separation whose windows land closer than resolution
// are reported as collisions. Diagnostic only; never throws on failures.
struct InjectivityProbeReport {
    int samples = 0;
    int collisions = 0;
    double min_window_gap = kInf;  // over all pairs beyond the separation
    bool ok() const { return collisions == 0; }
};
InjectivityProbeReport probe_injectivity(const PlantModel& model,
                                         const ObservabilityWindow& win,
                                         const Box& sample_box, int samples,
                                         std::uint64_t seed, double separation,
                                         double resolution);

}  // namespace liftctl
