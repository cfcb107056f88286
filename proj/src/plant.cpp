#include "liftctl/plant.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <random>
#include <sstream>

namespace liftctl {

void ObservabilityWindow::validate(int state_dim) const {
    if (N < 1) throw ValidationError("observability window N must be >= 1");
    if (state_box.dim() != state_dim)
        throw ValidationError("state box dimension does not match the plant");
    if (!state_box.contains_origin() || !input_box.contains(0.0))
        throw ValidationError("X x U must contain the origin");
}

void PendulumParams::validate() const {
    if (Ts <= 0 || m <= 0 || ell <= 0 || g <= 0)
        throw ValidationError("pendulum parameters Ts, m, ell, g must be positive");
    if (mu < 0) throw ValidationError("pendulum friction mu must be nonnegative");
}

PlantModel make_pendulum(const PendulumParams& params) {
    params.validate();
    const double Ts = params.Ts;
    const double a = Ts * params.g / params.ell;        // gravity term on sin(x1)
    const double b = 1.0 - Ts * params.mu / (params.m * params.ell * params.ell);
    const double c = Ts / (params.m * params.ell);      // input gain through cos(x1)

    PlantModel model;
    model.state_dim = 2;
    model.name = "pendulum";
    model.step = [Ts, a, b, c](const Vec& x, double u) {
        Vec next(2);
        next(0) = x(0) + Ts * x(1);
        next(1) = a * std::sin(x(0)) + b * x(1) + c * std::cos(x(0)) * u;
        return next;
    };
    model.output = [](const Vec& x) { return x(0); };
    // Psi_2(w, v) = [w1; (w2 - w1)/Ts], independent of v.
    model.analytic_inverse = [Ts](const Vec& w, const Vec&) {
        Vec x(2);
        x(0) = w(0);
        x(1) = (w(1) - w(0)) / Ts;
        return x;
    };
    return model;
}

namespace {

std::map<std::string, std::function<PlantModel()>>& registry() {
    static std::map<std::string, std::function<PlantModel()>> plants = {
        {"pendulum", [] { return make_pendulum(); }},
    };
    return plants;
}

std::mutex& registry_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace

void register_plant(const std::string& name, std::function<PlantModel()> factory) {
    std::lock_guard<std::mutex> lock(registry_mutex());
    registry()[name] = std::move(factory);
}

PlantModel get_plant(const std::string& name) {
    std::lock_guard<std::mutex> lock(registry_mutex());
    auto it = registry().find(name);
    if (it == registry().end())
        throw ValidationError("unknown plant: " + name);
    return it->second();
}

bool has_plant(const std::string& name) {
    std::lock_guard<std::mutex> lock(registry_mutex());
    return registry().count(name) > 0;
}

Vec iterate_dynamics(const PlantModel& model, const Vec& x0, const Vec& inputs) {
    Vec x = x0;
    for (Eigen::Index k = 0; k < inputs.size(); ++k) x = model.step(x, inputs(k));
    return x;
}

Vec lift_phi(const PlantModel& model, const ObservabilityWindow& win, const Vec& x,
             const Vec& v) {
    if (v.size() != win.N - 1)
        throw ValidationError("lift_phi expects N-1 input samples");
    const int bad_state = win.state_box.first_violation(x);
    if (bad_state >= 0) {
        std::ostringstream msg;
        msg << "state coordinate " << bad_state + 1 << " = " << x(bad_state)
            << " is outside X";
        throw std::domain_error(msg.str());
    }
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (!win.input_box.contains(v(i))) {
            std::ostringstream msg;
            msg << "input sample " << i + 1 << " = " << v(i) << " is outside U";
            throw std::domain_error(msg.str());
        }
    }
    Vec w(win.N);
    Vec state = x;
    for (int i = 0; i < win.N; ++i) {
        w(i) = model.output(state);
        if (i + 1 < win.N) state = model.step(state, v(i));
    }
    return w;
}

namespace {

// Window residual without the domain checks; Gauss-Newton iterates may step
// slightly outside X before being pulled back.
Vec phi_unchecked(const PlantModel& model, int N, const Vec& x, const Vec& v) {
    Vec w(N);
    Vec state = x;
    for (int i = 0; i < N; ++i) {
        w(i) = model.output(state);
        if (i + 1 < N) state = model.step(state, v(i));
    }
    return w;
}

}  // namespace

Vec invert_phi(const PlantModel& model, const ObservabilityWindow& win, const Vec& w,
               const Vec& v, const Vec& seed_x, const InversionSettings& settings) {
    if (w.size() != win.N) throw ValidationError("invert_phi expects a length-N window");
    if (model.analytic_inverse) return model.analytic_inverse(w, v);

    const int n = model.state_dim;
    Vec x = seed_x;
    Vec residual = phi_unchecked(model, win.N, x, v) - w;
    double err = residual.lpNorm<Eigen::Infinity>();

    for (int iter = 0; iter < settings.max_iters && err > settings.tol; ++iter) {
        Mat jac(win.N, n);
        for (int j = 0; j < n; ++j) {
            Vec xp = x;
            xp(j) += settings.fd_step;
            jac.col(j) = (phi_unchecked(model, win.N, xp, v) - residual - w) / settings.fd_step;
        }
        Vec delta = jac.colPivHouseholderQr().solve(-residual);

        // Damped update: halve until the residual improves.
        double alpha = 1.0;
        bool improved = false;
        for (int halving = 0; halving < 40; ++halving) {
            Vec trial = x + alpha * delta;
            Vec trial_res = phi_unchecked(model, win.N, trial, v) - w;
            const double trial_err = trial_res.lpNorm<Eigen::Infinity>();
            if (trial_err < err) {
                x = trial;
                residual = trial_res;
                err = trial_err;
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!improved) break;
    }

    if (err > settings.tol) {
        std::ostringstream msg;
        msg << "window inversion did not converge: residual " << err << " > tol "
            << settings.tol;
        throw InversionError(msg.str(), err);
    }
    return x;
}

Vec psi_map(const PlantModel& model, const ObservabilityWindow& win, const Vec& w,
            const Vec& v, const InversionSettings& settings) {
    if (v.size() != win.N) throw ValidationError("psi_map expects N input samples");
    const Vec v_head = v.head(win.N - 1);
    const Vec seed = Vec::Zero(model.state_dim);
    const Vec x_past = invert_phi(model, win, w, v_head, seed, settings);
    return iterate_dynamics(model, x_past, v);
}

AuxiliaryStep auxiliary_step(const PlantModel& model, const ObservabilityWindow& win,
                             const Vec& w, const Vec& v,
                             const InversionSettings& settings) {
    const Vec x_now = psi_map(model, win, w, v, settings);
    AuxiliaryStep out;
    out.y_w = model.output(x_now);
    out.w_next.resize(win.N);
    out.w_next.head(win.N - 1) = w.tail(win.N - 1);  // A_c shift
    out.w_next(win.N - 1) = out.y_w;                 // + B_c y_w
    return out;
}

InjectivityProbeReport probe_injectivity(const PlantModel& model,
                                         const ObservabilityWindow& win,
                                         const Box& sample_box, int samples,
                                         std::uint64_t seed, double separation,
                                         double resolution) {
    std::mt19937_64 rng(seed);
    std::vector<Vec> states;
    std::vector<Vec> windows;
    states.reserve(static_cast<size_t>(samples));
    windows.reserve(static_cast<size_t>(samples));

    const Vec v = Vec::Zero(win.N - 1);
    for (int s = 0; s < samples; ++s) {
        Vec x(model.state_dim);
        for (int i = 0; i < model.state_dim; ++i) {
            const auto& iv = sample_box.axes[static_cast<size_t>(i)];
            x(i) = uniform_from_bits(rng(), iv.lo, iv.hi);
        }
        states.push_back(x);
        windows.push_back(phi_unchecked(model, win.N, x, v));
    }

    InjectivityProbeReport report;
    report.samples = samples;
    for (size_t i = 0; i < states.size(); ++i) {
        for (size_t j = i + 1; j < states.size(); ++j) {
            const double state_gap = (states[i] - states[j]).lpNorm<Eigen::Infinity>();
            if (state_gap <= separation) continue;
            const double window_gap = (windows[i] - windows[j]).lpNorm<Eigen::Infinity>();
            report.min_window_gap = std::min(report.min_window_gap, window_gap);
            if (window_gap < resolution) ++report.collisions;
        }
    }
    return report;
}

}  // namespace liftctl
