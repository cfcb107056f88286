#include "liftctl/dictionary.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "json.hpp"

namespace liftctl {

Dictionary::Dictionary(int window_length, std::vector<QFunction> q_functions,
                       std::vector<std::string> labels)
    : window_length_(window_length), q_(std::move(q_functions)), labels_(std::move(labels)) {
    if (window_length_ < 1) throw ValidationError("dictionary window length must be >= 1");
    if (labels_.size() != q_.size())
        throw ValidationError("dictionary needs one label per q function");
    // Equilibrium preservation: every q must vanish at the origin.
    const Vec zero = Vec::Zero(window_length_);
    for (size_t i = 0; i < q_.size(); ++i) {
        if (std::abs(q_[i](zero, zero)) > 0.0)
            throw ValidationError("dictionary entry '" + labels_[i] +
                                  "' does not vanish at the origin");
    }
}

Vec Dictionary::eval_Q(const Vec& w, const Vec& xi) const {
    if (w.size() != window_length_ || xi.size() != window_length_)
        throw ValidationError("eval_Q expects two length-N vectors");
    Vec q(q_size());
    for (int i = 0; i < q_size(); ++i) {
        q(i) = q_[static_cast<size_t>(i)](w, xi);
        if (!std::isfinite(q(i)))
            throw EvaluationError("dictionary entry '" + labels_[static_cast<size_t>(i)] +
                                  "' evaluated to a non-finite value");
    }
    return q;
}

Vec Dictionary::eval_Z(const Vec& w, const Vec& xi) const {
    Vec z(S());
    z.head(window_length_) = w;
    z.segment(window_length_, window_length_) = xi;
    if (q_size() > 0) z.tail(q_size()) = eval_Q(w, xi);
    return z;
}

std::string Dictionary::manifest_json() const {
    nlohmann::json j;
    j["N"] = window_length_;
    j["S"] = S();
    j["labels"] = labels_;
    return j.dump(2);
}

Dictionary make_pendulum_dictionary(int window_length) {
    if (window_length < 1) throw ValidationError("window length must be >= 1");
    std::vector<Dictionary::QFunction> q = {
        [](const Vec& w, const Vec&) { return std::sin(w(0)) - w(0); },
        [](const Vec& w, const Vec& xi) { return xi(0) * std::cos(w(0)) - xi(0); },
    };
    return Dictionary(window_length, std::move(q), {"sin(w1)-w1", "xi1*(cos(w1)-1)"});
}

Dictionary make_linear_dictionary(int window_length) {
    return Dictionary(window_length, {}, {});
}

Dictionary get_dictionary(const std::string& id, int window_length) {
    if (id == "pendulum") return make_pendulum_dictionary(window_length);
    if (id == "linear") return make_linear_dictionary(window_length);
    throw ValidationError("unknown dictionary: " + id);
}

GroundTruthExpansion pendulum_ground_truth(const PendulumParams& params) {
    params.validate();
    const double Ts = params.Ts;
    const double friction = Ts * params.mu / (params.m * params.ell * params.ell);
    const double gravity = Ts * Ts * params.g / params.ell;
    const double gain = Ts * Ts / (params.m * params.ell);

    GroundTruthExpansion gt;
    gt.alpha.resize(6);
    gt.alpha << -1.0 + friction + gravity, 2.0 - friction, gain, 0.0, gravity, gain;
    return gt;
}

SlopeReport check_vanishing_slope(const Dictionary& dict, const std::vector<double>& radii,
                                  int samples_per_radius, std::uint64_t seed) {
    if (radii.empty()) throw ValidationError("slope check needs at least one radius");
    for (size_t i = 0; i < radii.size(); ++i) {
        if (radii[i] < 1e-8) throw ValidationError("slope-check radii must be >= 1e-8");
        if (i > 0 && radii[i] >= radii[i - 1])
            throw ValidationError("slope-check radii must be strictly decreasing");
    }
    if (samples_per_radius < 1) throw ValidationError("samples_per_radius must be >= 1");

    const int N = dict.N();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    SlopeReport report;
    report.radii = radii;
    for (double r : radii) {
        double worst = 0.0;
        for (int s = 0; s < samples_per_radius; ++s) {
            Vec dir(2 * N);
            for (Eigen::Index i = 0; i < dir.size(); ++i) dir(i) = gauss(rng);
            if (dir.norm() == 0.0) dir(0) = 1.0;
            dir *= r / dir.norm();
            const Vec w = dir.head(N);
            const Vec xi = dir.tail(N);
            const double q_norm = dict.q_size() > 0 ? dict.eval_Q(w, xi).norm() : 0.0;
            worst = std::max(worst, q_norm / r);
        }
        report.ratios.push_back(worst);
    }

    // Pass if the ratio falls by at least 2x per decade between samples.
    report.pass = true;
    for (size_t i = 1; i < radii.size(); ++i) {
        const double decades = std::log10(radii[i - 1] / radii[i]);
        const double allowed = report.ratios[i - 1] / std::pow(2.0, decades);
        if (report.ratios[i] > allowed) report.pass = false;
    }
    return report;
}

}  // namespace liftctl
