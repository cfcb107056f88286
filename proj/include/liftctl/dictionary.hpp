#pragma once

#include <functional>
#include <string>
#include <vector>

#include "liftctl/common.hpp"
#include "liftctl/plant.hpp"

namespace liftctl {

// Regressor Z(w, xi) = [w; xi; Q(w, xi)]. The q entries are scalar closures
// registered with string labels; every q must vanish at the origin.
class Dictionary {
public:
    using QFunction = std::function<double(const Vec& w, const Vec& xi)>;

    Dictionary(int window_length, std::vector<QFunction> q_functions,
               std::vector<std::string> labels);

    int N() const { return window_length_; }
    int S() const { return 2 * window_length_ + static_cast<int>(q_.size()); }
    int q_size() const { return static_cast<int>(q_.size()); }
    const std::vector<std::string>& labels() const { return labels_; }

    // [w; xi; Q(w, xi)], rejecting non-finite entries by label.
    Vec eval_Z(const Vec& w, const Vec& xi) const;

    // Just the nonlinear block Q(w, xi).
    Vec eval_Q(const Vec& w, const Vec& xi) const;

    // Ordered labels + sizes, for reproducibility records.
    std::string manifest_json() const;

private:
    int window_length_;
    std::vector<QFunction> q_;
    std::vector<std::string> labels_;
};

// Dictionary used throughout for the pendulum: Q = [sin(w1) - w1; xi1 cos(w1) - xi1].
Dictionary make_pendulum_dictionary(int window_length = 2);

// Linear-only regressor (empty Q), for plants with exactly linear lifted output maps.
Dictionary make_linear_dictionary(int window_length);

Dictionary get_dictionary(const std::string& id, int window_length);

// Known expansion coefficients h_tilde = alpha * Z. Test oracle: the synthesis
// path never reads it.
struct GroundTruthExpansion {
    RowVec alpha;
};

// alpha for the pendulum dictionary ordering [w1 w2 xi1 xi2 sin(w1)-w1 xi1(cos(w1)-1)].
GroundTruthExpansion pendulum_ground_truth(const PendulumParams& params = {});

// Sampled check of the vanishing-slope condition on Q: on spheres of shrinking
// radius, max |Q|/|(w,xi)| must fall by at least a factor of two per decade.
struct SlopeReport {
    std::vector<double> radii;
    std::vector<double> ratios;
    bool pass = false;
};
SlopeReport check_vanishing_slope(const Dictionary& dict, const std::vector<double>& radii,
                                  int samples_per_radius, std::uint64_t seed = 20240901);

}  // namespace liftctl
