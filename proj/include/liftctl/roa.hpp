#pragma once

#include <optional>
#include <string>
#include <vector>

#include "liftctl/controller.hpp"
#include "liftctl/dictionary.hpp"
#include "liftctl/plant.hpp"

namespace liftctl {

struct GridAxis {
    double lo = -1.0;
    double hi = 1.0;
    int count = 41;
};

struct GridSpec {
    std::vector<GridAxis> axes;

    void validate() const;
    std::vector<double> axis_values(int axis) const;
    long total_points() const;
};

// Everything needed to evaluate the data-driven Lyapunov difference
// W(w, xi) = (Mz + N q)' P1inv (Mz + N q) - z' P1inv z with z = (w; xi).
struct RoaAnalysis {
    Mat P1_inv;
    Mat M;
    Mat N_mat;
    const Dictionary* dict = nullptr;
    std::optional<double> gamma;
    GridSpec grid_spec;

    void validate() const;
};

double lyapunov_difference(const RoaAnalysis& analysis, const Vec& w, const Vec& xi);
double lyapunov_value(const RoaAnalysis& analysis, const Vec& z);

struct GammaSearchSpec {
    double gamma_hi = 10.0;
    double gamma_min = 1e-12;
    double rel_tol = 1e-3;
    int level_samples = 2000;
    int interior_samples = 10000;
    double origin_exclusion = 1e-9;
    std::uint64_t seed = 7;

    void validate() const;
};

struct GammaSearchResult {
    std::optional<double> gamma;
    bool capped = false;       // hit the search upper limit
    bool degenerate = false;   // no positive gamma certified at the coarsest scale
    long samples_checked = 0;
    double worst_difference = -kInf;  // largest W over the certified level's
                                      // samples; over every probe when degenerate
    std::string note;
};

// Sampling-based certification: level-set and interior samples of R_gamma
// must all have W < 0 away from the origin. The result is a sampled
// certificate, not an algebraic one.
GammaSearchResult find_gamma(const RoaAnalysis& analysis, const GammaSearchSpec& spec = {});

// Lifted state (y-window; u-window) reached after driving the plant with the
// warmup inputs from x0; landing in R_gamma guarantees convergence from x0.
Vec lifted_warmup_state(const PlantModel& model, const Vec& x0,
                        const std::vector<double>& warmup);

struct GridPointResult {
    Vec x0;
    Verdict verdict = Verdict::kBudgetExhausted;
};

struct RoaGridResult {
    GridSpec spec;
    ConvergenceTest test;
    std::vector<GridPointResult> points;  // row-major, last axis fastest
    long converged = 0;
    long diverged = 0;
    long budget_exhausted = 0;
};

RoaGridResult empirical_roa_grid(const PlantModel& model, const ControllerState& controller_init,
                                 const GridSpec& grid, const ConvergenceTest& test = {},
                                 double overflow_bound = 1e9, double divergence_norm = 1e3);

void write_grid_csv(const RoaGridResult& result, const std::string& path,
                    std::uint64_t config_hash);
std::string grid_summary_json(const RoaGridResult& result, const GammaSearchResult* gamma,
                              std::uint64_t config_hash);

}  // namespace liftctl
