#include "liftctl/roa.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace liftctl {

void GridSpec::validate() const {
    if (axes.empty()) throw ValidationError("grid needs at least one axis");
    for (size_t i = 0; i < axes.size(); ++i) {
        if (axes[i].count < 1) {
            throw ValidationError("grid axis " + std::to_string(i + 1) +
                                  " must have at least one point");
        }
        if (!(axes[i].lo <= axes[i].hi)) {
            throw ValidationError("grid axis " + std::to_string(i + 1) + " has lo > hi");
        }
    }
}

std::vector<double> GridSpec::axis_values(int axis) const {
    const GridAxis& a = axes.at(static_cast<size_t>(axis));
    std::vector<double> values;
    values.reserve(static_cast<size_t>(a.count));
    if (a.count == 1) {
        values.push_back(0.5 * (a.lo + a.hi));
        return values;
    }
    for (int i = 0; i < a.count; ++i) {
        values.push_back(a.lo + (a.hi - a.lo) * static_cast<double>(i) /
                                    static_cast<double>(a.count - 1));
    }
    return values;
}

long GridSpec::total_points() const {
    long total = 1;
    for (const auto& a : axes) total *= a.count;
    return total;
}

void RoaAnalysis::validate() const {
    if (dict == nullptr) throw ValidationError("analysis has no dictionary");
    const int n2 = 2 * dict->N();
    if (P1_inv.rows() != n2 || P1_inv.cols() != n2) {
        throw ValidationError("P1_inv must be 2N x 2N");
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (P1_inv + P1_inv.transpose()),
                                          Eigen::EigenvaluesOnly);
    if (!(es.eigenvalues().minCoeff() > 0.0)) {
        throw ValidationError("P1_inv must be positive definite");
    }
    if (M.rows() != n2 || M.cols() != n2) throw ValidationError("M must be 2N x 2N");
    if (N_mat.rows() != n2 || N_mat.cols() != dict->S() - n2) {
        throw ValidationError("N must be 2N x (S-2N)");
    }
}

double lyapunov_value(const RoaAnalysis& analysis, const Vec& z) {
    return z.dot(analysis.P1_inv * z);
}

double lyapunov_difference(const RoaAnalysis& analysis, const Vec& w, const Vec& xi) {
    const int N = analysis.dict->N();
    if (w.size() != N || xi.size() != N) {
        throw ValidationError("lyapunov_difference expects N-long windows");
    }
    Vec z(2 * N);
    z << w, xi;
    Vec z_next = analysis.M * z;
    if (analysis.N_mat.cols() > 0) {
        z_next += analysis.N_mat * analysis.dict->eval_Q(w, xi);
    }
    return lyapunov_value(analysis, z_next) - lyapunov_value(analysis, z);
}

void GammaSearchSpec::validate() const {
    if (!(gamma_hi > 0.0) || !(gamma_min > 0.0) || gamma_min >= gamma_hi) {
        throw ValidationError("gamma search range must satisfy 0 < gamma_min < gamma_hi");
    }
    if (!(rel_tol > 0.0) || rel_tol >= 1.0) {
        throw ValidationError("gamma bisection tolerance must lie in (0, 1)");
    }
    if (level_samples < 1 || interior_samples < 0) {
        throw ValidationError("gamma search sample counts invalid");
    }
    if (!(origin_exclusion >= 0.0)) {
        throw ValidationError("origin exclusion radius must be nonnegative");
    }
}

namespace {

// Certifies one gamma by sampling: level-set points hit V(z) = gamma
// exactly, interior points fill the sublevel set.
struct LevelCertifier {
    const RoaAnalysis& analysis;
    const GammaSearchSpec& spec;
    Mat L_inv_t;  // maps the unit ball in V-coordinates back to z
    int n;
    long* samples_checked;

    bool certify(double gamma, std::mt19937_64& rng, double* worst_out) const {
        std::normal_distribution<double> gauss(0.0, 1.0);
        const double root = std::sqrt(gamma);
        const long total = spec.level_samples + spec.interior_samples;
        *worst_out = -kInf;
        for (long s = 0; s < total; ++s) {
            Vec dir(n);
            for (int i = 0; i < n; ++i) dir(i) = gauss(rng);
            const double len = dir.norm();
            if (len < 1e-300) continue;
            dir /= len;
            double radius = root;
            if (s >= spec.level_samples) {
                const double u = uniform_from_bits(rng(), 0.0, 1.0);
                radius = root * std::pow(u, 1.0 / n);
            }
            const Vec z = radius * (L_inv_t * dir);
            if (z.norm() <= spec.origin_exclusion) continue;
            const double w_val =
                lyapunov_difference(analysis, z.head(n / 2), z.tail(n / 2));
            ++(*samples_checked);
            *worst_out = std::max(*worst_out, w_val);
            if (!(w_val < 0.0)) return false;
        }
        return true;
    }
};

}  // namespace

GammaSearchResult find_gamma(const RoaAnalysis& analysis, const GammaSearchSpec& spec) {
    analysis.validate();
    spec.validate();

    GammaSearchResult result;
    const int n = 2 * analysis.dict->N();

    // V(z) = z' P1inv z = |L' z|^2 with P1inv = L L'; level-set points are
    // z = sqrt(gamma) L^{-T} d for unit d.
    Eigen::LLT<Mat> llt(0.5 * (analysis.P1_inv + analysis.P1_inv.transpose()));
    if (llt.info() != Eigen::Success) {
        throw ValidationError("P1_inv is not positive definite");
    }
    const Mat L_inv_t = llt.matrixL()
                            .transpose()
                            .solve(Mat::Identity(n, n));

    LevelCertifier certifier{analysis, spec, L_inv_t, n, &result.samples_checked};

    // Fresh generator per gamma keeps the certificate deterministic and the
    // sample set identical across candidate levels. worst_difference reports
    // the samples of the level that ends up certified, not of rejected probes.
    double probe_worst = -kInf;
    auto certify = [&](double gamma) {
        std::mt19937_64 rng(spec.seed);
        double pass_worst = -kInf;
        const bool ok = certifier.certify(gamma, rng, &pass_worst);
        probe_worst = std::max(probe_worst, pass_worst);
        if (ok) result.worst_difference = pass_worst;
        return ok;
    };

    if (certify(spec.gamma_hi)) {
        result.gamma = spec.gamma_hi;
        result.capped = true;
        result.note = "certified up to the search upper limit";
        return result;
    }

    double bad = spec.gamma_hi;
    double good = -1.0;
    for (double gamma = spec.gamma_hi / 10.0; gamma >= spec.gamma_min; gamma /= 10.0) {
        if (certify(gamma)) {
            good = gamma;
            break;
        }
        bad = gamma;
    }
    if (good < 0.0) {
        result.degenerate = true;
        result.worst_difference = probe_worst;
        result.note = "no positive gamma certified down to the coarsest scale";
        return result;
    }

    while ((bad - good) / good > spec.rel_tol) {
        const double mid = std::sqrt(good * bad);
        if (certify(mid)) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    result.gamma = good;
    result.note = "sampled certificate";
    return result;
}

Vec lifted_warmup_state(const PlantModel& model, const Vec& x0,
                        const std::vector<double>& warmup) {
    const int N = static_cast<int>(warmup.size());
    if (N < 1) throw ValidationError("warmup sequence must be nonempty");
    Vec z(2 * N);
    Vec x = x0;
    for (int k = 0; k < N; ++k) {
        z(k) = model.output(x);
        z(N + k) = warmup[static_cast<size_t>(k)];
        x = model.step(x, warmup[static_cast<size_t>(k)]);
    }
    return z;
}

RoaGridResult empirical_roa_grid(const PlantModel& model, const ControllerState& controller_init,
                                 const GridSpec& grid, const ConvergenceTest& test,
                                 double overflow_bound, double divergence_norm) {
    grid.validate();
    test.validate();
    if (static_cast<int>(grid.axes.size()) != model.state_dim) {
        throw ValidationError("grid dimension does not match the plant state dimension");
    }

    RoaGridResult result;
    result.spec = grid;
    result.test = test;
    result.points.reserve(static_cast<size_t>(grid.total_points()));

    std::vector<std::vector<double>> values;
    for (size_t a = 0; a < grid.axes.size(); ++a) {
        values.push_back(grid.axis_values(static_cast<int>(a)));
    }

    std::vector<size_t> index(grid.axes.size(), 0);
    const long total = grid.total_points();
    for (long flat = 0; flat < total; ++flat) {
        Vec x0(model.state_dim);
        long rem = flat;
        for (int a = static_cast<int>(grid.axes.size()) - 1; a >= 0; --a) {
            const auto& axis_vals = values[static_cast<size_t>(a)];
            index[static_cast<size_t>(a)] = static_cast<size_t>(rem % axis_vals.size());
            rem /= static_cast<long>(axis_vals.size());
        }
        for (size_t a = 0; a < grid.axes.size(); ++a) {
            x0(static_cast<Eigen::Index>(a)) = values[a][index[a]];
        }
        const ClosedLoopTrace trace =
            simulate_closed_loop(model, controller_init, x0, test.horizon, overflow_bound);
        const Verdict verdict = classify_trace(trace, test, divergence_norm);
        switch (verdict) {
            case Verdict::kConverged: ++result.converged; break;
            case Verdict::kDiverged: ++result.diverged; break;
            case Verdict::kBudgetExhausted: ++result.budget_exhausted; break;
        }
        result.points.push_back(GridPointResult{x0, verdict});
    }
    return result;
}

void write_grid_csv(const RoaGridResult& result, const std::string& path,
                    std::uint64_t config_hash) {
    const std::filesystem::path file(path);
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    std::ofstream out(file);
    if (!out) throw ValidationError("cannot open grid file " + path);
    out.precision(17);
    out << "# config=" << fnv_hex(config_hash) << "\n";
    const size_t dim = result.spec.axes.size();
    for (size_t a = 0; a < dim; ++a) out << "x" << (a + 1) << ",";
    out << "verdict\n";
    for (const auto& point : result.points) {
        for (Eigen::Index i = 0; i < point.x0.size(); ++i) out << point.x0(i) << ",";
        out << to_string(point.verdict) << "\n";
    }
}

std::string grid_summary_json(const RoaGridResult& result, const GammaSearchResult* gamma,
                              std::uint64_t config_hash) {
    nlohmann::json j;
    j["counts"] = {{"converged", result.converged},
                   {"diverged", result.diverged},
                   {"budget_exhausted", result.budget_exhausted},
                   {"total", static_cast<long>(result.points.size())}};
    j["test"] = {{"horizon", result.test.horizon},
                 {"tail_begin", result.test.tail_begin},
                 {"tail_end", result.test.tail_end},
                 {"threshold", result.test.threshold}};

    bool any = false;
    Vec lo, hi;
    bool origin_converged = false;
    for (const auto& point : result.points) {
        if (point.verdict != Verdict::kConverged) continue;
        if (!any) {
            lo = point.x0;
            hi = point.x0;
            any = true;
        } else {
            lo = lo.cwiseMin(point.x0);
            hi = hi.cwiseMax(point.x0);
        }
        if (point.x0.cwiseAbs().maxCoeff() == 0.0) origin_converged = true;
    }
    if (any) {
        nlohmann::json box = nlohmann::json::array();
        for (Eigen::Index i = 0; i < lo.size(); ++i) box.push_back({lo(i), hi(i)});
        j["converged_bounding_box"] = box;
    } else {
        j["converged_bounding_box"] = nullptr;
    }
    j["origin_converged"] = origin_converged;

    if (gamma != nullptr) {
        nlohmann::json g;
        if (gamma->gamma.has_value()) g["gamma"] = *gamma->gamma;
        else g["gamma"] = nullptr;
        g["capped"] = gamma->capped;
        g["degenerate"] = gamma->degenerate;
        g["samples_checked"] = gamma->samples_checked;
        g["note"] = gamma->note;
        j["sublevel_certificate"] = g;
    }
    j["domain_caveat"] =
        "the Lyapunov difference is certified on sampled points of the sublevel set; "
        "the sampled box stands in for the analytic domain of V";
    j["config_hash"] = fnv_hex(config_hash);
    return j.dump(2);
}

}  // namespace liftctl
