// Acceptance suite: ten end-to-end checks printed one per line, exit code
// equal to the number of failures. Each check recomputes what it needs from
// public entry points; the seed-1 synthesis is shared through a cache.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "liftctl/controller.hpp"
#include "liftctl/dictionary.hpp"
#include "liftctl/experiments.hpp"
#include "liftctl/pipeline.hpp"
#include "liftctl/plant.hpp"
#include "liftctl/roa.hpp"
#include "liftctl/solver.hpp"
#include "liftctl/synthesis.hpp"

using namespace liftctl;

namespace {

int g_failures = 0;

std::string fmt(double v) {
    std::ostringstream os;
    os << std::scientific << std::setprecision(2) << v;
    return os.str();
}

void criterion(int id, const std::string& label,
               const std::function<bool(std::string&)>& body) {
    const auto start = std::chrono::steady_clock::now();
    std::string detail;
    bool pass = false;
    try {
        pass = body(detail);
    } catch (const std::exception& e) {
        detail = std::string("exception: ") + e.what();
        pass = false;
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (pass ? "[PASS]" : "[FAIL]") << " " << id << ". " << label;
    if (!detail.empty()) std::cout << ": " << detail;
    std::cout << " [" << std::fixed << std::setprecision(2) << secs << " s]\n";
    std::cout.unsetf(std::ios::floatfield);
    if (!pass) ++g_failures;
}

struct Seed1Synthesis {
    DataMatrices dm;
    SynthesisResult res;
    std::string error;
    bool ok = false;
};

const Seed1Synthesis& seed1_synthesis() {
    static const Seed1Synthesis cache = [] {
        Seed1Synthesis out;
        try {
            const PlantModel plant = get_plant("pendulum");
            const Dictionary dict = make_pendulum_dictionary();
            ExperimentConfig cfg;
            const RawDataset raw = run_experiments(plant, cfg);
            out.dm = assemble_matrices(raw, dict);
            out.res = solve_sdp(build_sdp(out.dm));
            out.ok = out.res.feasible();
            if (!out.ok) out.error = out.res.diagnosis;
        } catch (const std::exception& e) {
            out.error = e.what();
        }
        return out;
    }();
    return cache;
}

bool auxiliary_consistency(std::string& detail) {
    const PlantModel plant = get_plant("pendulum");
    const ObservabilityWindow win = testutil::unbounded_window(2);
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> law(-0.5, 0.5);

    const int runs = 100;
    const int steps = 50;
    double worst = 0.0;
    for (int run = 0; run < runs; ++run) {
        const Vec x0 = testutil::random_vec(rng, 2, -0.5, 0.5);
        std::vector<double> u(static_cast<size_t>(steps) + 2);
        for (auto& ui : u) ui = law(rng);

        std::vector<double> y(u.size() + 1);
        Vec x = x0;
        for (size_t k = 0; k < u.size(); ++k) {
            y[k] = plant.output(x);
            x = plant.step(x, u[k]);
        }
        y[u.size()] = plant.output(x);

        Vec v0(1);
        v0 << u[0];
        Vec w = lift_phi(plant, win, x0, v0);
        for (int k = 0; k < steps; ++k) {
            Vec v(2);
            v << u[static_cast<size_t>(k)], u[static_cast<size_t>(k) + 1];
            const AuxiliaryStep s = auxiliary_step(plant, win, w, v);
            worst = std::max(worst, std::abs(s.y_w - y[static_cast<size_t>(k) + 2]));
            w = s.w_next;
        }
    }
    detail = "max output error " + fmt(worst) + " over 100 runs x 50 steps (tol 1e-08)";
    return worst <= 1e-8;
}

bool alpha_exactness(std::string& detail) {
    const Dictionary dict = make_pendulum_dictionary();
    const GroundTruthExpansion truth = pendulum_ground_truth();

    const int n = 11;
    double worst = 0.0;
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            for (int c = 0; c < n; ++c)
                for (int d = 0; d < n; ++d) {
                    Vec w(2), xi(2);
                    w << -0.5 + a * 0.1, -0.5 + b * 0.1;
                    xi << -0.5 + c * 0.1, -0.5 + d * 0.1;
                    const double lhs = testutil::pendulum_h_tilde(w, xi);
                    const double rhs = (truth.alpha * dict.eval_Z(w, xi))(0);
                    worst = std::max(worst, std::abs(lhs - rhs));
                }
    detail = "max |h_tilde - alpha Z| " + fmt(worst) + " on the 11^4 grid (tol 1e-10)";
    return worst <= 1e-10;
}

bool data_identity(std::string& detail) {
    const PlantModel plant = get_plant("pendulum");
    const Dictionary dict = make_pendulum_dictionary();
    const GroundTruthExpansion truth = pendulum_ground_truth();

    ExperimentConfig multi;
    const double r_multi =
        verify_data_identity(truth, assemble_matrices(run_experiments(plant, multi), dict));

    ExperimentConfig single;
    single.mode = CollectionMode::kSingleTrajectory;
    const double r_single =
        verify_data_identity(truth, assemble_matrices(run_experiments(plant, single), dict));

    detail = "residual " + fmt(r_multi) + " multi, " + fmt(r_single) +
             " single trajectory (tol 1e-08)";
    return r_multi <= 1e-8 && r_single <= 1e-8;
}

bool synthesis_across_seeds(std::string& detail) {
    const PlantModel plant = get_plant("pendulum");
    const Dictionary dict = make_pendulum_dictionary();

    int feasible = 0;
    int violations = 0;
    int sign_pattern = 0;
    int small_tail = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        ExperimentConfig cfg;
        cfg.rng_seed = seed;
        SynthesisResult res;
        try {
            res = solve_sdp(build_sdp(assemble_matrices(run_experiments(plant, cfg), dict)));
        } catch (const std::exception&) {
            continue;
        }
        if (!res.feasible()) continue;
        ++feasible;
        bool ok = res.spectral_radius_M < 1.0 && res.p1_min_eigenvalue > 0.0 &&
                  res.identity_residual <= 1e-6;
        try {
            ok = ok && lyapunov_certificate(res).holds();
        } catch (const std::exception&) {
            ok = false;
        }
        if (!ok) ++violations;
        if (res.kappa(0) > 0.0 && res.kappa(1) < 0.0) ++sign_pattern;
        if (std::abs(res.kappa(4)) <= 1.0 && std::abs(res.kappa(5)) <= 1.0) ++small_tail;
    }
    detail = std::to_string(feasible) + "/10 seeds feasible, " + std::to_string(violations) +
             " with a violated invariant; kappa sign pattern (+,-) in " +
             std::to_string(sign_pattern) + "/10, nonlinear entries below 1 in " +
             std::to_string(small_tail) + "/10 (informational)";
    return feasible >= 8 && violations == 0;
}

bool closed_loop_model(std::string& detail) {
    const Seed1Synthesis& s = seed1_synthesis();
    if (!s.ok) {
        detail = "seed-1 synthesis unavailable: " + s.error;
        return false;
    }
    const Dictionary dict = make_pendulum_dictionary();
    const GroundTruthExpansion truth = pendulum_ground_truth();

    Mat A = Mat::Zero(4, 4);
    A(0, 1) = 1.0;
    A(2, 3) = 1.0;
    Vec B1 = Vec::Zero(4);
    B1(3) = 1.0;
    Vec B2 = Vec::Zero(4);
    B2(1) = 1.0;

    std::mt19937_64 rng(505);
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
        const Vec z = testutil::random_vec(rng, 4, -0.5, 0.5);
        const Vec w = z.head(2);
        const Vec xi = z.tail(2);
        const Vec Z = dict.eval_Z(w, xi);
        const Vec lhs = s.res.M * z + s.res.N_mat * dict.eval_Q(w, xi);
        const Vec rhs = A * z + B1 * (s.res.kappa * Z)(0) + B2 * (truth.alpha * Z)(0);
        worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff());
    }
    detail = "max closed-loop model mismatch " + fmt(worst) + " over 200 points (tol 1e-06)";
    return worst <= 1e-6;
}

std::optional<ClosedLoopTrace> g_reference_trace;

bool reference_convergence(std::string& detail) {
    PipelineConfig cfg;
    cfg.reseed_attempts = 4;
    cfg.x0 = Vec(2);
    cfg.x0 << 0.1, 0.0;

    const PipelineOutcome outcome = cmd_synthesize(cfg, nullptr, true);
    const ClosedLoopTrace trace = cmd_simulate(cfg, outcome.synthesis, cfg.x0, false);
    const Verdict verdict = classify_trace(trace, cfg.test, cfg.divergence_norm);
    const double tail = trace.tail_sup_norm(cfg.test.tail_begin, cfg.test.tail_end);
    g_reference_trace = trace;

    detail = "verdict " + to_string(verdict) + " after " +
             std::to_string(outcome.attempts.size()) + " attempt(s), tail sup-norm " +
             fmt(tail) + " (tol 1e-06, budget 5 attempts)";
    return verdict == Verdict::kConverged && tail < 1e-6;
}

bool window_consistency(std::string& detail) {
    if (!g_reference_trace) {
        PipelineConfig cfg;
        const PipelineOutcome outcome = cmd_synthesize(cfg);
        g_reference_trace = cmd_simulate(cfg, outcome.synthesis, cfg.x0, false);
    }
    const double dev = check_window_consistency(*g_reference_trace, 2);
    detail = "max observer window deviation " + fmt(dev) + " (must be exactly 0)";
    return dev == 0.0;
}

bool roa_certificate(std::string& detail) {
    const Seed1Synthesis& s = seed1_synthesis();
    if (!s.ok) {
        detail = "seed-1 synthesis unavailable: " + s.error;
        return false;
    }
    const PlantModel plant = get_plant("pendulum");
    const Dictionary dict = make_pendulum_dictionary();
    const LyapunovCertificate cert = lyapunov_certificate(s.res);

    RoaAnalysis analysis;
    analysis.P1_inv = cert.P1_inv;
    analysis.M = s.res.M;
    analysis.N_mat = s.res.N_mat;
    analysis.dict = &dict;

    const GammaSearchResult gamma = find_gamma(analysis);
    if (!gamma.gamma || *gamma.gamma <= 0.0 || gamma.degenerate) {
        detail = "no positive gamma certified: " + gamma.note;
        return false;
    }
    if (gamma.worst_difference >= 0.0) {
        detail = "sampled Lyapunov difference not negative: " + fmt(gamma.worst_difference);
        return false;
    }

    GridSpec grid;
    grid.axes = {GridAxis{}, GridAxis{}};
    const ControllerState init = ControllerState::make_default(dict, s.res.kappa);
    const RoaGridResult sweep = empirical_roa_grid(plant, init, grid);

    bool origin_ok = false;
    long certified = 0;
    long certified_converged = 0;
    const std::vector<double> warmup(2, 0.0);
    for (const auto& point : sweep.points) {
        if (point.x0(0) == 0.0 && point.x0(1) == 0.0)
            origin_ok = point.verdict == Verdict::kConverged;
        const Vec z = lifted_warmup_state(plant, point.x0, warmup);
        if (lyapunov_value(analysis, z) < *gamma.gamma) {
            ++certified;
            if (point.verdict == Verdict::kConverged) ++certified_converged;
        }
    }

    detail = "gamma " + fmt(*gamma.gamma) + ", grid " + std::to_string(sweep.converged) +
             "/" + std::to_string(sweep.points.size()) + " converged, certified starts " +
             std::to_string(certified_converged) + "/" + std::to_string(certified) +
             " converged, origin " + (origin_ok ? "converged" : "not converged");
    return sweep.converged > 0 && origin_ok && certified > 0 &&
           certified_converged == certified;
}

bool vanishing_slope(std::string& detail) {
    const Dictionary dict = make_pendulum_dictionary();
    const SlopeReport report = check_vanishing_slope(dict, {1e-1, 1e-2, 1e-3}, 200);
    std::string ratios;
    for (double r : report.ratios) ratios += (ratios.empty() ? "" : ", ") + fmt(r);
    detail = "slope ratios " + ratios + " (each decade must halve the ratio)";
    return report.pass;
}

bool solver_oracle(std::string& detail) {
    ConicProgram prog;
    const VarDescriptor t = prog.add_scalar_variable("t");
    const int blk = prog.add_psd_block(1);
    prog.block_add_entry(blk, 0, 0, t, 0, 0, 1.0);
    prog.block_add_constant(blk, 0, 0, -1.0);
    prog.add_objective_term(t, 0, 0, 1.0);
    const Solution sol = solve(prog);
    if (sol.status != SolveStatus::kOptimal || std::abs(sol.objective - 1.0) > 1e-6) {
        detail = "known-optimum program missed t = 1: got " + fmt(sol.objective);
        return false;
    }

    const Seed1Synthesis& s = seed1_synthesis();
    if (!s.ok) {
        detail = "seed-1 synthesis unavailable: " + s.error;
        return false;
    }
    std::filesystem::create_directories("test_out/acceptance");
    const std::string program_path = "test_out/acceptance/program.json";
    {
        std::ofstream out(program_path);
        out << build_sdp(s.dm).program.dump_json() << "\n";
    }
    std::ostringstream cmd;
    cmd << "python3 \"" << LIFTCTL_TOOLS_DIR << "/verify_program_dump.py\" --program "
        << program_path << " --expect " << std::setprecision(12) << s.res.objective_value
        << " --tol 1e-5 > test_out/acceptance/crosscheck.log 2>&1";
    const int raw = std::system(cmd.str().c_str());
    const int code = (raw == -1) ? -1 : WEXITSTATUS(raw);
    if (code == 0) {
        detail = "oracle objective 1 within 1e-06; independent solver agrees within 1e-05";
        return true;
    }
    if (code == 77) {
        detail = "oracle objective 1 within 1e-06; cross-check skipped (cvxpy unavailable)";
        return true;
    }
    detail = "independent solver disagrees (see test_out/acceptance/crosscheck.log)";
    return false;
}

}  // namespace

int main() {
    std::cout << "liftctl acceptance suite\n";
    criterion(1, "auxiliary model tracks the plant output", auxiliary_consistency);
    criterion(2, "expansion coefficients reproduce h_tilde", alpha_exactness);
    criterion(3, "one-step data identity holds on collected data", data_identity);
    criterion(4, "synthesis succeeds across seeds with valid certificates",
              synthesis_across_seeds);
    criterion(5, "lifted closed-loop model matches the ground truth", closed_loop_model);
    criterion(6, "reference start converges under the learned controller",
              reference_convergence);
    criterion(7, "observer windows match the true signals after warmup", window_consistency);
    criterion(8, "region of attraction is certified and non-trivial", roa_certificate);
    criterion(9, "dictionary nonlinearities have vanishing slope", vanishing_slope);
    criterion(10, "solver reproduces known optima and survives a cross-check", solver_oracle);

    if (g_failures == 0) {
        std::cout << "all 10 criteria passed\n";
    } else {
        std::cout << g_failures << " criterion(s) failed\n";
    }
    return g_failures;
}
