#include "liftctl/synthesis.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <limits>
#include <sstream>

#include "json.hpp"

#include "liftctl/jsonio.hpp"

namespace liftctl {

SdpProblem build_sdp(const DataMatrices& dm, double epsilon) {
    if (!(epsilon > 0.0)) {
        throw ValidationError("SDP strictness epsilon must be positive");
    }
    if (dm.N < 1 || dm.T < 1 || dm.S < 2 * dm.N) {
        throw ValidationError("data matrices have inconsistent dimensions");
    }

    SdpProblem prob;
    prob.data = dm;
    prob.blocks = BrunovskyBlocks::make(dm.N);
    prob.X1 = dm.stacked_X1();
    prob.W0 = dm.stacked_W0();
    prob.epsilon = epsilon;

    const int n2 = 2 * dm.N;
    const int T = dm.T;
    const int S = dm.S;
    const int p = S - n2;
    prob.has_nonlinear = p > 0;

    ConicProgram& cp = prob.program;
    prob.P1_var = cp.add_symmetric_variable("P1", n2);
    prob.Y1_var = cp.add_matrix_variable("Y1", T, n2);
    if (p > 0) {
        prob.G2_var = cp.add_matrix_variable("G2", T, p);
        prob.t_var = cp.add_scalar_variable("t");
    }

    // W0 * Y1 = [P1; 0]
    for (int r = 0; r < S; ++r) {
        for (int c = 0; c < n2; ++c) {
            std::vector<std::pair<int, double>> coeffs;
            for (int t = 0; t < T; ++t) {
                if (prob.W0(r, t) != 0.0) {
                    const auto ref = cp.entry(prob.Y1_var, t, c);
                    coeffs.emplace_back(ref.index, prob.W0(r, t) * ref.scale);
                }
            }
            if (r < n2) {
                const auto ref = cp.entry(prob.P1_var, r, c);
                coeffs.emplace_back(ref.index, -ref.scale);
            }
            cp.add_equality(std::move(coeffs), 0.0);
        }
    }

    // tr(P1) = 2N removes the free scaling of the (P1, Y1) pair.
    {
        std::vector<std::pair<int, double>> coeffs;
        for (int d = 0; d < n2; ++d) {
            const auto ref = cp.entry(prob.P1_var, d, d);
            coeffs.emplace_back(ref.index, ref.scale);
        }
        cp.add_equality(std::move(coeffs), static_cast<double>(n2));
    }

    // W0 * G2 = [0; I]
    for (int r = 0; r < S && p > 0; ++r) {
        for (int c = 0; c < p; ++c) {
            std::vector<std::pair<int, double>> coeffs;
            for (int t = 0; t < T; ++t) {
                if (prob.W0(r, t) != 0.0) {
                    const auto ref = cp.entry(prob.G2_var, t, c);
                    coeffs.emplace_back(ref.index, prob.W0(r, t) * ref.scale);
                }
            }
            cp.add_equality(std::move(coeffs), (r >= n2 && r - n2 == c) ? 1.0 : 0.0);
        }
    }

    // [P1, (X1 Y1)'; X1 Y1, P1] - eps I >= 0
    const int lmi = cp.add_psd_block(2 * n2);
    for (int i = 0; i < n2; ++i) {
        for (int j = i; j < n2; ++j) {
            cp.block_add_entry(lmi, i, j, prob.P1_var, i, j, 1.0);
            cp.block_add_entry(lmi, n2 + i, n2 + j, prob.P1_var, i, j, 1.0);
        }
    }
    for (int i = 0; i < n2; ++i) {
        for (int j = 0; j < n2; ++j) {
            // entry (i, n2+j) of the block is (X1 Y1)(j, i)
            for (int t = 0; t < T; ++t) {
                if (prob.X1(j, t) != 0.0) {
                    cp.block_add_entry(lmi, i, n2 + j, prob.Y1_var, t, i, prob.X1(j, t));
                }
            }
        }
    }
    for (int d = 0; d < 2 * n2; ++d) cp.block_add_constant(lmi, d, d, -epsilon);

    // Epigraph of the spectral norm: [t I, (X1 G2)'; X1 G2, t I] >= 0
    if (p > 0) {
        const int epi = cp.add_psd_block(p + n2);
        for (int d = 0; d < p + n2; ++d) cp.block_add_entry(epi, d, d, prob.t_var, 0, 0, 1.0);
        for (int i = 0; i < p; ++i) {
            for (int a = 0; a < n2; ++a) {
                // entry (i, p+a) is (X1 G2)(a, i)
                for (int t = 0; t < T; ++t) {
                    if (prob.X1(a, t) != 0.0) {
                        cp.block_add_entry(epi, i, p + a, prob.G2_var, t, i, prob.X1(a, t));
                    }
                }
            }
        }
        cp.add_objective_term(prob.t_var, 0, 0, 1.0);
    }

    return prob;
}

namespace {

int numerical_rank(const Mat& m) {
    Eigen::JacobiSVD<Mat> svd(m);
    const Vec& sigma = svd.singularValues();
    if (sigma.size() == 0) return 0;
    const double tol = sigma(0) * std::max(m.rows(), m.cols()) *
                       std::numeric_limits<double>::epsilon();
    int rank = 0;
    while (rank < sigma.size() && sigma(rank) > std::max(tol, 1e-12)) ++rank;
    return rank;
}

}  // namespace

SynthesisResult solve_sdp(const SdpProblem& problem, const SolverHandle& handle) {
    const int n2 = 2 * problem.data.N;
    const int S = problem.data.S;
    const int p = S - n2;

    SynthesisResult res;
    res.data_rank = numerical_rank(problem.data.stacked_full());

    const Solution sol = solve(problem.program, handle);
    res.solver_status = sol.status;
    res.solver_stats = sol.stats;

    if (sol.status == SolveStatus::kInfeasible) {
        std::ostringstream msg;
        msg << "SDP infeasible (" << sol.stats.message << "); numerical rank of [U0; Y0; V0; Q0] is "
            << res.data_rank << " of " << 1 + S << " required for rich data";
        res.diagnosis = msg.str();
        return res;
    }
    if (sol.status != SolveStatus::kOptimal) {
        throw SynthesisError("SDP solver failed with status " + to_string(sol.status) + ": " +
                             sol.stats.message);
    }

    Mat P1 = extract_matrix(sol, problem.P1_var);
    P1 = 0.5 * (P1 + P1.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(P1);
    const double eig_min = es.eigenvalues().minCoeff();
    const double eig_max = es.eigenvalues().maxCoeff();
    res.p1_min_eigenvalue = eig_min;
    res.p1_condition = (eig_min > 0.0) ? eig_max / eig_min : kInf;
    if (!(eig_min > 0.0) || res.p1_condition > 1e12) {
        std::ostringstream msg;
        msg << "P1 numerically singular: min eigenvalue " << eig_min << ", condition "
            << res.p1_condition;
        throw SynthesisError(msg.str());
    }
    Mat P1_inv = es.eigenvectors() *
                 es.eigenvalues().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
    P1_inv = 0.5 * (P1_inv + P1_inv.transpose());

    res.P1 = P1;
    res.Y1_var = extract_matrix(sol, problem.Y1_var);
    res.G1 = res.Y1_var * P1_inv;
    res.M = problem.X1 * res.G1;
    if (p > 0) {
        res.G2 = extract_matrix(sol, problem.G2_var);
        res.N_mat = problem.X1 * res.G2;
        res.objective_value = sol.objective;
    } else {
        res.G2 = Mat::Zero(problem.data.T, 0);
        res.N_mat = Mat::Zero(n2, 0);
        res.objective_value = 0.0;
    }

    Mat G(problem.data.T, S);
    G.leftCols(n2) = res.G1;
    G.rightCols(p) = res.G2;
    res.kappa = problem.data.U0 * G;

    const Mat identity_err = problem.W0 * G - Mat::Identity(S, S);
    res.identity_residual = identity_err.cwiseAbs().maxCoeff();

    Mat gain_identity(1 + S, S);
    gain_identity.row(0) = res.kappa;
    gain_identity.bottomRows(S) = Mat::Identity(S, S);
    const Mat gain_identity_err = gain_identity - problem.data.stacked_full() * G;
    res.gain_identity_residual = gain_identity_err.cwiseAbs().maxCoeff();

    if (res.identity_residual > kTolLin || res.gain_identity_residual > kTolLin) {
        std::ostringstream msg;
        msg << "post-solve identity residual " << std::max(res.identity_residual, res.gain_identity_residual)
            << " exceeds " << kTolLin;
        throw SynthesisError(msg.str());
    }

    Eigen::EigenSolver<Mat> me(res.M);
    res.spectral_radius_M = me.eigenvalues().cwiseAbs().maxCoeff();
    if (!(res.spectral_radius_M < 1.0)) {
        std::ostringstream msg;
        msg << "closed-loop matrix M has spectral radius " << res.spectral_radius_M
            << " despite a feasible SDP; solver tolerances are too loose";
        throw SynthesisError(msg.str());
    }

    return res;
}

double certificate_min_eigenvalue(const Mat& P1, const Mat& M) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (P1 + P1.transpose()));
    if (es.eigenvalues().minCoeff() <= 0.0) {
        throw ValidationError("P1 must be positive definite");
    }
    Mat P1_inv = es.eigenvectors() *
                 es.eigenvalues().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
    P1_inv = 0.5 * (P1_inv + P1_inv.transpose());
    Mat decrease = P1_inv - M.transpose() * P1_inv * M;
    decrease = 0.5 * (decrease + decrease.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> dec(decrease);
    return dec.eigenvalues().minCoeff();
}

LyapunovCertificate lyapunov_certificate(const SynthesisResult& res) {
    if (!res.feasible()) {
        throw SynthesisError("certificate requested for a non-optimal synthesis result");
    }
    LyapunovCertificate cert;
    Eigen::SelfAdjointEigenSolver<Mat> es(res.P1);
    cert.P1_inv = es.eigenvectors() *
                  es.eigenvalues().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
    cert.P1_inv = 0.5 * (cert.P1_inv + cert.P1_inv.transpose());
    cert.min_decrease_eigenvalue = certificate_min_eigenvalue(res.P1, res.M);
    if (!cert.holds()) {
        std::ostringstream msg;
        msg << "Lyapunov decrease certificate failed: min eigenvalue "
            << cert.min_decrease_eigenvalue;
        throw SynthesisError(msg.str());
    }
    return cert;
}

std::string synthesis_result_to_json(const SynthesisResult& res) {
    nlohmann::json j;
    j["solver_status"] = to_string(res.solver_status);
    j["P1"] = matrix_to_json(res.P1);
    j["Y1"] = matrix_to_json(res.Y1_var);
    j["G2"] = matrix_to_json(res.G2);
    j["G1"] = matrix_to_json(res.G1);
    j["kappa"] = matrix_to_json(res.kappa);
    j["M"] = matrix_to_json(res.M);
    j["N"] = matrix_to_json(res.N_mat);
    j["objective_value"] = res.objective_value;
    j["identity_residual"] = res.identity_residual;
    j["gain_identity_residual"] = res.gain_identity_residual;
    j["spectral_radius_M"] = res.spectral_radius_M;
    j["p1_min_eigenvalue"] = res.p1_min_eigenvalue;
    j["p1_condition"] = res.p1_condition;
    j["data_rank"] = res.data_rank;
    j["diagnosis"] = res.diagnosis;
    j["solver_stats"] = {{"newton_iters", res.solver_stats.newton_iters},
                         {"barrier_stages", res.solver_stats.barrier_stages},
                         {"final_mu", res.solver_stats.final_mu},
                         {"eq_residual", res.solver_stats.eq_residual},
                         {"min_block_eigenvalue", res.solver_stats.min_block_eigenvalue},
                         {"equality_rank", res.solver_stats.equality_rank},
                         {"message", res.solver_stats.message}};
    return j.dump(2);
}

SynthesisResult synthesis_result_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    SynthesisResult res;
    const std::string status = j.at("solver_status").get<std::string>();
    if (status == "optimal") res.solver_status = SolveStatus::kOptimal;
    else if (status == "infeasible") res.solver_status = SolveStatus::kInfeasible;
    else if (status == "unbounded") res.solver_status = SolveStatus::kUnbounded;
    else if (status == "iteration_limit") res.solver_status = SolveStatus::kLimit;
    else res.solver_status = SolveStatus::kNumericalFailure;
    res.P1 = matrix_from_json(j.at("P1"));
    res.Y1_var = matrix_from_json(j.at("Y1"));
    res.G2 = matrix_from_json(j.at("G2"));
    res.G1 = matrix_from_json(j.at("G1"));
    res.kappa = matrix_from_json(j.at("kappa"));
    res.M = matrix_from_json(j.at("M"));
    res.N_mat = matrix_from_json(j.at("N"));
    res.objective_value = j.at("objective_value").get<double>();
    res.identity_residual = j.at("identity_residual").get<double>();
    res.gain_identity_residual = j.at("gain_identity_residual").get<double>();
    res.spectral_radius_M = j.at("spectral_radius_M").get<double>();
    res.p1_min_eigenvalue = j.at("p1_min_eigenvalue").get<double>();
    res.p1_condition = j.at("p1_condition").get<double>();
    res.data_rank = j.at("data_rank").get<int>();
    res.diagnosis = j.at("diagnosis").get<std::string>();
    const nlohmann::json& stats = j.at("solver_stats");
    res.solver_stats.newton_iters = stats.at("newton_iters").get<int>();
    res.solver_stats.barrier_stages = stats.at("barrier_stages").get<int>();
    res.solver_stats.final_mu = stats.at("final_mu").get<double>();
    res.solver_stats.eq_residual = stats.at("eq_residual").get<double>();
    res.solver_stats.min_block_eigenvalue =
        stats.at("min_block_eigenvalue").get<double>();
    res.solver_stats.equality_rank = stats.at("equality_rank").get<int>();
    res.solver_stats.message = stats.at("message").get<std::string>();
    return res;
}

}  // namespace liftctl
