#include "liftctl/solver.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace liftctl {

namespace {

std::atomic<int> g_next_program_id{1};

constexpr double kSqrt2 = 1.4142135623730951;

}  // namespace

std::string to_string(SolveStatus status) {
    switch (status) {
        case SolveStatus::kOptimal: return "optimal";
        case SolveStatus::kInfeasible: return "infeasible";
        case SolveStatus::kUnbounded: return "unbounded";
        case SolveStatus::kNumericalFailure: return "numerical_failure";
        case SolveStatus::kLimit: return "iteration_limit";
    }
    return "unknown";
}

void SolverHandle::validate() const {
    if (backend != "native-barrier") {
        throw ValidationError("unknown solver backend '" + backend + "'");
    }
    if (!(feas_tol > 0.0) || !(gap_tol > 0.0)) {
        throw ValidationError("solver tolerances must be positive");
    }
    if (max_iters < 1) {
        throw ValidationError("solver iteration budget must be at least 1");
    }
    if (!(ball_radius > 0.0)) {
        throw ValidationError("phase-I ball radius must be positive");
    }
}

ConicProgram::ConicProgram() : program_id_(g_next_program_id.fetch_add(1)) {}

VarDescriptor ConicProgram::add_matrix_variable(const std::string& name, int rows, int cols) {
    if (rows < 1 || cols < 1) {
        throw ValidationError("variable '" + name + "' must have positive dimensions");
    }
    VarDescriptor var;
    var.name = name;
    var.rows = rows;
    var.cols = cols;
    var.symmetric = false;
    var.offset = num_scalars_;
    var.size = rows * cols;
    var.program_id = program_id_;
    num_scalars_ += var.size;
    variables_.push_back(var);
    return var;
}

VarDescriptor ConicProgram::add_symmetric_variable(const std::string& name, int dim) {
    if (dim < 1) {
        throw ValidationError("variable '" + name + "' must have positive dimensions");
    }
    VarDescriptor var;
    var.name = name;
    var.rows = dim;
    var.cols = dim;
    var.symmetric = true;
    var.offset = num_scalars_;
    var.size = dim * (dim + 1) / 2;
    var.program_id = program_id_;
    num_scalars_ += var.size;
    variables_.push_back(var);
    return var;
}

VarDescriptor ConicProgram::add_scalar_variable(const std::string& name) {
    return add_matrix_variable(name, 1, 1);
}

ConicProgram::EntryRef ConicProgram::entry(const VarDescriptor& var, int r, int c) const {
    if (var.program_id != program_id_) {
        throw ValidationError("variable '" + var.name + "' belongs to a different program");
    }
    if (r < 0 || r >= var.rows || c < 0 || c >= var.cols) {
        throw ValidationError("entry (" + std::to_string(r) + ", " + std::to_string(c) +
                              ") out of range for variable '" + var.name + "'");
    }
    if (!var.symmetric) {
        return EntryRef{var.offset + r * var.cols + c, 1.0};
    }
    if (r > c) std::swap(r, c);
    // Row-major upper triangle: row r starts after r full rows minus the
    // skipped lower part, i.e. at r*dim - r*(r-1)/2.
    const int dim = var.rows;
    const int pos = r * dim - r * (r - 1) / 2 + (c - r);
    const double scale = (r == c) ? 1.0 : 1.0 / kSqrt2;
    return EntryRef{var.offset + pos, scale};
}

void ConicProgram::add_equality(std::vector<std::pair<int, double>> coeffs, double rhs) {
    for (const auto& [idx, coef] : coeffs) {
        if (idx < 0 || idx >= num_scalars_) {
            throw ValidationError("equality references scalar index out of range");
        }
        if (!std::isfinite(coef)) {
            throw ValidationError("equality coefficient is not finite");
        }
    }
    if (!std::isfinite(rhs)) {
        throw ValidationError("equality right-hand side is not finite");
    }
    equalities_.push_back(EqualityRow{std::move(coeffs), rhs});
}

int ConicProgram::add_psd_block(int dim) {
    if (dim < 1) {
        throw ValidationError("PSD block dimension must be positive");
    }
    PsdBlock block;
    block.dim = dim;
    block.constant = Mat::Zero(dim, dim);
    blocks_.push_back(std::move(block));
    return static_cast<int>(blocks_.size()) - 1;
}

void ConicProgram::block_add_constant(int block, int r, int c, double value) {
    auto& blk = blocks_.at(static_cast<size_t>(block));
    if (r < 0 || c < 0 || r >= blk.dim || c >= blk.dim || r > c) {
        throw ValidationError("PSD block constant entry must lie in the upper triangle");
    }
    blk.constant(r, c) += value;
    if (r != c) blk.constant(c, r) += value;
}

void ConicProgram::block_add_entry(int block, int r, int c, const VarDescriptor& var, int vr,
                                   int vc, double coeff) {
    auto& blk = blocks_.at(static_cast<size_t>(block));
    if (r < 0 || c < 0 || r >= blk.dim || c >= blk.dim || r > c) {
        throw ValidationError("PSD block entry must lie in the upper triangle");
    }
    const EntryRef ref = entry(var, vr, vc);
    auto [it, inserted] = blk.coefficients.try_emplace(ref.index, Mat::Zero(blk.dim, blk.dim));
    it->second(r, c) += coeff * ref.scale;
    if (r != c) it->second(c, r) += coeff * ref.scale;
}

void ConicProgram::add_objective_term(const VarDescriptor& var, int r, int c, double coeff) {
    const EntryRef ref = entry(var, r, c);
    objective_.emplace_back(ref.index, coeff * ref.scale);
}

std::string ConicProgram::dump_json() const {
    nlohmann::json doc;
    doc["format"] = "conic-program";
    doc["version"] = 1;
    doc["num_scalars"] = num_scalars_;

    nlohmann::json vars = nlohmann::json::array();
    for (const auto& v : variables_) {
        vars.push_back({{"name", v.name},
                        {"rows", v.rows},
                        {"cols", v.cols},
                        {"symmetric", v.symmetric},
                        {"offset", v.offset},
                        {"size", v.size}});
    }
    doc["variables"] = vars;

    nlohmann::json eqs = nlohmann::json::array();
    for (const auto& row : equalities_) {
        nlohmann::json terms = nlohmann::json::array();
        for (const auto& [idx, coef] : row.coeffs) {
            terms.push_back({{"index", idx}, {"coeff", coef}});
        }
        eqs.push_back({{"terms", terms}, {"rhs", row.rhs}});
    }
    doc["equalities"] = eqs;

    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& blk : blocks_) {
        nlohmann::json constant = nlohmann::json::array();
        for (int r = 0; r < blk.dim; ++r) {
            for (int c = r; c < blk.dim; ++c) {
                if (blk.constant(r, c) != 0.0) {
                    constant.push_back({{"row", r}, {"col", c}, {"value", blk.constant(r, c)}});
                }
            }
        }
        nlohmann::json coeffs = nlohmann::json::array();
        for (const auto& [idx, mat] : blk.coefficients) {
            nlohmann::json entries = nlohmann::json::array();
            for (int r = 0; r < blk.dim; ++r) {
                for (int c = r; c < blk.dim; ++c) {
                    if (mat(r, c) != 0.0) {
                        entries.push_back({{"row", r}, {"col", c}, {"value", mat(r, c)}});
                    }
                }
            }
            coeffs.push_back({{"index", idx}, {"entries", entries}});
        }
        blocks.push_back({{"dim", blk.dim}, {"constant", constant}, {"coefficients", coeffs}});
    }
    doc["psd_blocks"] = blocks;

    nlohmann::json obj = nlohmann::json::array();
    for (const auto& [idx, coef] : objective_) {
        obj.push_back({{"index", idx}, {"coeff", coef}});
    }
    doc["objective"] = {{"sense", "minimize"}, {"terms", obj}};
    return doc.dump(2);
}

namespace {

// One PSD block after substituting x = x_p + Z z: F0 plus one coefficient
// matrix per reduced coordinate.
struct ReducedBlock {
    Mat F0;
    std::vector<Mat> F;
};

Mat eval_block(const ReducedBlock& blk, const Vec& z) {
    Mat out = blk.F0;
    for (int k = 0; k < z.size(); ++k) {
        if (z(k) != 0.0) out += z(k) * blk.F[static_cast<size_t>(k)];
    }
    return out;
}

bool is_interior(const std::vector<ReducedBlock>& blocks, const Vec& z) {
    for (const auto& blk : blocks) {
        const Mat F = eval_block(blk, z);
        if (!F.allFinite()) return false;
        Eigen::LLT<Mat> llt(F);
        if (llt.info() != Eigen::Success) return false;
        const auto& L = llt.matrixLLT();
        for (int i = 0; i < F.rows(); ++i) {
            if (!(L(i, i) > 0.0) || !std::isfinite(L(i, i))) return false;
        }
    }
    return true;
}

struct CenterResult {
    int iters = 0;
    bool stalled = false;
    double last_decrement = kInf;  // Newton decrement squared at exit
};

// Newton centering for the self-concordant barrier: full steps inside the
// quadratic region, damped steps 1/(1+lambda) outside it. No potential
// evaluations, which stay well-conditioned even when c/mu is enormous.
CenterResult center(const std::vector<ReducedBlock>& blocks, const Vec& c, double mu, Vec& z,
                    int iter_budget, double lambda2_stop,
                    const std::function<bool(const Vec&)>& early_stop) {
    CenterResult result;
    const int n = static_cast<int>(z.size());
    for (; result.iters < iter_budget; ++result.iters) {
        if (early_stop && early_stop(z)) return result;

        Vec grad = c / mu;
        Mat hess = Mat::Zero(n, n);
        for (const auto& blk : blocks) {
            const Mat F = eval_block(blk, z);
            Eigen::LLT<Mat> llt(F);
            if (llt.info() != Eigen::Success) {
                result.stalled = true;
                return result;
            }
            const Mat Finv = llt.solve(Mat::Identity(F.rows(), F.cols()));
            std::vector<Mat> W(static_cast<size_t>(n));
            for (int k = 0; k < n; ++k) {
                W[static_cast<size_t>(k)] = Finv * blk.F[static_cast<size_t>(k)];
                grad(k) -= W[static_cast<size_t>(k)].trace();
            }
            for (int k = 0; k < n; ++k) {
                for (int l = k; l < n; ++l) {
                    const double h =
                        (W[static_cast<size_t>(k)].array() *
                         W[static_cast<size_t>(l)].transpose().array())
                            .sum();
                    hess(k, l) += h;
                    if (l != k) hess(l, k) += h;
                }
            }
        }

        Eigen::LDLT<Mat> ldlt(hess);
        Vec step;
        if (ldlt.info() == Eigen::Success) {
            step = ldlt.solve(-grad);
        }
        if (ldlt.info() != Eigen::Success || !step.allFinite()) {
            const double reg = 1e-12 * (1.0 + std::abs(hess.trace()) / std::max(1, n));
            Eigen::LDLT<Mat> regged(hess + reg * Mat::Identity(n, n));
            step = regged.solve(-grad);
            if (!step.allFinite()) {
                result.stalled = true;
                return result;
            }
        }

        const double lambda2 = -grad.dot(step);
        result.last_decrement = lambda2;
        if (!(lambda2 > lambda2_stop)) return result;

        const double lambda = std::sqrt(std::max(lambda2, 0.0));
        double alpha = (lambda > 0.25) ? 1.0 / (1.0 + lambda) : 1.0;
        Vec trial = z + alpha * step;
        int halvings = 0;
        while (!is_interior(blocks, trial) && halvings < 60) {
            alpha *= 0.5;
            trial = z + alpha * step;
            ++halvings;
        }
        if (halvings >= 60) {
            result.stalled = true;
            return result;
        }
        z = trial;
    }
    return result;
}

}  // namespace

Solution solve(const ConicProgram& prog, const SolverHandle& handle) {
    handle.validate();

    Solution sol;
    sol.program_id = prog.program_id_;
    const int n = prog.num_scalars_;
    if (n == 0) {
        throw ValidationError("program has no variables");
    }

    Vec c = Vec::Zero(n);
    for (const auto& [idx, coef] : prog.objective_) c(idx) += coef;

    // Eliminate equalities: x = x_p + Z z with Z an orthonormal nullspace
    // basis, so the cone problem lives in the reduced coordinates z.
    const int m = prog.num_equalities();
    Vec x_p = Vec::Zero(n);
    Mat Z;
    if (m > 0) {
        Mat A = Mat::Zero(m, n);
        Vec b = Vec::Zero(m);
        for (int i = 0; i < m; ++i) {
            const auto& row = prog.equalities_[static_cast<size_t>(i)];
            for (const auto& [idx, coef] : row.coeffs) A(i, idx) += coef;
            b(i) = row.rhs;
        }
        Eigen::BDCSVD<Mat> svd(A, Eigen::ComputeThinU | Eigen::ComputeFullV);
        const Vec& sigma = svd.singularValues();
        const double sigma_max = sigma.size() > 0 ? sigma(0) : 0.0;
        const double rank_tol = std::max(1e-13, sigma_max * std::max(m, n) *
                                                    std::numeric_limits<double>::epsilon());
        int rank = 0;
        while (rank < sigma.size() && sigma(rank) > rank_tol) ++rank;
        sol.stats.equality_rank = rank;

        Vec coeffs = svd.matrixU().leftCols(rank).transpose() * b;
        coeffs.array() /= sigma.head(rank).array();
        x_p = svd.matrixV().leftCols(rank) * coeffs;

        const double residual = (A * x_p - b).cwiseAbs().maxCoeff();
        sol.stats.eq_residual = residual;
        if (residual > handle.feas_tol * (1.0 + b.cwiseAbs().maxCoeff())) {
            sol.status = SolveStatus::kInfeasible;
            std::ostringstream msg;
            msg << "equality system inconsistent: rank " << rank << " of " << m
                << " rows, best residual " << residual;
            sol.stats.message = msg.str();
            return sol;
        }
        Z = svd.matrixV().rightCols(n - rank);
    } else {
        Z = Mat::Identity(n, n);
    }
    const int nz = static_cast<int>(Z.cols());

    const Vec c_reduced = Z.transpose() * c;

    auto finish = [&](const Vec& z, SolveStatus status, const std::string& message) {
        sol.primal = x_p + Z * z;
        sol.objective = c.dot(sol.primal);
        sol.status = status;
        sol.stats.message = message;
        double min_eig = kInf;
        for (const auto& blk : prog.blocks_) {
            Mat F = blk.constant;
            for (const auto& [idx, mat] : blk.coefficients) F += sol.primal(idx) * mat;
            Eigen::SelfAdjointEigenSolver<Mat> es(F, Eigen::EigenvaluesOnly);
            min_eig = std::min(min_eig, es.eigenvalues().minCoeff());
        }
        sol.stats.min_block_eigenvalue = prog.blocks_.empty() ? 0.0 : min_eig;
        return sol;
    };

    if (nz == 0) {
        Solution out =
            finish(Vec::Zero(0), SolveStatus::kOptimal, "fully determined by equalities");
        if (!prog.blocks_.empty() && out.stats.min_block_eigenvalue < -handle.feas_tol) {
            out.status = SolveStatus::kInfeasible;
            out.stats.message = "equalities force a point outside the PSD cone";
        }
        return out;
    }

    if (prog.blocks_.empty()) {
        // Affine problem: bounded only when the objective is constant on the
        // feasible subspace.
        if (c_reduced.cwiseAbs().maxCoeff() > 1e-12 * (1.0 + c.cwiseAbs().maxCoeff())) {
            sol.status = SolveStatus::kUnbounded;
            sol.stats.message = "linear objective unbounded on the equality subspace";
            return sol;
        }
        return finish(Vec::Zero(nz), SolveStatus::kOptimal, "affine feasibility");
    }

    std::vector<ReducedBlock> blocks;
    int cone_dim = 0;
    for (const auto& blk : prog.blocks_) {
        ReducedBlock red;
        red.F0 = blk.constant;
        for (const auto& [idx, mat] : blk.coefficients) red.F0 += x_p(idx) * mat;
        red.F.assign(static_cast<size_t>(nz), Mat::Zero(blk.dim, blk.dim));
        for (const auto& [idx, mat] : blk.coefficients) {
            for (int k = 0; k < nz; ++k) {
                const double w = Z(idx, k);
                if (w != 0.0) red.F[static_cast<size_t>(k)] += w * mat;
            }
        }
        blocks.push_back(std::move(red));
        cone_dim += blk.dim;
    }

    int iters_used = 0;
    Vec z = Vec::Zero(nz);

    // Phase I: minimize s subject to F_j(z) + s I >= 0 inside a ball around
    // the projected start, stopping as soon as s goes strictly negative.
    double start_margin = -kInf;
    for (const auto& blk : blocks) {
        Eigen::SelfAdjointEigenSolver<Mat> es(blk.F0, Eigen::EigenvaluesOnly);
        start_margin = std::max(start_margin, -es.eigenvalues().minCoeff());
    }
    const double interior_target = 1e-9;
    if (start_margin > -interior_target) {
        std::vector<ReducedBlock> phase1;
        for (const auto& blk : blocks) {
            ReducedBlock aug;
            aug.F0 = blk.F0;
            aug.F.assign(static_cast<size_t>(nz + 1), Mat());
            for (int k = 0; k < nz; ++k) aug.F[static_cast<size_t>(k)] = blk.F[static_cast<size_t>(k)];
            aug.F[static_cast<size_t>(nz)] = Mat::Identity(blk.F0.rows(), blk.F0.cols());
            phase1.push_back(std::move(aug));
        }
        // Ball block keeps the phase-I sublevel sets bounded: the bordered
        // matrix [[R I, z], [z', R]] is PSD exactly when |z|^2 <= R^2.
        {
            const double R = handle.ball_radius;
            ReducedBlock ball;
            ball.F0 = Mat::Zero(nz + 1, nz + 1);
            ball.F0.topLeftCorner(nz, nz) = R * Mat::Identity(nz, nz);
            ball.F0(nz, nz) = R;
            ball.F.assign(static_cast<size_t>(nz + 1), Mat::Zero(nz + 1, nz + 1));
            for (int k = 0; k < nz; ++k) {
                ball.F[static_cast<size_t>(k)](k, nz) = 1.0;
                ball.F[static_cast<size_t>(k)](nz, k) = 1.0;
            }
            phase1.push_back(std::move(ball));
        }

        Vec zs = Vec::Zero(nz + 1);
        zs(nz) = start_margin + 1.0;
        Vec cs = Vec::Zero(nz + 1);
        cs(nz) = 1.0;
        // Exit once the slack clears a comfortable margin; thinner margins
        // are still accepted if that is all the geometry allows.
        const double early_target = 1e-4;
        auto early = [&](const Vec& current) { return current(nz) < -early_target; };

        double mu = std::max(1.0, start_margin + 1.0);
        while (iters_used < handle.max_iters) {
            const CenterResult cr = center(phase1, cs, mu, zs,
                                           std::min(handle.max_iters - iters_used, 300), 1e-4,
                                           early);
            iters_used += cr.iters;
            ++sol.stats.barrier_stages;
            if (zs(nz) < -early_target) break;
            if (cr.stalled || mu < 1e-12) break;
            mu *= 0.1;
        }
        sol.stats.newton_iters = iters_used;
        if (!(zs(nz) < -interior_target)) {
            if (iters_used >= handle.max_iters) {
                sol.status = SolveStatus::kLimit;
                sol.stats.message = "iteration budget exhausted during phase I";
                return sol;
            }
            sol.status = SolveStatus::kInfeasible;
            std::ostringstream msg;
            msg << "no strictly feasible point found: best PSD slack " << zs(nz)
                << " (equality rank " << sol.stats.equality_rank << ")";
            sol.stats.message = msg.str();
            return sol;
        }
        z = zs.head(nz);
    }

    // Phase II: follow the central path for the true objective.
    const bool pure_feasibility = c_reduced.cwiseAbs().maxCoeff() == 0.0;
    double mu = std::max(1.0, std::abs(c_reduced.dot(z)) / std::max(1, cone_dim));
    const double mu_final = handle.gap_tol / std::max(1, cone_dim);
    while (true) {
        const bool final_stage = pure_feasibility || mu <= mu_final;
        const double lambda2_stop = final_stage ? 1e-6 : 1e-2;
        const CenterResult cr = center(blocks, c_reduced, mu, z,
                                       std::min(handle.max_iters - iters_used, 300), lambda2_stop,
                                       {});
        iters_used += cr.iters;
        ++sol.stats.barrier_stages;
        sol.stats.newton_iters = iters_used;
        if (z.cwiseAbs().maxCoeff() > 1e10) {
            return finish(z, SolveStatus::kUnbounded,
                          "iterates diverged; objective appears unbounded below");
        }
        if (final_stage) break;
        if (iters_used >= handle.max_iters) {
            return finish(z, SolveStatus::kLimit, "iteration budget exhausted during phase II");
        }
        if (cr.stalled) {
            return finish(z, SolveStatus::kNumericalFailure,
                          "Newton centering stalled before reaching target gap");
        }
        mu = std::max(mu * 0.1, mu_final);
    }
    sol.stats.final_mu = mu;

    std::ostringstream msg;
    msg << "barrier converged: gap bound " << mu * cone_dim << ", " << iters_used
        << " Newton iterations";
    return finish(z, SolveStatus::kOptimal, msg.str());
}

Mat extract_matrix(const Solution& solution, const VarDescriptor& var) {
    if (var.program_id != solution.program_id) {
        throw ValidationError("variable '" + var.name +
                              "' does not belong to the solved program");
    }
    if (solution.primal.size() < var.offset + var.size) {
        throw ValidationError("solution does not carry a primal point");
    }
    Mat out(var.rows, var.cols);
    if (!var.symmetric) {
        for (int r = 0; r < var.rows; ++r) {
            for (int c = 0; c < var.cols; ++c) {
                out(r, c) = solution.primal(var.offset + r * var.cols + c);
            }
        }
        return out;
    }
    const int dim = var.rows;
    int pos = var.offset;
    for (int r = 0; r < dim; ++r) {
        for (int c = r; c < dim; ++c) {
            const double raw = solution.primal(pos++);
            const double value = (r == c) ? raw : raw / kSqrt2;
            out(r, c) = value;
            out(c, r) = value;
        }
    }
    return out;
}

}  // namespace liftctl
