#pragma once

#include <string>

#include "liftctl/brunovsky.hpp"
#include "liftctl/experiments.hpp"
#include "liftctl/solver.hpp"

namespace liftctl {

// Post-solve residual tolerance for the data identities.
inline constexpr double kTolLin = 1e-6;

class SynthesisError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// The feedback SDP: decision variables P1 (symmetric 2N x 2N), Y1 (T x 2N)
// and, when the dictionary has nonlinear entries, G2 (T x (S-2N)) with the
// spectral-norm epigraph t. Strict inequalities are realized by an epsilon
// shift; a trace normalization on P1 pins down the scale of the (P1, Y1)
// ray, which leaves the resulting gain unchanged.
struct SdpProblem {
    DataMatrices data;
    BrunovskyBlocks blocks;
    Mat X1;
    Mat W0;
    double epsilon = 1e-6;
    std::string objective_norm = "spectral";

    ConicProgram program;
    VarDescriptor P1_var;
    VarDescriptor Y1_var;
    VarDescriptor G2_var;
    VarDescriptor t_var;
    bool has_nonlinear = false;
};

struct SynthesisResult {
    SolveStatus solver_status = SolveStatus::kNumericalFailure;
    Mat P1;          // 2N x 2N, symmetric positive definite
    Mat Y1_var;      // T x 2N
    Mat G2;          // T x (S-2N)
    Mat G1;          // T x 2N, Y1_var * P1^{-1}
    RowVec kappa;    // 1 x S
    Mat M;           // 2N x 2N closed-loop linear part
    Mat N_mat;       // 2N x (S-2N) nonlinearity gain
    double objective_value = 0.0;
    double identity_residual = 0.0;   // max abs of W0 * [G1 G2] - I_S
    double gain_identity_residual = 0.0;     // max abs of [kappa; I_S] - [U0; W0] * [G1 G2]
    double spectral_radius_M = 0.0;
    double p1_min_eigenvalue = 0.0;
    double p1_condition = 0.0;
    int data_rank = 0;                // numerical rank of [U0; Y0; V0; Q0]
    std::string diagnosis;
    SolveStats solver_stats;

    bool feasible() const { return solver_status == SolveStatus::kOptimal; }
};

struct LyapunovCertificate {
    Mat P1_inv;
    double min_decrease_eigenvalue = 0.0;  // of P1^{-1} - M' P1^{-1} M
    bool holds() const { return min_decrease_eigenvalue > 0.0; }
};

SdpProblem build_sdp(const DataMatrices& dm, double epsilon = 1e-6);

// Solves the SDP and assembles the gain. Infeasibility comes back as a
// result with a diagnosis; solver breakdowns and post-solve validation
// failures throw SynthesisError.
SynthesisResult solve_sdp(const SdpProblem& problem, const SolverHandle& handle = {});

// Decrease matrix eigenvalue without judgement, for probing hand-made pairs.
double certificate_min_eigenvalue(const Mat& P1, const Mat& M);

// Throws SynthesisError when the decrease condition fails.
LyapunovCertificate lyapunov_certificate(const SynthesisResult& res);

std::string synthesis_result_to_json(const SynthesisResult& res);
SynthesisResult synthesis_result_from_json(const std::string& text);

}  // namespace liftctl
