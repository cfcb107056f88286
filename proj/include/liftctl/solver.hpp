#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "liftctl/common.hpp"

namespace liftctl {

// Handle to a matrix-shaped decision variable inside a ConicProgram.
// Symmetric variables are stored in scaled upper-triangular vectorization
// (diagonal entries verbatim, off-diagonals times sqrt(2)), so Frobenius inner
// products carry over to the flattened coordinates.
struct VarDescriptor {
    std::string name;
    int rows = 0;
    int cols = 0;
    bool symmetric = false;
    int offset = 0;
    int size = 0;
    int program_id = -1;
};

enum class SolveStatus { kOptimal, kInfeasible, kUnbounded, kNumericalFailure, kLimit };

std::string to_string(SolveStatus status);

struct SolverHandle {
    std::string backend = "native-barrier";
    double feas_tol = 1e-8;   // equality feasibility
    double gap_tol = 1e-9;    // target barrier gap (sum of cone dims times mu)
    int max_iters = 4000;     // total Newton iteration budget
    double ball_radius = 1e4; // phase-I bounding ball in the reduced space

    void validate() const;
};

struct SolveStats {
    int newton_iters = 0;
    int barrier_stages = 0;
    double final_mu = 0.0;
    double eq_residual = 0.0;
    double min_block_eigenvalue = 0.0;
    int equality_rank = 0;
    std::string message;
};

struct Solution {
    SolveStatus status = SolveStatus::kNumericalFailure;
    Vec primal;
    double objective = 0.0;
    SolveStats stats;
    int program_id = -1;
};

// Linear SDP in flattened scalar variables: linear equality rows, affine PSD
// cone blocks, linear objective (minimize).
class ConicProgram {
public:
    ConicProgram();

    VarDescriptor add_matrix_variable(const std::string& name, int rows, int cols);
    VarDescriptor add_symmetric_variable(const std::string& name, int dim);
    VarDescriptor add_scalar_variable(const std::string& name);

    // Scalar slot backing entry (r, c) of a variable: entry = scale * x[index].
    struct EntryRef {
        int index;
        double scale;
    };
    EntryRef entry(const VarDescriptor& var, int r, int c) const;

    void add_equality(std::vector<std::pair<int, double>> coeffs, double rhs);

    // PSD blocks are filled on the upper triangle only; entries mirror.
    int add_psd_block(int dim);
    void block_add_constant(int block, int r, int c, double value);
    void block_add_entry(int block, int r, int c, const VarDescriptor& var, int vr, int vc,
                         double coeff);

    void add_objective_term(const VarDescriptor& var, int r, int c, double coeff);

    int num_scalars() const { return num_scalars_; }
    int num_equalities() const { return static_cast<int>(equalities_.size()); }
    int num_blocks() const { return static_cast<int>(blocks_.size()); }
    int block_dim(int block) const { return blocks_[static_cast<size_t>(block)].dim; }
    int id() const { return program_id_; }

    // Self-describing dump for cross-checking against an independent solver.
    std::string dump_json() const;

private:
    friend Solution solve(const ConicProgram& prog, const SolverHandle& handle);

    struct EqualityRow {
        std::vector<std::pair<int, double>> coeffs;
        double rhs;
    };
    struct PsdBlock {
        int dim;
        Mat constant;
        std::map<int, Mat> coefficients;  // scalar index -> symmetric coefficient matrix
    };

    int program_id_;
    int num_scalars_ = 0;
    std::vector<VarDescriptor> variables_;
    std::vector<EqualityRow> equalities_;
    std::vector<PsdBlock> blocks_;
    std::vector<std::pair<int, double>> objective_;
};

Solution solve(const ConicProgram& prog, const SolverHandle& handle = {});

// Reshape the flattened primal back to matrix form. Symmetric variables come
// back exactly symmetric. Rejects descriptors from a different program.
Mat extract_matrix(const Solution& solution, const VarDescriptor& var);

}  // namespace liftctl
