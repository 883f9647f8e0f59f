#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "fdsyn/constraints.hpp"

namespace fdsyn {

/// Bijective map from (matrix, degree, row, col) to flat decision indices:
/// free X entries, free Y entries (leading coefficient excluded), then gamma
/// or the per-frequency Gamma_k entries.
struct DecisionLayout {
    struct CoeffVar {
        int degree, row, col;
    };

    int outputs = 0, inputs = 0, degree = 0;
    std::vector<CoeffVar> x_vars;  // index order = decision order
    std::vector<CoeffVar> y_vars;
    int gamma_index = -1;
    int gamma_base = -1;  // first Gamma_k entry
    GammaVariables gamma_vars;

    int x_base() const { return 0; }
    int y_base() const { return int(x_vars.size()); }
    int xy_count() const { return int(x_vars.size() + y_vars.size()); }
    int gamma_block_size() const { return gamma_vars.dim * (gamma_vars.dim + 1) / 2; }
    int dim() const;

    // -1 when the entry is masked out or fixed
    int x_index(int degree, int row, int col) const;
    int y_index(int degree, int row, int col) const;
    int gamma_entry_index(int model, int freq, int row, int col) const;  // row <= col

    static DecisionLayout make(const ControllerParametrization& cp, const GammaVariables& gv);

    const ControllerParametrization& param() const { return param_; }

  private:
    ControllerParametrization param_;
    std::vector<int> x_lookup_, y_lookup_;
};

// Rebuild the controller from a decision vector (masked entries zero, leading
// Y coefficient identity, fixed factors attached from the parametrization).
Controller controller_from_decision(const DecisionLayout& layout, const Vector& x,
                                    const ControllerParametrization& cp);

// Inverse of controller_from_decision for the X/Y section; gamma entries are
// filled from `gamma` and `gammas` when the layout has them.
Vector decision_from_controller(const DecisionLayout& layout, const Controller& k,
                                double gamma = 0.0,
                                const std::vector<std::vector<Matrix>>* gammas = nullptr);

Matrix gamma_matrix_from_decision(const DecisionLayout& layout, const Vector& x, int model,
                                  int freq);

/// H = A + jB (Hermitian) -> [[A, -B], [B, A]]; positive definiteness is
/// preserved and every eigenvalue is duplicated.
Matrix hermitian_to_real(const CMatrix& H);

struct Triplet {
    int row = 0, col = 0;
    double value = 0.0;
};

struct RealLmiBlock {
    int size = 0;     // real dimension (2x the complex block dimension)
    Matrix constant;  // includes the -delta_feas * scale * I strictness shift
    std::vector<std::pair<int, std::vector<Triplet>>> coefficients;  // (var, full symmetric)
    BlockKind kind = BlockKind::DetY;
    int model_index = -1;
    int freq_index = 0;
};

/// min objective . x  subject to  constant_b + sum_i x_i F_{b,i} >= 0 per block.
struct RealLmiSystem {
    int dim = 0;
    Vector objective;
    std::vector<RealLmiBlock> blocks;
};

struct AssembleOptions {
    double delta_feas = 1e-8;  // strictness margin, scaled per block
};

RealLmiSystem assemble(const std::vector<ConstraintBlock>& blocks, const DecisionLayout& layout,
                       const Vector& objective, const AssembleOptions& options = {});

// Evaluate one assembled block at a decision vector (constant + sum x_i F_i).
Matrix eval_real_block(const RealLmiBlock& block, const Vector& x);

enum class SdpStatus { Optimal, Infeasible, NumericalFailure };

struct SdpSettings {
    double tolerance = 1e-8;
    int max_iterations = 100;
    bool verbose = false;
};

struct SdpSolution {
    SdpStatus status = SdpStatus::NumericalFailure;
    Vector x;
    double objective = 0.0;
    double worst_block_min_eig = 0.0;  // post-solve audit over all blocks
    int iterations = 0;
    std::string diagnostics;
};

/// Narrow backend contract: sparse symmetric coefficient matrices and a
/// linear objective in, status / primal point / objective out.
class SdpSolverBackend {
  public:
    virtual ~SdpSolverBackend() = default;
    virtual SdpSolution solve(const RealLmiSystem& system, const SdpSettings& settings) = 0;
};

// Built-in primal-dual interior-point backend (HKM search direction with
// Mehrotra predictor-corrector steps).
SdpSolverBackend& builtin_backend();

SdpSolution solve(const RealLmiSystem& system, const SdpSettings& settings = {});

// Sparse SDPA-format dump of the assembled system for external cross-checks.
void write_sdpa(std::ostream& os, const RealLmiSystem& system);
void write_sdpa_file(const std::string& path, const RealLmiSystem& system);

}  // namespace fdsyn
