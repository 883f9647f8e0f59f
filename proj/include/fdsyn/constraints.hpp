#pragma once

#include <optional>
#include <vector>

#include "fdsyn/controller.hpp"

namespace fdsyn {

enum class Objective { MixedSensHinf, H2, LoopshapeHinf, LoopshapeH2 };

/// What to optimize and against which weights.  Uncertainty filters, when
/// present, add the additive robust-stability constraint to any objective.
struct DesignSpec {
    Objective objective = Objective::MixedSensHinf;
    WeightSpec W1 = WeightSpec::constant(1.0, 1);
    WeightSpec W2 = WeightSpec::constant(0.0, 1);
    WeightSpec Ld = WeightSpec::constant(1.0, 1);
    std::optional<WeightSpec> W1_uncertainty;
    std::optional<WeightSpec> W2_uncertainty;
    bool certify_stability = true;  // emit the stability LMI for loop-shaping / H2
};

/// Per-frequency matrix variables bounding the H2 integrand, or a single
/// shared gamma for the infinity-norm problems.
struct GammaVariables {
    enum class Mode { ScalarGamma, PerFrequencyTrace };
    Mode mode = Mode::ScalarGamma;
    int dim = 0;     // n, for PerFrequencyTrace
    int models = 0;  // q
    int frequencies = 0;
};

/// P_c = Y_c + G_i X_c per model and frequency, rebuilt at every iteration.
struct LinearizationPoint {
    std::vector<std::vector<CMatrix>> Pc;  // [q][N]
    std::vector<CMatrix> Yc;               // [N] composite Y_c evaluation
    std::vector<CMatrix> Xc;               // [N] composite X_c evaluation
};

LinearizationPoint make_linearization(const FrequencyResponseSet& frs, const Controller& iterate);

// P*Pc + Pc*P - Pc*Pc, symmetrized; exact quadratic value at P = Pc and a
// lower bound on P*P everywhere else.
CMatrix linearize_quadratic(const CMatrix& P, const CMatrix& Pc);

enum class BlockKind {
    MixedSensHinf,
    H2,
    LoopshapeHinf,
    LoopshapeH2,
    Stability,
    DetY,
    RobustAdditive,
};

/// One Hermitian affine form, required positive definite.  Holds copies of
/// every frequency-domain matrix it needs, so blocks are self-contained
/// values that can be evaluated from any thread.
struct ConstraintBlock {
    BlockKind kind = BlockKind::DetY;
    int model_index = -1;  // -1 for model-independent blocks
    int freq_index = 0;
    int dim = 0;  // complex dimension of the assembled form

    Complex point;               // jw or e^{jwTs}
    CMatrix G;                   // n x m
    CMatrix Pc;                  // linearization matrix (robust blocks store W1u^{-1} Pc)
    CMatrix Yc;                  // composite Y_c evaluation
    CMatrix W1, W2, Ld, W1u_inv, W2u;

    bool uses_x() const { return kind != BlockKind::DetY; }
    bool uses_gamma() const {
        return kind == BlockKind::MixedSensHinf || kind == BlockKind::LoopshapeHinf;
    }
    bool uses_gamma_matrix() const {
        return kind == BlockKind::H2 || kind == BlockKind::LoopshapeH2;
    }

    // Evaluate the Hermitian form at evaluated decision values Xw, Yw
    // (composite, i.e. fixed factors already folded in), gamma and Gamma_k.
    CMatrix eval(const CMatrix& Xw, const CMatrix& Yw, double gamma, const Matrix& Gamma) const;
};

ConstraintBlock build_mixed_sens_block(const CMatrix& G, const CMatrix& W1, const CMatrix& W2,
                                       const CMatrix& Pc, Complex point, int model_index,
                                       int freq_index);
ConstraintBlock build_h2_block(const CMatrix& G, const CMatrix& W1, const CMatrix& Pc,
                               Complex point, int model_index, int freq_index);
ConstraintBlock build_loopshape_hinf_block(const CMatrix& G, const CMatrix& Ld, const CMatrix& Yc,
                                           Complex point, int model_index, int freq_index);
ConstraintBlock build_loopshape_h2_block(const CMatrix& G, const CMatrix& Ld, const CMatrix& Yc,
                                         Complex point, int model_index, int freq_index);
ConstraintBlock build_stability_block(const CMatrix& G, const CMatrix& Pc, Complex point,
                                      int model_index, int freq_index);
ConstraintBlock build_detY_block(const CMatrix& Yc, Complex point, int freq_index);
ConstraintBlock build_robust_additive_block(const CMatrix& G, const CMatrix& W1u,
                                            const CMatrix& W2u, const CMatrix& Pc, Complex point,
                                            int model_index, int freq_index);

/// Design weights evaluated on the working grid.
struct EvaluatedDesign {
    Objective objective;
    bool certify_stability = true;
    bool has_robust = false;
    std::vector<CMatrix> W1, W2, Ld;       // only the ones the objective needs
    std::vector<CMatrix> W1u_inv, W2u;     // robust filters, W1u inverted
};

EvaluatedDesign evaluate_design(const DesignSpec& spec, const FrequencyGrid& grid, int outputs,
                                int inputs);

// All per-frequency blocks for every model, ordered by model then frequency;
// the model-independent det(Y) blocks follow at the end.
std::vector<ConstraintBlock> replicate_multimodel(const EvaluatedDesign& design,
                                                  const FrequencyResponseSet& frs,
                                                  const LinearizationPoint& lin);

GammaVariables gamma_variables_for(Objective objective, int outputs, int models, int frequencies);

}  // namespace fdsyn
