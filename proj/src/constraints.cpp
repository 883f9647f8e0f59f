#include "fdsyn/constraints.hpp"

#include <cmath>

namespace fdsyn {

namespace {

// Force exact Hermitian symmetry; additions commute so B == B.adjoint()
// entry for entry afterwards.
CMatrix herm(const CMatrix& M) { return 0.5 * (M + M.adjoint()); }

}  // namespace

LinearizationPoint make_linearization(const FrequencyResponseSet& frs, const Controller& iterate) {
    iterate.validate();
    const auto& grid = frs.grid;
    LinearizationPoint lin;
    const int q = frs.model_count();
    lin.Pc.assign(q, {});
    lin.Yc.reserve(grid.size());
    lin.Xc.reserve(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const Complex pt = grid.point(k);
        lin.Xc.push_back(iterate.eval_X(pt));
        lin.Yc.push_back(iterate.eval_Y(pt));
        Eigen::FullPivLU<CMatrix> lu(lin.Yc.back());
        lu.setThreshold(1e-14);
        if (!lu.isInvertible()) {
            throw EvaluationError("iterate has det(Y_c) = 0 on the working grid");
        }
    }
    for (int i = 0; i < q; ++i) {
        lin.Pc[i].reserve(grid.size());
        for (std::size_t k = 0; k < grid.size(); ++k) {
            lin.Pc[i].push_back(lin.Yc[k] + frs.models[i][k] * lin.Xc[k]);
        }
    }
    return lin;
}

CMatrix linearize_quadratic(const CMatrix& P, const CMatrix& Pc) {
    return herm(P.adjoint() * Pc + Pc.adjoint() * P - Pc.adjoint() * Pc);
}

CMatrix ConstraintBlock::eval(const CMatrix& Xw, const CMatrix& Yw, double gamma,
                              const Matrix& Gamma) const {
    switch (kind) {
        case BlockKind::MixedSensHinf: {
            const int n = int(Yc.rows());
            const int m = int(G.cols());
            const CMatrix P = Yw + G * Xw;
            const CMatrix L11 = linearize_quadratic(P, Pc);
            const CMatrix B21 = W1 * Yw;  // n x n
            const CMatrix B31 = W2 * Xw;  // m x n
            CMatrix block = CMatrix::Zero(2 * n + m, 2 * n + m);
            block.topLeftCorner(n, n) = L11;
            block.block(n, 0, n, n) = B21;
            block.block(0, n, n, n) = B21.adjoint();
            block.block(2 * n, 0, m, n) = B31;
            block.block(0, 2 * n, n, m) = B31.adjoint();
            block.block(n, n, n, n) = gamma * CMatrix::Identity(n, n);
            block.block(2 * n, 2 * n, m, m) = gamma * CMatrix::Identity(m, m);
            return block;
        }
        case BlockKind::H2: {
            const int n = int(Yc.rows());
            const CMatrix P = Yw + G * Xw;
            const CMatrix B12 = W1 * Yw;
            CMatrix block = CMatrix::Zero(2 * n, 2 * n);
            block.topLeftCorner(n, n) = Gamma.cast<Complex>();
            block.block(0, n, n, n) = B12;
            block.block(n, 0, n, n) = B12.adjoint();
            block.bottomRightCorner(n, n) = linearize_quadratic(P, Pc);
            return block;
        }
        case BlockKind::LoopshapeHinf: {
            const int n = int(Yc.rows());
            const CMatrix M = G * Xw - Ld * Yw;
            CMatrix block = CMatrix::Zero(2 * n, 2 * n);
            block.topLeftCorner(n, n) = linearize_quadratic(Yw, Yc);
            block.block(0, n, n, n) = M.adjoint();
            block.block(n, 0, n, n) = M;
            block.bottomRightCorner(n, n) = gamma * CMatrix::Identity(n, n);
            return block;
        }
        case BlockKind::LoopshapeH2: {
            const int n = int(Yc.rows());
            const CMatrix M = G * Xw - Ld * Yw;
            CMatrix block = CMatrix::Zero(2 * n, 2 * n);
            block.topLeftCorner(n, n) = linearize_quadratic(Yw, Yc);
            block.block(0, n, n, n) = M.adjoint();
            block.block(n, 0, n, n) = M;
            block.bottomRightCorner(n, n) = Gamma.cast<Complex>();
            return block;
        }
        case BlockKind::Stability: {
            const CMatrix P = Yw + G * Xw;
            return herm(P.adjoint() * Pc + Pc.adjoint() * P);
        }
        case BlockKind::DetY: {
            return linearize_quadratic(Yw, Yc);
        }
        case BlockKind::RobustAdditive: {
            const int n = int(Yc.rows());
            const int m = int(G.cols());
            const CMatrix P = W1u_inv * (Yw + G * Xw);
            const CMatrix B21 = W2u * Xw;  // m x n
            CMatrix block = CMatrix::Zero(n + m, n + m);
            block.topLeftCorner(n, n) = linearize_quadratic(P, Pc);
            block.block(n, 0, m, n) = B21;
            block.block(0, n, n, m) = B21.adjoint();
            block.bottomRightCorner(m, m) = CMatrix::Identity(m, m);
            return block;
        }
    }
    throw InputError("unknown constraint block kind");
}

ConstraintBlock build_mixed_sens_block(const CMatrix& G, const CMatrix& W1, const CMatrix& W2,
                                       const CMatrix& Pc, Complex point, int model_index,
                                       int freq_index) {
    const int n = int(Pc.rows());
    const int m = int(G.cols());
    if (W1.rows() != n || W2.rows() != m) {
        throw InputError("mixed-sensitivity weight dimensions do not match plant/controller");
    }
    ConstraintBlock b;
    b.kind = BlockKind::MixedSensHinf;
    b.model_index = model_index;
    b.freq_index = freq_index;
    b.dim = 2 * n + m;
    b.point = point;
    b.G = G;
    b.Pc = Pc;
    b.Yc = CMatrix::Identity(n, n);  // only the output dimension is needed here
    b.W1 = W1;
    b.W2 = W2;
    return b;
}

ConstraintBlock build_h2_block(const CMatrix& G, const CMatrix& W1, const CMatrix& Pc,
                               Complex point, int model_index, int freq_index) {
    const int n = int(Pc.rows());
    if (W1.rows() != n) throw InputError("H2 weight dimension does not match plant outputs");
    ConstraintBlock b;
    b.kind = BlockKind::H2;
    b.model_index = model_index;
    b.freq_index = freq_index;
    b.dim = 2 * n;
    b.point = point;
    b.G = G;
    b.Pc = Pc;
    b.Yc = CMatrix::Identity(n, n);
    b.W1 = W1;
    return b;
}

ConstraintBlock build_loopshape_hinf_block(const CMatrix& G, const CMatrix& Ld, const CMatrix& Yc,
                                           Complex point, int model_index, int freq_index) {
    const int n = int(Yc.rows());
    if (Ld.rows() != n) throw InputError("loop-shaping target dimension mismatch");
    ConstraintBlock b;
    b.kind = BlockKind::LoopshapeHinf;
    b.model_index = model_index;
    b.freq_index = freq_index;
    b.dim = 2 * n;
    b.point = point;
    b.G = G;
    b.Yc = Yc;
    b.Ld = Ld;
    return b;
}

ConstraintBlock build_loopshape_h2_block(const CMatrix& G, const CMatrix& Ld, const CMatrix& Yc,
                                         Complex point, int model_index, int freq_index) {
    ConstraintBlock b = build_loopshape_hinf_block(G, Ld, Yc, point, model_index, freq_index);
    b.kind = BlockKind::LoopshapeH2;
    return b;
}

ConstraintBlock build_stability_block(const CMatrix& G, const CMatrix& Pc, Complex point,
                                      int model_index, int freq_index) {
    ConstraintBlock b;
    b.kind = BlockKind::Stability;
    b.model_index = model_index;
    b.freq_index = freq_index;
    b.dim = int(Pc.rows());
    b.point = point;
    b.G = G;
    b.Pc = Pc;
    b.Yc = CMatrix::Identity(Pc.rows(), Pc.cols());
    return b;
}

ConstraintBlock build_detY_block(const CMatrix& Yc, Complex point, int freq_index) {
    ConstraintBlock b;
    b.kind = BlockKind::DetY;
    b.model_index = -1;
    b.freq_index = freq_index;
    b.dim = int(Yc.rows());
    b.point = point;
    b.Yc = Yc;
    return b;
}

ConstraintBlock build_robust_additive_block(const CMatrix& G, const CMatrix& W1u,
                                            const CMatrix& W2u, const CMatrix& Pc, Complex point,
                                            int model_index, int freq_index) {
    const int n = int(Pc.rows());
    const int m = int(G.cols());
    if (W1u.rows() != n || W2u.rows() != m) {
        throw InputError("uncertainty filter dimensions do not match plant/controller");
    }
    Eigen::FullPivLU<CMatrix> lu(W1u);
    lu.setThreshold(1e-13);
    if (!lu.isInvertible()) {
        throw EvaluationError("uncertainty filter W1 is singular at a grid frequency");
    }
    ConstraintBlock b;
    b.kind = BlockKind::RobustAdditive;
    b.model_index = model_index;
    b.freq_index = freq_index;
    b.dim = n + m;
    b.point = point;
    b.G = G;
    b.W1u_inv = lu.inverse();
    b.W2u = W2u;
    b.Pc = b.W1u_inv * Pc;
    b.Yc = CMatrix::Identity(n, n);
    return b;
}

EvaluatedDesign evaluate_design(const DesignSpec& spec, const FrequencyGrid& grid, int outputs,
                                int inputs) {
    EvaluatedDesign ev;
    ev.objective = spec.objective;
    ev.certify_stability = spec.certify_stability;
    switch (spec.objective) {
        case Objective::MixedSensHinf:
            if (spec.W1.dim != outputs) throw InputError("W1 must be n x n");
            if (spec.W2.dim != inputs) throw InputError("W2 must be m x m");
            ev.W1 = evaluate_weight(spec.W1, grid);
            ev.W2 = evaluate_weight(spec.W2, grid);
            break;
        case Objective::H2:
            if (spec.W1.dim != outputs) throw InputError("W1 must be n x n");
            ev.W1 = evaluate_weight(spec.W1, grid);
            break;
        case Objective::LoopshapeHinf:
        case Objective::LoopshapeH2:
            if (spec.Ld.dim != outputs) throw InputError("L_d must be n x n");
            ev.Ld = evaluate_weight(spec.Ld, grid);
            break;
    }
    if (spec.W1_uncertainty.has_value() != spec.W2_uncertainty.has_value()) {
        throw InputError("additive uncertainty needs both W1 and W2 filters");
    }
    if (spec.W1_uncertainty) {
        if (spec.W1_uncertainty->dim != outputs) throw InputError("uncertainty W1 must be n x n");
        if (spec.W2_uncertainty->dim != inputs) throw InputError("uncertainty W2 must be m x m");
        ev.has_robust = true;
        ev.W1u_inv = evaluate_weight(*spec.W1_uncertainty, grid);  // inverted at block build
        ev.W2u = evaluate_weight(*spec.W2_uncertainty, grid);
    }
    return ev;
}

std::vector<ConstraintBlock> replicate_multimodel(const EvaluatedDesign& design,
                                                  const FrequencyResponseSet& frs,
                                                  const LinearizationPoint& lin) {
    frs.validate();
    const auto& grid = frs.grid;
    const int q = frs.model_count();
    std::vector<ConstraintBlock> blocks;
    blocks.reserve((q + 1) * grid.size() * 2);

    for (int i = 0; i < q; ++i) {
        for (std::size_t k = 0; k < grid.size(); ++k) {
            const Complex pt = grid.point(k);
            const CMatrix& G = frs.models[i][k];
            switch (design.objective) {
                case Objective::MixedSensHinf:
                    blocks.push_back(build_mixed_sens_block(G, design.W1[k], design.W2[k],
                                                            lin.Pc[i][k], pt, i, int(k)));
                    break;
                case Objective::H2:
                    blocks.push_back(
                        build_h2_block(G, design.W1[k], lin.Pc[i][k], pt, i, int(k)));
                    if (design.certify_stability) {
                        blocks.push_back(build_stability_block(G, lin.Pc[i][k], pt, i, int(k)));
                    }
                    break;
                case Objective::LoopshapeHinf:
                    blocks.push_back(
                        build_loopshape_hinf_block(G, design.Ld[k], lin.Yc[k], pt, i, int(k)));
                    if (design.certify_stability) {
                        blocks.push_back(build_stability_block(G, lin.Pc[i][k], pt, i, int(k)));
                    }
                    break;
                case Objective::LoopshapeH2:
                    blocks.push_back(
                        build_loopshape_h2_block(G, design.Ld[k], lin.Yc[k], pt, i, int(k)));
                    if (design.certify_stability) {
                        blocks.push_back(build_stability_block(G, lin.Pc[i][k], pt, i, int(k)));
                    }
                    break;
            }
            if (design.has_robust) {
                blocks.push_back(build_robust_additive_block(G, design.W1u_inv[k], design.W2u[k],
                                                             lin.Pc[i][k], pt, i, int(k)));
            }
        }
    }
    // det(Y) != 0 is model-independent; one block per frequency.  Loop-shaping
    // blocks already carry the linearized Y*Y corner, so they skip it.
    const bool needs_dety = design.objective == Objective::MixedSensHinf ||
                            design.objective == Objective::H2 || design.has_robust;
    if (needs_dety) {
        for (std::size_t k = 0; k < grid.size(); ++k) {
            blocks.push_back(build_detY_block(lin.Yc[k], grid.point(k), int(k)));
        }
    }
    return blocks;
}

GammaVariables gamma_variables_for(Objective objective, int outputs, int models, int frequencies) {
    GammaVariables gv;
    if (objective == Objective::H2 || objective == Objective::LoopshapeH2) {
        gv.mode = GammaVariables::Mode::PerFrequencyTrace;
        gv.dim = outputs;
        gv.models = models;
        gv.frequencies = frequencies;
    } else {
        gv.mode = GammaVariables::Mode::ScalarGamma;
    }
    return gv;
}

}  // namespace fdsyn
