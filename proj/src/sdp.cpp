#include "fdsyn/sdp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace fdsyn {

int DecisionLayout::dim() const {
    int d = xy_count();
    if (gamma_vars.mode == GammaVariables::Mode::ScalarGamma) {
        d += 1;
    } else {
        d += gamma_vars.models * gamma_vars.frequencies * gamma_block_size();
    }
    return d;
}

int DecisionLayout::x_index(int degree_, int row, int col) const {
    const int idx = (degree_ * inputs + row) * outputs + col;
    return x_lookup_[idx];
}

int DecisionLayout::y_index(int degree_, int row, int col) const {
    const int idx = (degree_ * outputs + row) * outputs + col;
    return y_lookup_[idx];
}

int DecisionLayout::gamma_entry_index(int model, int freq, int row, int col) const {
    if (gamma_base < 0 || row > col) return -1;
    const int n = gamma_vars.dim;
    // upper-triangle offset in row-major order
    const int offset = row * n - row * (row - 1) / 2 + (col - row);
    return gamma_base + (model * gamma_vars.frequencies + freq) * gamma_block_size() + offset;
}

DecisionLayout DecisionLayout::make(const ControllerParametrization& cp,
                                    const GammaVariables& gv) {
    cp.validate();
    DecisionLayout layout;
    layout.param_ = cp;
    layout.outputs = cp.outputs;
    layout.inputs = cp.inputs;
    layout.degree = cp.degree;
    layout.gamma_vars = gv;

    layout.x_lookup_.assign((cp.degree + 1) * cp.inputs * cp.outputs, -1);
    layout.y_lookup_.assign(cp.degree * cp.outputs * cp.outputs, -1);
    int next = 0;
    for (int d = 0; d <= cp.degree; ++d) {
        for (int r = 0; r < cp.inputs; ++r) {
            for (int c = 0; c < cp.outputs; ++c) {
                if (cp.mask_X(r, c)) {
                    layout.x_lookup_[(d * cp.inputs + r) * cp.outputs + c] = next++;
                    layout.x_vars.push_back({d, r, c});
                }
            }
        }
    }
    for (int d = 0; d < cp.degree; ++d) {  // leading coefficient fixed to I
        for (int r = 0; r < cp.outputs; ++r) {
            for (int c = 0; c < cp.outputs; ++c) {
                if (cp.mask_Y(r, c)) {
                    layout.y_lookup_[(d * cp.outputs + r) * cp.outputs + c] = next++;
                    layout.y_vars.push_back({d, r, c});
                }
            }
        }
    }
    if (gv.mode == GammaVariables::Mode::ScalarGamma) {
        layout.gamma_index = next++;
    } else {
        layout.gamma_base = next;
    }
    return layout;
}

Controller controller_from_decision(const DecisionLayout& layout, const Vector& x,
                                    const ControllerParametrization& cp) {
    Controller k;
    k.X.variable = cp.variable;
    k.Y.variable = cp.variable;
    k.X.coeffs.assign(cp.degree + 1, Matrix::Zero(cp.inputs, cp.outputs));
    k.Y.coeffs.assign(cp.degree + 1, Matrix::Zero(cp.outputs, cp.outputs));
    k.Y.coeffs.back() = Matrix::Identity(cp.outputs, cp.outputs);
    for (std::size_t i = 0; i < layout.x_vars.size(); ++i) {
        const auto& v = layout.x_vars[i];
        k.X.coeffs[v.degree](v.row, v.col) = x[layout.x_base() + int(i)];
    }
    for (std::size_t i = 0; i < layout.y_vars.size(); ++i) {
        const auto& v = layout.y_vars[i];
        k.Y.coeffs[v.degree](v.row, v.col) = x[layout.y_base() + int(i)];
    }
    k.Fx = cp.Fx;
    k.Fy = cp.Fy;
    return k;
}

Vector decision_from_controller(const DecisionLayout& layout, const Controller& k, double gamma,
                                const std::vector<std::vector<Matrix>>* gammas) {
    Vector x = Vector::Zero(layout.dim());
    for (std::size_t i = 0; i < layout.x_vars.size(); ++i) {
        const auto& v = layout.x_vars[i];
        x[layout.x_base() + int(i)] = k.X.coeffs[v.degree](v.row, v.col);
    }
    for (std::size_t i = 0; i < layout.y_vars.size(); ++i) {
        const auto& v = layout.y_vars[i];
        x[layout.y_base() + int(i)] = k.Y.coeffs[v.degree](v.row, v.col);
    }
    if (layout.gamma_index >= 0) x[layout.gamma_index] = gamma;
    if (layout.gamma_base >= 0 && gammas) {
        const int n = layout.gamma_vars.dim;
        for (int i = 0; i < layout.gamma_vars.models; ++i) {
            for (int f = 0; f < layout.gamma_vars.frequencies; ++f) {
                const Matrix& g = (*gammas)[i][f];
                for (int r = 0; r < n; ++r) {
                    for (int c = r; c < n; ++c) {
                        x[layout.gamma_entry_index(i, f, r, c)] = g(r, c);
                    }
                }
            }
        }
    }
    return x;
}

Matrix gamma_matrix_from_decision(const DecisionLayout& layout, const Vector& x, int model,
                                  int freq) {
    const int n = layout.gamma_vars.dim;
    Matrix g = Matrix::Zero(n, n);
    for (int r = 0; r < n; ++r) {
        for (int c = r; c < n; ++c) {
            const double v = x[layout.gamma_entry_index(model, freq, r, c)];
            g(r, c) = v;
            g(c, r) = v;
        }
    }
    return g;
}

Matrix hermitian_to_real(const CMatrix& H) {
    const int d = int(H.rows());
    if (H.cols() != d) throw InputError("hermitian_to_real needs a square matrix");
    const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
    if ((H - H.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
        throw InputError("hermitian_to_real: input is not Hermitian");
    }
    Matrix out(2 * d, 2 * d);
    const Matrix A = H.real();
    const Matrix B = H.imag();
    out.topLeftCorner(d, d) = A;
    out.topRightCorner(d, d) = -B;
    out.bottomLeftCorner(d, d) = B;
    out.bottomRightCorner(d, d) = A;
    return out;
}

namespace {

// Real-embedding triplets of a Hermitian matrix, exact zeros skipped.
void append_embedded_triplets(const CMatrix& H, std::vector<Triplet>& out) {
    const int d = int(H.rows());
    for (int c = 0; c < d; ++c) {
        for (int r = 0; r < d; ++r) {
            const double a = H(r, c).real();
            const double b = H(r, c).imag();
            if (a != 0.0) {
                out.push_back({r, c, a});
                out.push_back({r + d, c + d, a});
            }
            if (b != 0.0) {
                out.push_back({r, c + d, -b});
                out.push_back({r + d, c, b});
            }
        }
    }
}

}  // namespace

RealLmiSystem assemble(const std::vector<ConstraintBlock>& blocks, const DecisionLayout& layout,
                       const Vector& objective, const AssembleOptions& options) {
    if (objective.size() != layout.dim()) {
        throw InputError("objective size does not match decision layout");
    }
    RealLmiSystem sys;
    sys.dim = layout.dim();
    sys.objective = objective;
    sys.blocks.reserve(blocks.size());

    const int n = layout.outputs;
    const int m = layout.inputs;
    const int p = layout.degree;
    const CMatrix zero_x = CMatrix::Zero(m, n);
    const Matrix zero_gamma =
        Matrix::Zero(std::max(1, layout.gamma_vars.dim), std::max(1, layout.gamma_vars.dim));

    // Fixed factors evaluated per distinct frequency point, cached by index.
    std::vector<char> have(1, 0);
    std::vector<CMatrix> fx_cache, fy_cache;
    std::vector<Complex> powers;  // powers[k*(p+1) + d] = point^d

    auto ensure_freq = [&](int k, Complex pt, const ControllerParametrization& cp) {
        if (int(have.size()) <= k) have.resize(k + 1, 0);
        if (int(fx_cache.size()) <= k) {
            fx_cache.resize(k + 1);
            fy_cache.resize(k + 1);
            powers.resize(std::size_t(k + 1) * (p + 1));
        }
        if (!have[k]) {
            fx_cache[k] = cp.Fx.eval(pt);
            fy_cache[k] = cp.Fy.eval(pt);
            Complex acc(1.0, 0.0);
            for (int d = 0; d <= p; ++d) {
                powers[std::size_t(k) * (p + 1) + d] = acc;
                acc *= pt;
            }
            have[k] = 1;
        }
    };

    for (const auto& cb : blocks) {
        ensure_freq(cb.freq_index, cb.point, layout.param());

        const int k = cb.freq_index;
        const CMatrix& fx = fx_cache[k];
        const CMatrix& fy = fy_cache[k];
        const Complex pow_p = powers[std::size_t(k) * (p + 1) + p];

        // Constant part of the Y evaluation: leading I z^p times Fy.
        CMatrix y0 = CMatrix::Zero(n, n);
        for (int i = 0; i < n; ++i) y0(i, i) = pow_p * fy(i, i);

        const CMatrix F0 = cb.eval(zero_x, y0, 0.0, zero_gamma);

        RealLmiBlock rb;
        rb.kind = cb.kind;
        rb.model_index = cb.model_index;
        rb.freq_index = cb.freq_index;
        rb.size = 2 * cb.dim;
        rb.constant = hermitian_to_real(F0);
        const double scale = std::max(1.0, F0.cwiseAbs().maxCoeff());
        rb.constant -= options.delta_feas * scale * Matrix::Identity(rb.size, rb.size);

        auto push_var = [&](int var, const CMatrix& coeff) {
            std::vector<Triplet> trips;
            append_embedded_triplets(coeff, trips);
            if (!trips.empty()) rb.coefficients.emplace_back(var, std::move(trips));
        };

        if (cb.uses_x()) {
            for (std::size_t i = 0; i < layout.x_vars.size(); ++i) {
                const auto& v = layout.x_vars[i];
                CMatrix dx = CMatrix::Zero(m, n);
                dx(v.row, v.col) = powers[std::size_t(k) * (p + 1) + v.degree] * fx(v.row, v.col);
                push_var(layout.x_base() + int(i),
                         cb.eval(dx, y0, 0.0, zero_gamma) - F0);
            }
        }
        for (std::size_t i = 0; i < layout.y_vars.size(); ++i) {
            const auto& v = layout.y_vars[i];
            CMatrix dy = y0;
            dy(v.row, v.col) += powers[std::size_t(k) * (p + 1) + v.degree] * fy(v.row, v.col);
            push_var(layout.y_base() + int(i), cb.eval(zero_x, dy, 0.0, zero_gamma) - F0);
        }
        if (cb.uses_gamma() && layout.gamma_index >= 0) {
            push_var(layout.gamma_index, cb.eval(zero_x, y0, 1.0, zero_gamma) - F0);
        }
        if (cb.uses_gamma_matrix() && layout.gamma_base >= 0) {
            const int gn = layout.gamma_vars.dim;
            for (int r = 0; r < gn; ++r) {
                for (int c = r; c < gn; ++c) {
                    Matrix dg = Matrix::Zero(gn, gn);
                    dg(r, c) = 1.0;
                    dg(c, r) = 1.0;
                    push_var(layout.gamma_entry_index(std::max(cb.model_index, 0), cb.freq_index,
                                                      r, c),
                             cb.eval(zero_x, y0, 0.0, dg) - F0);
                }
            }
        }
        sys.blocks.push_back(std::move(rb));
    }
    return sys;
}

Matrix eval_real_block(const RealLmiBlock& block, const Vector& x) {
    Matrix out = block.constant;
    for (const auto& [var, trips] : block.coefficients) {
        const double v = x[var];
        if (v == 0.0) continue;
        for (const auto& t : trips) out(t.row, t.col) += v * t.value;
    }
    return out;
}

void write_sdpa(std::ostream& os, const RealLmiSystem& sys) {
    char buf[40];
    auto fmt = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    os << sys.dim << "\n" << sys.blocks.size() << "\n";
    for (std::size_t b = 0; b < sys.blocks.size(); ++b) {
        os << (b ? " " : "") << sys.blocks[b].size;
    }
    os << "\n";
    for (int i = 0; i < sys.dim; ++i) {
        os << (i ? " " : "") << fmt(-sys.objective[i]);  // SDPA maximizes c'y in this form
    }
    os << "\n";
    // SDPA convention: F(y) = sum y_i F_i - F_0 >= 0, so F_0 = -constant.
    for (std::size_t b = 0; b < sys.blocks.size(); ++b) {
        const auto& blk = sys.blocks[b];
        for (int r = 0; r < blk.size; ++r) {
            for (int c = r; c < blk.size; ++c) {
                if (blk.constant(r, c) != 0.0) {
                    os << "0 " << b + 1 << ' ' << r + 1 << ' ' << c + 1 << ' '
                       << fmt(-blk.constant(r, c)) << "\n";
                }
            }
        }
        for (const auto& [var, trips] : blk.coefficients) {
            for (const auto& t : trips) {
                if (t.row <= t.col) {
                    os << var + 1 << ' ' << b + 1 << ' ' << t.row + 1 << ' ' << t.col + 1 << ' '
                       << fmt(t.value) << "\n";
                }
            }
        }
    }
}

void write_sdpa_file(const std::string& path, const RealLmiSystem& sys) {
    std::ofstream os(path);
    if (!os) throw InputError("cannot open " + path + " for writing");
    write_sdpa(os, sys);
}

// ---------------------------------------------------------------------------
// Built-in interior-point backend
// ---------------------------------------------------------------------------

namespace {

double sparse_dot(const std::vector<Triplet>& trips, const Matrix& M) {
    double acc = 0.0;
    for (const auto& t : trips) acc += t.value * M(t.col, t.row);
    return acc;
}

void scatter_add(Matrix& M, const std::vector<Triplet>& trips, double v) {
    for (const auto& t : trips) M(t.row, t.col) += v * t.value;
}

struct ScaledVar {
    int var = 0;  // global index
    std::vector<Triplet> trips;
    double norm = 0.0;
};

struct BlockState {
    int bs = 0;
    Matrix F0;
    std::vector<ScaledVar> vars;
    Matrix X, Z;            // iterates
    Matrix G, Gi;           // NT scaling factor: W = G G^T, Gi = G^{-1}
    Vector sig;             // scaled iterate D = diag(sig) (singular values of Lz^T Lx)
    Matrix Rd, Rdh;         // dual residual and its scaled image
    Matrix Fh;              // bs x (bs*nl): scaled coefficients G^T F_j G stacked
    Matrix dXh, dZh;        // scaled directions (corrector)
    Matrix dXha, dZha;      // scaled directions (predictor)
    Matrix dX, dZ;          // unscaled directions
};

// Largest step with S + alpha * dS staying PSD.
double max_step(const Matrix& S, const Matrix& dS) {
    Eigen::LLT<Matrix> llt(S);
    if (llt.info() != Eigen::Success) return 0.0;
    const Matrix L = llt.matrixL();
    Matrix W = L.triangularView<Eigen::Lower>().solve(dS);
    W = L.triangularView<Eigen::Lower>().solve(W.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (W + W.transpose()),
                                              Eigen::EigenvaluesOnly);
    const double lmin = eig.eigenvalues().minCoeff();
    if (lmin >= 0.0) return std::numeric_limits<double>::infinity();
    return -1.0 / lmin;
}

// Largest step with diag(sig) + alpha * dS staying PSD.
double max_step_diag(const Vector& sig, const Matrix& dS) {
    const Vector isq = sig.cwiseSqrt().cwiseInverse();
    const Matrix W = isq.asDiagonal() * dS * isq.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (W + W.transpose()),
                                              Eigen::EigenvaluesOnly);
    const double lmin = eig.eigenvalues().minCoeff();
    if (lmin >= 0.0) return std::numeric_limits<double>::infinity();
    return -1.0 / lmin;
}

bool chol_ok(const Matrix& S) { return Eigen::LLT<Matrix>(S).info() == Eigen::Success; }

class BuiltinBackend final : public SdpSolverBackend {
  public:
    SdpSolution solve(const RealLmiSystem& system, const SdpSettings& settings) override;
};

// Nesterov-Todd predictor-corrector on the block-diagonal LMI system
// min c.x subject to F0_b + sum_i x_i F_{b,i} >= 0.  The multiplier X and
// slack Z share one scaled iterate D = G^{-1} X G^{-T} = G^T Z G, which the
// scaling-point construction makes diagonal, so the linearized
// complementarity is an elementwise Lyapunov solve and the Schur complement
// is the Gram matrix of the scaled coefficients.
SdpSolution BuiltinBackend::solve(const RealLmiSystem& sys, const SdpSettings& settings) {
    SdpSolution sol;
    const int dim = sys.dim;
    if (dim == 0 || sys.blocks.empty()) {
        sol.status = SdpStatus::NumericalFailure;
        sol.diagnostics = "empty problem";
        return sol;
    }

    // Variable equilibration: divide each coefficient matrix family by its
    // largest Frobenius norm across blocks, so powers of omega in the
    // polynomial basis do not wreck the Schur complement conditioning.
    Vector var_scale = Vector::Zero(dim);
    for (const auto& blk : sys.blocks) {
        for (const auto& [var, trips] : blk.coefficients) {
            double fro = 0.0;
            for (const auto& t : trips) fro += t.value * t.value;
            var_scale[var] = std::max(var_scale[var], std::sqrt(fro));
        }
    }
    for (int i = 0; i < dim; ++i) {
        if (var_scale[i] <= 0.0) var_scale[i] = 1.0;
    }

    std::vector<BlockState> blocks(sys.blocks.size());
    double total_bs = 0.0;
    int max_bs = 0, max_nl = 0;
    for (std::size_t b = 0; b < sys.blocks.size(); ++b) {
        const auto& src = sys.blocks[b];
        auto& st = blocks[b];
        st.bs = src.size;
        total_bs += src.size;
        max_bs = std::max(max_bs, st.bs);
        max_nl = std::max(max_nl, int(src.coefficients.size()));
        st.vars.reserve(src.coefficients.size());
        double block_scale = std::max(1.0, src.constant.norm());
        for (const auto& [var, trips] : src.coefficients) {
            double fro = 0.0;
            for (const auto& t : trips) fro += t.value * t.value;
            block_scale = std::max(block_scale, std::sqrt(fro) / var_scale[var]);
        }
        st.F0 = src.constant / block_scale;
        for (const auto& [var, trips] : src.coefficients) {
            ScaledVar sv;
            sv.var = var;
            sv.trips = trips;
            const double f = 1.0 / (var_scale[var] * block_scale);
            double fro = 0.0;
            for (auto& t : sv.trips) {
                t.value *= f;
                fro += t.value * t.value;
            }
            sv.norm = std::sqrt(fro);
            st.vars.push_back(std::move(sv));
        }
    }

    Vector c = sys.objective;
    for (int i = 0; i < dim; ++i) c[i] /= var_scale[i];
    const double c_norm = std::max(1.0, c.norm());

    double f0_norm = 0.0;
    for (auto& st : blocks) f0_norm = std::max(f0_norm, st.F0.norm());

    const double xi = 10.0;
    Vector x = Vector::Zero(dim);
    for (auto& st : blocks) {
        const double s = std::max(xi, std::sqrt(double(st.bs)));
        st.X = s * Matrix::Identity(st.bs, st.bs);
        st.Z = s * Matrix::Identity(st.bs, st.bs);
    }

    Matrix M(dim, dim);
    Vector ax(dim), rhs(dim), dx(dim), dxa(dim), gvec(dim);
    int tiny_steps = 0;

    // Rounding in the scaling products bounds the attainable accuracy, so
    // remember the best iterate and stop once no progress is being made.
    double best_err = std::numeric_limits<double>::infinity();
    Vector best_x = x;
    int best_iter = 0;
    int stall_count = 0;

    for (int iter = 1; iter <= settings.max_iterations; ++iter) {
        // Residuals and duality measures.
        ax.setZero();
        double mu = 0.0;
        double rd_norm = 0.0;
        double dual_obj = 0.0;
        double trX = 0.0;
        for (auto& st : blocks) {
            st.Rd = st.F0;
            for (const auto& sv : st.vars) {
                scatter_add(st.Rd, sv.trips, x[sv.var]);
                ax[sv.var] += sparse_dot(sv.trips, st.X);
            }
            st.Rd -= st.Z;
            rd_norm = std::max(rd_norm, st.Rd.norm());
            mu += st.X.cwiseProduct(st.Z).sum();
            dual_obj -= st.F0.cwiseProduct(st.X).sum();
            trX += st.X.trace();
        }
        mu /= total_bs;

        const double primal_obj = c.dot(x);
        const double gap = primal_obj - dual_obj;
        const double rel_gap = std::abs(gap) / (1.0 + std::abs(primal_obj) + std::abs(dual_obj));
        const double rel_rp = (c - ax).norm() / c_norm;
        const double rel_rd = rd_norm / (1.0 + f0_norm);

        if (settings.verbose) {
            std::fprintf(stderr, "ipm %3d  mu %9.2e  gap %9.2e  rp %9.2e  rd %9.2e\n", iter, mu,
                         rel_gap, rel_rp, rel_rd);
        }

        const double err = std::max({rel_gap, rel_rp, rel_rd});
        if (err < best_err) {
            best_err = err;
            best_x = x;
            best_iter = iter - 1;
            stall_count = 0;
        } else {
            ++stall_count;
        }

        if (err <= settings.tolerance) {
            sol.status = SdpStatus::Optimal;
            sol.iterations = iter - 1;
            break;
        }
        // No progress for a while: accept a near-optimal point rather than
        // oscillating at the numerical accuracy floor.
        if (stall_count >= 12 || (iter == settings.max_iterations && best_iter > 0)) {
            if (best_err <= 30.0 * settings.tolerance) {
                x = best_x;
                sol.status = SdpStatus::Optimal;
                sol.iterations = best_iter;
                char buf[96];
                std::snprintf(buf, sizeof(buf), "stopped at accuracy %.2e (target %.2e)",
                              best_err, settings.tolerance);
                sol.diagnostics = buf;
                break;
            }
            if (stall_count >= 12) {
                sol.status = SdpStatus::NumericalFailure;
                sol.iterations = iter - 1;
                char buf[96];
                std::snprintf(buf, sizeof(buf), "stalled at accuracy %.2e (target %.2e)",
                              best_err, settings.tolerance);
                sol.diagnostics = buf;
                break;
            }
        }

        // Primal ray => no x with F(x) >= 0: A(X) ~ 0, <F0, X> < 0, X >= 0.
        if (trX > 1e6 * xi * total_bs) {
            const double ray_obj = -dual_obj / trX;
            const double ray_feas = ax.norm() / trX;
            if (ray_obj < -1e-9 && ray_feas < 1e-7) {
                sol.status = SdpStatus::Infeasible;
                sol.iterations = iter - 1;
                sol.diagnostics = "primal improving ray found";
                break;
            }
            if (trX > 1e10 * xi * total_bs) {
                sol.status = SdpStatus::NumericalFailure;
                sol.iterations = iter - 1;
                sol.diagnostics = "multiplier iterate diverged";
                break;
            }
        }

        // NT scaling point per block and the Schur complement
        // M_ij = sum_b <G^T F_i G, G^T F_j G>.
        M.setZero();
        gvec.setZero();
        bool factor_ok = true;
        for (auto& st : blocks) {
            Eigen::LLT<Matrix> lltx(st.X), lltz(st.Z);
            if (lltx.info() != Eigen::Success || lltz.info() != Eigen::Success) {
                factor_ok = false;
                break;
            }
            const Matrix Lx = lltx.matrixL();
            const Matrix Lz = lltz.matrixL();
            Eigen::JacobiSVD<Matrix> svd(Lz.transpose() * Lx,
                                         Eigen::ComputeFullU | Eigen::ComputeFullV);
            st.sig = svd.singularValues();
            const double sig_floor = 1e-150;
            for (int i = 0; i < st.sig.size(); ++i) st.sig[i] = std::max(st.sig[i], sig_floor);
            const Vector isq = st.sig.cwiseSqrt().cwiseInverse();
            st.G.noalias() = Lx * svd.matrixV() * isq.asDiagonal();
            st.Gi.noalias() = isq.asDiagonal() * svd.matrixU().transpose() * Lz.transpose();

            const int bs = st.bs;
            const int nl = int(st.vars.size());
            st.Rdh.noalias() = st.G.transpose() * st.Rd * st.G;
            if (nl == 0) continue;
            st.Fh.resize(bs, bs * nl);
            Matrix tmp(bs, bs);
            for (int j = 0; j < nl; ++j) {
                tmp.setZero();
                // tmp = F_j * G, rows scattered from the triplets
                for (const auto& t : st.vars[j].trips) tmp.row(t.row) += t.value * st.G.row(t.col);
                st.Fh.middleCols(j * bs, bs).noalias() = st.G.transpose() * tmp;
            }
            // Gram matrix of the scaled coefficients.
            Eigen::Map<const Matrix> V(st.Fh.data(), bs * bs, nl);
            Matrix Mlocal = V.transpose() * V;
            for (int i = 0; i < nl; ++i) {
                const int gi = st.vars[i].var;
                for (int j = 0; j < nl; ++j) M(st.vars[j].var, gi) += Mlocal(j, i);
            }
        }
        if (!factor_ok) {
            sol.status = SdpStatus::NumericalFailure;
            sol.iterations = iter;
            sol.diagnostics = "iterate lost positive definiteness";
            break;
        }
        M = 0.5 * (M + M.transpose());

        Eigen::LLT<Matrix> mllt(M);
        double ridge = 0.0;
        while (mllt.info() != Eigen::Success && ridge < 1e-4) {
            ridge = (ridge == 0.0) ? 1e-12 * (1.0 + M.diagonal().maxCoeff()) : ridge * 100.0;
            mllt.compute(M + ridge * Matrix::Identity(dim, dim));
        }
        if (mllt.info() != Eigen::Success) {
            sol.status = SdpStatus::NumericalFailure;
            sol.iterations = iter;
            sol.diagnostics = "Schur complement factorization failed";
            break;
        }

        // Scaled-space Newton step: with D = diag(sig),
        //   L_D(dXh + dZh) = Rc,  <Fh_i, dXh> = rp_i,  dZh = Rdh + sum dx_j Fh_j,
        // where L_D(M) = (D M + M D)/2 and Rc is the complementarity target.
        auto lyap_inv = [](const Vector& sig, const Matrix& R) {
            Matrix out(R.rows(), R.cols());
            for (int a = 0; a < R.rows(); ++a) {
                for (int b2 = 0; b2 < R.cols(); ++b2) {
                    out(a, b2) = 2.0 * R(a, b2) / (sig[a] + sig[b2]);
                }
            }
            return out;
        };

        auto solve_direction = [&](double sigma_mu, bool corrector, Vector& dx_out,
                                   bool predictor_store) {
            rhs = -(c - ax);  // -rp
            for (auto& st : blocks) {
                const int nl = int(st.vars.size());
                if (nl == 0) continue;
                Matrix Rc = Matrix((-st.sig.cwiseProduct(st.sig)).asDiagonal());
                if (sigma_mu > 0.0) Rc += sigma_mu * Matrix::Identity(st.bs, st.bs);
                if (corrector) {
                    const Matrix cross = st.dXha * st.dZha;
                    Rc -= 0.5 * (cross + cross.transpose());
                }
                const Matrix T = lyap_inv(st.sig, Rc) - st.Rdh;
                Eigen::Map<const Vector> tv(T.data(), st.bs * st.bs);
                Eigen::Map<const Matrix> V(st.Fh.data(), st.bs * st.bs, nl);
                const Vector contrib = V.transpose() * tv;
                for (int i = 0; i < nl; ++i) rhs[st.vars[i].var] += contrib[i];
            }
            dx_out = mllt.solve(rhs);
            dx_out += mllt.solve(rhs - M * dx_out);  // one refinement step
            for (auto& st : blocks) {
                const int nl = int(st.vars.size());
                Matrix dZh = st.Rdh;
                Matrix Rc = Matrix((-st.sig.cwiseProduct(st.sig)).asDiagonal());
                if (sigma_mu > 0.0) Rc += sigma_mu * Matrix::Identity(st.bs, st.bs);
                if (corrector) {
                    const Matrix cross = st.dXha * st.dZha;
                    Rc -= 0.5 * (cross + cross.transpose());
                }
                for (int j = 0; j < nl; ++j) {
                    dZh.noalias() += dx_out[st.vars[j].var] * st.Fh.middleCols(j * st.bs, st.bs);
                }
                const Matrix dXh = lyap_inv(st.sig, Rc) - dZh;
                if (predictor_store) {
                    st.dXha = dXh;
                    st.dZha = dZh;
                } else {
                    st.dXh = dXh;
                    st.dZh = dZh;
                }
            }
        };

        // Predictor (sigma = 0).
        solve_direction(0.0, false, dxa, true);
        double ap = std::numeric_limits<double>::infinity();
        double ad = std::numeric_limits<double>::infinity();
        for (auto& st : blocks) {
            ap = std::min(ap, max_step_diag(st.sig, st.dXha));
            ad = std::min(ad, max_step_diag(st.sig, st.dZha));
        }
        const double ap_aff = std::min(1.0, ap);
        const double ad_aff = std::min(1.0, ad);
        double mu_aff = 0.0;
        for (auto& st : blocks) {
            const Matrix xa = Matrix(st.sig.asDiagonal()) + ap_aff * st.dXha;
            const Matrix za = Matrix(st.sig.asDiagonal()) + ad_aff * st.dZha;
            mu_aff += xa.cwiseProduct(za).sum();
        }
        mu_aff /= total_bs;
        const double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3.0);

        // Corrector.
        solve_direction(sigma * mu, true, dx, false);
        ap = std::numeric_limits<double>::infinity();
        ad = std::numeric_limits<double>::infinity();
        for (auto& st : blocks) {
            ap = std::min(ap, max_step_diag(st.sig, st.dXh));
            ad = std::min(ad, max_step_diag(st.sig, st.dZh));
            st.dX.noalias() = st.G * st.dXh * st.G.transpose();
            st.dZ.noalias() = st.Gi.transpose() * st.dZh * st.Gi;
        }

        const double tau = (mu < 1e-4) ? 0.99 : 0.98;
        const double alpha_p = std::min(1.0, tau * ap);
        const double alpha_d = std::min(1.0, tau * ad);
        if (settings.verbose) {
            std::fprintf(stderr, "      sigma %9.2e  ap %9.2e  ad %9.2e\n", sigma, alpha_p,
                         alpha_d);
        }

        // The scaled step keeps both iterates inside the cone exactly; only
        // rounding in the unscaling can push an eigenvalue below zero, so
        // repair by flooring the spectrum instead of rejecting the step.
        auto repair = [](Matrix& S) {
            if (chol_ok(S)) return;
            Eigen::SelfAdjointEigenSolver<Matrix> eig(S);
            const double floor_val =
                std::max(1e-300, 2e-16 * std::abs(eig.eigenvalues().maxCoeff()));
            Vector ev = eig.eigenvalues().cwiseMax(floor_val);
            S = eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
        };

        x += alpha_d * dx;
        for (auto& st : blocks) {
            st.X += alpha_p * st.dX;
            st.Z += alpha_d * st.dZ;
            repair(st.X);
            repair(st.Z);
        }

        if (alpha_p < 1e-5 && alpha_d < 1e-5) {
            if (++tiny_steps >= 3) {
                sol.status = SdpStatus::NumericalFailure;
                sol.iterations = iter;
                sol.diagnostics = "step sizes collapsed";
                break;
            }
        } else {
            tiny_steps = 0;
        }
        if (iter == settings.max_iterations) {
            sol.status = SdpStatus::NumericalFailure;
            sol.iterations = iter;
            sol.diagnostics = "iteration limit reached";
        }
    }

    // Undo the variable scaling and audit the blocks at the solution.
    for (int i = 0; i < dim; ++i) x[i] /= var_scale[i];
    sol.x = x;
    sol.objective = sys.objective.dot(x);
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < sys.blocks.size(); ++b) {
        const Matrix v = eval_real_block(sys.blocks[b], x);
        Eigen::SelfAdjointEigenSolver<Matrix> eig(v, Eigen::EigenvaluesOnly);
        const double scale = std::max(1.0, sys.blocks[b].constant.norm());
        worst = std::min(worst, eig.eigenvalues().minCoeff() / scale);
    }
    sol.worst_block_min_eig = worst;
    return sol;
}

BuiltinBackend g_builtin;

}  // namespace

SdpSolverBackend& builtin_backend() { return g_builtin; }

SdpSolution solve(const RealLmiSystem& system, const SdpSettings& settings) {
    return builtin_backend().solve(system, settings);
}

}  // namespace fdsyn
