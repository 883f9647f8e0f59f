#include "fdsyn/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace fdsyn {

void SynthesisConfig::validate() const {
    controller.validate();
    if (!(grid_min > 0.0) || !(grid_max > grid_min)) throw InputError("bad grid interval");
    if (grid_points < 1) throw InputError("grid_points must be >= 1");
    if (max_iterations < 1) throw InputError("max_iterations must be >= 1");
    if (!(stop_tol > 0.0)) throw InputError("stop_tol must be positive");
    if (!(delta_feas >= 0.0)) throw InputError("delta_feas must be nonnegative");
    if (dense_factor < 1) throw InputError("dense_factor must be >= 1");
    if (initializer == InitializerKind::UserSupplied && !initial_controller) {
        throw InputError("user-supplied initializer needs an initial controller");
    }
}

namespace {

// Monic Y with all det roots away from the stability boundary: z^p for
// discrete controllers, (s+1)^p for continuous ones.
MatrixPolynomial base_monic_y(const ControllerParametrization& cp) {
    MatrixPolynomial y;
    y.variable = cp.variable;
    y.coeffs.assign(cp.degree + 1, Matrix::Zero(cp.outputs, cp.outputs));
    if (cp.variable == 'z') {
        y.coeffs.back() = Matrix::Identity(cp.outputs, cp.outputs);
    } else {
        // (s+1)^p I: binomial coefficients ascending
        for (int d = 0; d <= cp.degree; ++d) {
            double b = 1.0;
            for (int j = 0; j < d; ++j) b = b * double(cp.degree - j) / double(j + 1);
            y.coeffs[d] = b * Matrix::Identity(cp.outputs, cp.outputs);
        }
    }
    return y;
}

Controller make_static_gain_controller(const ControllerParametrization& cp, const Matrix& gain) {
    Controller k;
    k.X.variable = cp.variable;
    k.Y = base_monic_y(cp);
    k.X.coeffs.assign(cp.degree + 1, Matrix::Zero(cp.inputs, cp.outputs));
    Matrix g0 = gain;
    for (int r = 0; r < cp.inputs; ++r) {
        for (int c = 0; c < cp.outputs; ++c) {
            if (!cp.mask_X(r, c)) g0(r, c) = 0.0;
        }
    }
    k.X.coeffs[0] = g0;
    k.Fx = cp.Fx;
    k.Fy = cp.Fy;
    return k;
}

}  // namespace

Controller init_epsilon_static(const FrequencyResponseSet& frs,
                               const ControllerParametrization& cp, double eps) {
    frs.validate();
    cp.validate();
    for (int c : frs.unstable_pole_count) {
        if (c > 0) {
            throw SynthesisError(
                "epsilon initializer needs an open-loop stable plant; supply an initial "
                "stabilizing controller instead");
        }
    }
    Matrix pad = Matrix::Zero(cp.inputs, cp.outputs);
    for (int i = 0; i < std::min(cp.inputs, cp.outputs); ++i) pad(i, i) = 1.0;

    double e = eps;
    for (int attempt = 0; attempt <= 8; ++attempt) {
        Controller k = make_static_gain_controller(cp, e * pad);
        StabilityCertificate cert = certify_stability(frs, k, 4);
        if (cert.verdict()) return k;
        e /= 10.0;
    }
    throw SynthesisError("epsilon initializer failed: no epsilon certified stable after 8 shrinks");
}

std::vector<Controller> reinit_random(const FrequencyResponseSet& frs,
                                      const ControllerParametrization& cp, int trials,
                                      unsigned seed) {
    frs.validate();
    cp.validate();
    std::vector<Controller> accepted;
    if (trials <= 0) return accepted;

    const auto& grid = frs.grid;
    const int q = frs.model_count();

    // min over grid and models of Re det(I + G K); -inf when Y is singular.
    auto objective = [&](const Controller& k) {
        double worst = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < grid.size(); ++j) {
            const Complex pt = grid.point(j);
            CMatrix ke;
            try {
                ke = k.response(pt);
            } catch (const EvaluationError&) {
                return -std::numeric_limits<double>::infinity();
            }
            for (int i = 0; i < q; ++i) {
                const int n = frs.outputs;
                const Complex d = Eigen::PartialPivLU<CMatrix>(CMatrix::Identity(n, n) +
                                                               frs.models[i][j] * ke)
                                      .determinant();
                worst = std::min(worst, d.real());
            }
        }
        return worst;
    };

    std::mt19937 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<std::pair<double, Controller>> results;

    const DecisionLayout layout = DecisionLayout::make(cp, GammaVariables{});
    const int nxy = layout.xy_count();

    for (int trial = 0; trial < trials; ++trial) {
        Controller k = make_static_gain_controller(cp, Matrix::Zero(cp.inputs, cp.outputs));
        Vector v = decision_from_controller(layout, k);
        if (trial > 0) {
            for (int i = 0; i < nxy; ++i) v[i] += 0.3 * noise(rng);
        }
        double best = objective(controller_from_decision(layout, v, cp));
        double step = 0.3;
        for (int it = 0; it < 200; ++it) {
            const int coord = it % nxy;
            bool improved = false;
            for (double dir : {+1.0, -1.0}) {
                Vector trial_v = v;
                trial_v[coord] += dir * step;
                const double val = objective(controller_from_decision(layout, trial_v, cp));
                if (val > best) {
                    best = val;
                    v = trial_v;
                    improved = true;
                    break;
                }
            }
            if (!improved) step *= 0.97;
        }
        if (best > -1.0) {
            Controller cand = controller_from_decision(layout, v, cp);
            StabilityCertificate cert = certify_stability(frs, cand, 4);
            if (cert.verdict()) results.emplace_back(best, std::move(cand));
        }
    }
    std::stable_sort(results.begin(), results.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    accepted.reserve(results.size());
    for (auto& r : results) accepted.push_back(std::move(r.second));
    return accepted;
}

std::vector<double> quadrature_weights(const FrequencyGrid& grid, QuadratureRule rule) {
    const std::size_t N = grid.size();
    std::vector<double> w(N, 1.0);
    if (rule == QuadratureRule::UniformSum) return w;
    if (N == 1) {
        w[0] = std::max(grid.span_hi - grid.span_lo, 0.0);
        if (w[0] == 0.0) w[0] = 1.0;
        return w;
    }
    const auto& f = grid.frequencies;
    w[0] = 0.5 * (f[1] - f[0]);
    w[N - 1] = 0.5 * (f[N - 1] - f[N - 2]);
    for (std::size_t k = 1; k + 1 < N; ++k) w[k] = 0.5 * (f[k + 1] - f[k - 1]);
    return w;
}

double h2_objective(const std::vector<std::vector<Matrix>>& gammas, const FrequencyGrid& grid,
                    QuadratureRule rule) {
    const auto w = quadrature_weights(grid, rule);
    double total = 0.0;
    for (const auto& model : gammas) {
        if (model.size() != grid.size()) throw InputError("Gamma list does not match the grid");
        for (std::size_t k = 0; k < model.size(); ++k) total += w[k] * model[k].trace();
    }
    return total;
}

FrequencyResponseSet resample(const FrequencyResponseSet& frs, const FrequencyGrid& grid) {
    if (frs.grid.frequencies == grid.frequencies) {
        FrequencyResponseSet out = frs;
        out.grid = grid;
        return out;
    }
    if (grid.frequencies.front() < frs.grid.frequencies.front() * (1.0 - 1e-9) ||
        grid.frequencies.back() > frs.grid.frequencies.back() * (1.0 + 1e-9)) {
        throw InputError("synthesis grid extends beyond the measured frequency range");
    }
    FrequencyResponseSet out;
    out.grid = grid;
    out.outputs = frs.outputs;
    out.inputs = frs.inputs;
    out.unstable_pole_count = frs.unstable_pole_count;
    out.models.resize(frs.model_count());
    for (int i = 0; i < frs.model_count(); ++i) {
        out.models[i].reserve(grid.size());
        for (double omega : grid.frequencies) {
            out.models[i].push_back(interpolate_response(frs, i, omega));
        }
    }
    out.validate();
    return out;
}

namespace {

void scale_weight(WeightSpec& w, double factor) {
    switch (w.kind) {
        case WeightSpec::Kind::ScalarTimesIdentity:
            for (double& c : w.scalar.num) c *= factor;
            break;
        case WeightSpec::Kind::RationalMatrix:
            for (auto& row : w.entries) {
                for (auto& e : row) {
                    for (double& c : e.num) c *= factor;
                }
            }
            break;
        case WeightSpec::Kind::Tabulated:
            for (auto& t : w.table) t *= factor;
            break;
    }
}

Vector make_objective(const DecisionLayout& layout, const FrequencyGrid& grid,
                      QuadratureRule rule) {
    Vector c = Vector::Zero(layout.dim());
    if (layout.gamma_index >= 0) {
        c[layout.gamma_index] = 1.0;
        return c;
    }
    const auto w = quadrature_weights(grid, rule);
    for (int i = 0; i < layout.gamma_vars.models; ++i) {
        for (int k = 0; k < layout.gamma_vars.frequencies; ++k) {
            for (int r = 0; r < layout.gamma_vars.dim; ++r) {
                c[layout.gamma_entry_index(i, k, r, r)] = w[k];
            }
        }
    }
    return c;
}

std::vector<std::vector<Matrix>> extract_gammas(const DecisionLayout& layout, const Vector& x) {
    std::vector<std::vector<Matrix>> out;
    if (layout.gamma_base < 0) return out;
    out.resize(layout.gamma_vars.models);
    for (int i = 0; i < layout.gamma_vars.models; ++i) {
        out[i].reserve(layout.gamma_vars.frequencies);
        for (int k = 0; k < layout.gamma_vars.frequencies; ++k) {
            out[i].push_back(gamma_matrix_from_decision(layout, x, i, k));
        }
    }
    return out;
}

double min_block_eig(const RealLmiSystem& sys, const Vector& x) {
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& blk : sys.blocks) {
        Eigen::SelfAdjointEigenSolver<Matrix> eig(eval_real_block(blk, x),
                                                  Eigen::EigenvaluesOnly);
        worst = std::min(worst, eig.eigenvalues().minCoeff());
    }
    return worst;
}

double loopshape_h2_mismatch(const FrequencyResponseSet& frs, const Controller& k,
                             const WeightSpec& ld, int dense_factor) {
    const bool discrete = frs.grid.domain == TimeDomain::Discrete;
    const FrequencyGrid dense = densify_grid(frs.grid, dense_factor);
    const auto Ld = weight_on_grid(ld, dense, frs.grid);
    double total = 0.0;
    for (int i = 0; i < frs.model_count(); ++i) {
        std::vector<double> f(dense.size());
        for (std::size_t j = 0; j < dense.size(); ++j) {
            const double omega = dense.frequencies[j];
            const Complex pt = discrete ? std::exp(Complex(0.0, omega * frs.grid.sample_period))
                                        : Complex(0.0, omega);
            const CMatrix mism = interpolate_response(frs, i, omega) * k.response(pt) - Ld[j];
            f[j] = (mism * mism.adjoint()).real().trace();
        }
        double integral = 0.0;
        for (std::size_t j = 0; j + 1 < dense.size(); ++j) {
            integral +=
                0.5 * (f[j] + f[j + 1]) * (dense.frequencies[j + 1] - dense.frequencies[j]);
        }
        const double norm =
            discrete ? frs.grid.sample_period / std::numbers::pi : 1.0 / std::numbers::pi;
        total += norm * integral;
    }
    return total;
}

}  // namespace

SynthesisReport run_synthesis(const SynthesisConfig& cfg, const FrequencyResponseSet& frs_in) {
    cfg.validate();
    frs_in.validate();

    SynthesisReport report;
    const auto& cp = cfg.controller;

    // Working grid: keep declared boundary frequencies and the fixed-part
    // poles off the sampled set.
    std::vector<double> excluded = cfg.excluded;
    for (double w : frs_in.grid.excluded) excluded.push_back(w);
    for (double w : cp.boundary_poles) excluded.push_back(w);
    for (const auto& b : boundary_roots(cp.Fy, frs_in.grid.sample_period)) {
        excluded.push_back(b.omega);
    }
    std::sort(excluded.begin(), excluded.end());
    excluded.erase(std::unique(excluded.begin(), excluded.end()), excluded.end());
    excluded.erase(std::remove_if(excluded.begin(), excluded.end(),
                                  [](double w) { return w <= 0.0; }),
                   excluded.end());

    const FrequencyGrid grid =
        build_log_grid(cfg.grid_min, cfg.grid_max, cfg.grid_points, excluded,
                       frs_in.grid.domain, frs_in.grid.sample_period);
    const FrequencyResponseSet frs = resample(frs_in, grid);

    // Initial stabilizing iterate.
    Controller iterate;
    switch (cfg.initializer) {
        case InitializerKind::EpsilonStatic:
            iterate = init_epsilon_static(frs, cp);
            break;
        case InitializerKind::UserSupplied: {
            iterate = *cfg.initial_controller;
            if (iterate.order() < cp.degree) iterate = augment_order(iterate, cp.degree);
            iterate.validate();
            break;
        }
        case InitializerKind::RandomRestart: {
            auto candidates = reinit_random(frs, cp, cfg.random_trials, cfg.seed);
            if (candidates.empty()) {
                throw SynthesisError("random re-initialization produced no stabilizing iterate");
            }
            iterate = candidates.front();
            break;
        }
    }

    DesignSpec design = cfg.design;
    const GammaVariables gv =
        gamma_variables_for(design.objective, frs.outputs, frs.model_count(), int(grid.size()));
    const DecisionLayout layout = DecisionLayout::make(cp, gv);
    const Vector objective = make_objective(layout, grid, cfg.quadrature);

    SdpSettings solver_settings;
    solver_settings.tolerance = cfg.solver_tol;
    solver_settings.max_iterations = cfg.solver_max_iterations;

    AssembleOptions asm_opts;
    asm_opts.delta_feas = cfg.delta_feas;

    bool have_prev = false;
    Vector prev_solution;
    double prev_obj = 0.0;
    report.status = SynthesisStatus::MaxIterations;

    for (int t = 1; t <= cfg.max_iterations; ++t) {
        EvaluatedDesign ev = evaluate_design(design, grid, frs.outputs, frs.inputs);
        const LinearizationPoint lin = make_linearization(frs, iterate);
        const auto blocks = replicate_multimodel(ev, frs, lin);
        const RealLmiSystem sys = assemble(blocks, layout, objective, asm_opts);

        double residual = 0.0;
        if (have_prev) residual = min_block_eig(sys, prev_solution);

        SdpSolution sol = solve(sys, solver_settings);

        if (sol.status == SdpStatus::Infeasible && t == 1) {
            // Relaxation fallback: scale the binding weight down, solve, and
            // restart the untouched problem from the relaxed solution.
            DesignSpec relaxed = design;
            bool recovered = false;
            for (int round = 1; round <= 4; ++round) {
                if (relaxed.W1_uncertainty) {
                    scale_weight(*relaxed.W1_uncertainty, 0.5);
                } else {
                    scale_weight(relaxed.W1, 0.5);
                }
                report.relaxation_rounds = round;
                EvaluatedDesign rev = evaluate_design(relaxed, grid, frs.outputs, frs.inputs);
                const auto rblocks = replicate_multimodel(rev, frs, lin);
                SdpSolution rsol = solve(assemble(rblocks, layout, objective, asm_opts),
                                         solver_settings);
                if (rsol.status == SdpStatus::Optimal) {
                    iterate = controller_from_decision(layout, rsol.x, cp);
                    recovered = true;
                    break;
                }
            }
            if (!recovered) {
                report.status = SynthesisStatus::Infeasible;
                report.diagnostics = "infeasible after " +
                                     std::to_string(report.relaxation_rounds) +
                                     " relaxation rounds";
                break;
            }
            continue;  // re-linearize around the relaxed solution
        }
        if (sol.status == SdpStatus::Infeasible) {
            report.status = SynthesisStatus::Infeasible;
            report.diagnostics = "solver reported infeasibility at iteration " + std::to_string(t);
            break;
        }
        if (sol.status == SdpStatus::NumericalFailure) {
            report.status = SynthesisStatus::NumericalFailure;
            report.diagnostics = "solver failure at iteration " + std::to_string(t) + ": " +
                                 sol.diagnostics;
            break;
        }

        iterate = controller_from_decision(layout, sol.x, cp);
        IterationRecord rec;
        rec.iteration = int(report.trace.size()) + 1;
        rec.objective = sol.objective;
        rec.status = sol.status;
        rec.worst_residual = residual;
        rec.controller = iterate;
        report.trace.push_back(rec);

        const bool converged =
            have_prev && (std::abs(sol.objective - prev_obj) < cfg.stop_tol * std::abs(prev_obj) ||
                          std::abs(sol.objective - prev_obj) < cfg.stop_abs_tol);
        prev_obj = sol.objective;
        prev_solution = sol.x;
        have_prev = true;
        report.final_objective = sol.objective;
        report.gamma_values = extract_gammas(layout, sol.x);
        if (converged) {
            report.status = SynthesisStatus::Converged;
            break;
        }
    }

    report.controller = iterate;
    if (report.status == SynthesisStatus::Converged ||
        report.status == SynthesisStatus::MaxIterations) {
        report.certificate = certify_stability(frs, iterate, cfg.dense_factor);
        switch (design.objective) {
            case Objective::MixedSensHinf:
                report.achieved_norm = achieved_hinf(frs, iterate, design.W1, design.W2,
                                                     StackKind::Mixed, cfg.dense_factor);
                break;
            case Objective::H2:
                report.achieved_norm =
                    achieved_h2(frs, iterate, design.W1, cfg.dense_factor);
                break;
            case Objective::LoopshapeHinf:
                report.achieved_norm =
                    achieved_hinf(frs, iterate, design.Ld, design.W2, StackKind::LoopMismatch,
                                  cfg.dense_factor);
                break;
            case Objective::LoopshapeH2:
                report.achieved_norm =
                    loopshape_h2_mismatch(frs, iterate, design.Ld, cfg.dense_factor);
                break;
        }
    }
    return report;
}

}  // namespace fdsyn
