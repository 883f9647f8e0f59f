#include "fdsyn/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

namespace fdsyn {

namespace {

constexpr double kPi = std::numbers::pi;

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

double wrap_pi(double a) {
    while (a > kPi) a -= 2.0 * kPi;
    while (a <= -kPi) a += 2.0 * kPi;
    return a;
}

int effective_degree(const std::vector<double>& coeffs, double rel_tol = 1e-9) {
    double max_abs = 0.0;
    for (double c : coeffs) max_abs = std::max(max_abs, std::abs(c));
    if (max_abs == 0.0) return -1;
    for (int d = int(coeffs.size()) - 1; d >= 0; --d) {
        if (std::abs(coeffs[d]) > rel_tol * max_abs) return d;
    }
    return -1;
}

}  // namespace

std::vector<double> polymat_determinant(const MatrixPolynomial& mp) {
    mp.validate();
    if (mp.rows() != mp.cols()) throw InputError("determinant needs a square polynomial matrix");
    const int n = mp.rows();
    // Permutation-sum degree bound: sum over rows of the max entry degree.
    int bound = 0;
    for (int r = 0; r < n; ++r) {
        int dmax = 0;
        for (int c = 0; c < n; ++c) {
            for (int d = mp.degree(); d >= 0; --d) {
                if (mp.coeffs[d](r, c) != 0.0) {
                    dmax = std::max(dmax, d);
                    break;
                }
            }
        }
        bound += dmax;
    }
    const int M = bound + 1;
    std::vector<Complex> values(M);
    for (int j = 0; j < M; ++j) {
        const Complex zeta = std::polar(1.0, 2.0 * kPi * j / M);
        values[j] = Eigen::PartialPivLU<CMatrix>(mp.eval(zeta)).determinant();
    }
    std::vector<double> coeffs(M, 0.0);
    for (int d = 0; d < M; ++d) {
        Complex acc(0.0, 0.0);
        for (int j = 0; j < M; ++j) {
            acc += values[j] * std::polar(1.0, -2.0 * kPi * j * d / M);
        }
        coeffs[d] = acc.real() / M;  // imag cancels for real coefficient matrices
    }
    return coeffs;
}

std::vector<Complex> polynomial_roots(const std::vector<double>& coeffs) {
    const int deg = effective_degree(coeffs, 1e-12);
    if (deg <= 0) return {};
    Matrix companion = Matrix::Zero(deg, deg);
    for (int i = 0; i < deg; ++i) companion(0, i) = -coeffs[deg - 1 - i] / coeffs[deg];
    for (int i = 1; i < deg; ++i) companion(i, i - 1) = 1.0;
    Eigen::EigenSolver<Matrix> eig(companion, false);
    std::vector<Complex> roots(deg);
    for (int i = 0; i < deg; ++i) roots[i] = eig.eigenvalues()[i];
    return roots;
}

int count_unstable_roots(const std::vector<Complex>& roots, char variable, double band) {
    int count = 0;
    for (const auto& r : roots) {
        if (variable == 'z') {
            if (std::abs(r) > 1.0 + band) ++count;
        } else {
            if (r.real() > band * std::max(1.0, std::abs(r))) ++count;
        }
    }
    return count;
}

std::vector<BoundaryRoot> boundary_roots(const MatrixPolynomial& mp, double sample_period,
                                         double band) {
    if (mp.variable == 'z' && sample_period <= 0.0) {
        throw InputError("boundary roots of a z-polynomial need Ts");
    }
    const auto roots = polynomial_roots(polymat_determinant(mp));
    // Conjugate pairs share one detour at the nonnegative representative, so
    // only roots on the closed upper half count toward the multiplicity.
    std::vector<double> reps;
    for (const auto& r : roots) {
        const bool on_boundary = (mp.variable == 'z')
                                     ? std::abs(std::abs(r) - 1.0) <= band
                                     : std::abs(r.real()) <= band * std::max(1.0, std::abs(r));
        if (!on_boundary) continue;
        const double omega =
            (mp.variable == 'z') ? std::abs(std::arg(r)) / sample_period : std::abs(r.imag());
        reps.push_back(omega);
    }
    std::vector<BoundaryRoot> out;
    for (double rep : reps) {
        bool seen = false;
        for (const auto& b : out) {
            if (std::abs(b.omega - rep) <= band * std::max(1.0, std::abs(b.omega))) seen = true;
        }
        if (seen) continue;
        int mult = 0;
        for (const auto& r : roots) {
            const bool on_boundary = (mp.variable == 'z')
                                         ? std::abs(std::abs(r) - 1.0) <= band
                                         : std::abs(r.real()) <= band * std::max(1.0, std::abs(r));
            if (!on_boundary) continue;
            const bool upper_half = (mp.variable == 'z') ? std::arg(r) >= -band : r.imag() >= -band;
            const double omega =
                (mp.variable == 'z') ? std::abs(std::arg(r)) / sample_period : std::abs(r.imag());
            if (upper_half && std::abs(omega - rep) <= band * std::max(1.0, std::abs(rep))) {
                ++mult;
            }
        }
        if (mult > 0) out.push_back({rep, mult});
    }
    std::sort(out.begin(), out.end(),
              [](const BoundaryRoot& a, const BoundaryRoot& b) { return a.omega < b.omega; });
    return out;
}

int winding_number(const std::vector<Complex>& values, double clearance_rel) {
    if (values.size() < 2) throw InputError("winding number needs at least two samples");
    double vmax = 0.0;
    for (const auto& v : values) vmax = std::max(vmax, std::abs(v));
    const double clearance = clearance_rel * std::max(vmax, 1e-300);
    for (const auto& v : values) {
        if (std::abs(v) <= clearance) {
            throw EvaluationError("contour passes through the origin");
        }
    }
    double total = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const Complex a = values[i];
        const Complex b = values[(i + 1) % values.size()];
        const double step = std::arg(b / a);
        if (std::abs(step) >= kPi / 2.0) {
            throw EvaluationError("phase step >= pi/2, contour sampling too coarse");
        }
        total += step;
    }
    return int(std::lround(total / (2.0 * kPi)));
}

FrequencyGrid densify_grid(const FrequencyGrid& grid, int factor) {
    if (factor < 1) throw InputError("dense factor must be >= 1");
    FrequencyGrid out = grid;
    out.frequencies.clear();
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
        const double a = grid.frequencies[k];
        const double b = grid.frequencies[k + 1];
        for (int j = 0; j < factor; ++j) {
            out.frequencies.push_back(a + (b - a) * double(j) / double(factor));
        }
    }
    if (!grid.frequencies.empty()) out.frequencies.push_back(grid.frequencies.back());
    return out;
}

CMatrix interpolate_response(const FrequencyResponseSet& frs, int model, double omega) {
    const auto& freqs = frs.grid.frequencies;
    const auto& g = frs.models[model];
    if (omega <= freqs.front()) return g.front();
    if (omega >= freqs.back()) return g.back();
    const auto it = std::upper_bound(freqs.begin(), freqs.end(), omega);
    const std::size_t hi = std::size_t(it - freqs.begin());
    const std::size_t lo = hi - 1;
    const double t = (omega - freqs[lo]) / (freqs[hi] - freqs[lo]);
    return (1.0 - t) * g[lo] + t * g[hi];
}

std::vector<CMatrix> weight_on_grid(const WeightSpec& w, const FrequencyGrid& target,
                                    const FrequencyGrid& base) {
    if (w.kind != WeightSpec::Kind::Tabulated) return evaluate_weight(w, target);
    std::vector<CMatrix> out;
    out.reserve(target.size());
    const auto& freqs = base.frequencies;
    for (double omega : target.frequencies) {
        if (omega <= freqs.front()) {
            out.push_back(w.table.front());
        } else if (omega >= freqs.back()) {
            out.push_back(w.table.back());
        } else {
            const auto it = std::upper_bound(freqs.begin(), freqs.end(), omega);
            const std::size_t hi = std::size_t(it - freqs.begin());
            const std::size_t lo = hi - 1;
            const double t = (omega - freqs[lo]) / (freqs[hi] - freqs[lo]);
            out.push_back((1.0 - t) * w.table[lo] + t * w.table[hi]);
        }
    }
    return out;
}

bool StabilityCertificate::verdict() const {
    if (!conditions_ok) return false;
    for (const auto& m : models) {
        if (m.verdict != Verdict::Stable) return false;
    }
    return true;
}

namespace {

// One half-sweep of det(I + G K) over positive frequencies, with exclusion
// gaps around the boundary poles of the controller's fixed part.
struct Sweep {
    std::vector<double> omega;
    std::vector<Complex> value;
    std::map<std::size_t, int> gap_mu;  // gap between index i and i+1 -> multiplicity
    int mu_zero = 0;                    // boundary pole at omega = 0
    int mu_top = 0;                     // boundary pole at the Nyquist point
    bool inconclusive = false;
    std::string note;
    double min_abs = std::numeric_limits<double>::infinity();
    double median_abs = 0.0;
};

struct SweepContext {
    const FrequencyResponseSet* frs;
    const Controller* k;
    int model;
    bool discrete;
    double Ts;
};

Complex det_closed_loop(const SweepContext& ctx, double omega) {
    const Complex pt = ctx.discrete ? std::exp(Complex(0.0, omega * ctx.Ts)) : Complex(0.0, omega);
    const CMatrix g = interpolate_response(*ctx.frs, ctx.model, omega);
    const CMatrix ke = ctx.k->response(pt);
    const int n = int(g.rows());
    return Eigen::PartialPivLU<CMatrix>(CMatrix::Identity(n, n) + g * ke).determinant();
}

double theta_of(const SweepContext& ctx, double omega) {
    return ctx.discrete ? omega * ctx.Ts : omega;
}

// Phase step across a gap hiding mu boundary poles of det(I + G K): the
// detour contributes -mu*(pi + dtheta/2) exactly, only the smooth remainder
// is taken from the measured phases.
double gap_step(const SweepContext& ctx, double theta_l, double theta_r, int mu, Complex fl,
                Complex fr) {
    const double base = mu * (kPi + (ctx.discrete ? 0.5 * (theta_r - theta_l) : 0.0));
    const double r = wrap_pi(std::arg(fr / fl) + base);
    return r - base;
}

Sweep build_sweep(const SweepContext& ctx, const std::vector<BoundaryRoot>& by,
                  int dense_factor) {
    Sweep sw;
    const auto& grid = ctx.frs->grid;
    const double w_lo = grid.frequencies.front();
    const double w_hi = grid.frequencies.back();
    const double top = ctx.discrete ? kPi / ctx.Ts : 0.0;

    auto zone_radius = [&](double w0) { return 1e-5 * std::max(w0, w_lo); };
    auto in_zone = [&](double w) {
        for (const auto& b : by) {
            if (std::abs(w - b.omega) <= zone_radius(b.omega)) return true;
        }
        return false;
    };

    std::vector<double> pts;
    // Pad below the measured range down to 0 (K varies there, G is frozen).
    {
        const double lo_edge = in_zone(0.0) || (!by.empty() && by.front().omega == 0.0)
                                   ? zone_radius(w_lo)
                                   : 0.0;
        const int pad = 64;
        for (int j = 0; j <= pad; ++j) {
            const double w = lo_edge + (w_lo - lo_edge) * double(j) / double(pad + 1);
            if (w < w_lo) pts.push_back(w);
        }
    }
    {
        FrequencyGrid dense = densify_grid(grid, dense_factor);
        pts.insert(pts.end(), dense.frequencies.begin(), dense.frequencies.end());
    }
    // Pad above the measured range: to Nyquist for discrete grids, one decade
    // of controller roll-in for continuous ones.
    if (ctx.discrete) {
        if (w_hi < top * (1.0 - 1e-12)) {
            const int pad = 64;
            for (int j = 1; j <= pad; ++j) {
                pts.push_back(w_hi + (top - w_hi) * double(j) / double(pad));
            }
        }
    } else {
        const int pad = 64;
        for (int j = 1; j <= pad; ++j) {
            pts.push_back(w_hi * std::pow(100.0, double(j) / double(pad)));
        }
    }

    // Drop points inside exclusion zones; remember the crossings.
    std::vector<double> kept;
    for (double w : pts) {
        if (!in_zone(w)) kept.push_back(w);
    }
    std::sort(kept.begin(), kept.end());
    kept.erase(std::unique(kept.begin(), kept.end()), kept.end());
    if (kept.size() < 8) {
        sw.inconclusive = true;
        sw.note = "too few usable sweep points";
        return sw;
    }

    for (const auto& b : by) {
        if (b.omega <= zone_radius(b.omega)) {
            sw.mu_zero += b.multiplicity;
        } else if (ctx.discrete && std::abs(b.omega - top) <= zone_radius(b.omega)) {
            sw.mu_top += b.multiplicity;
        }
    }

    sw.omega = kept;
    sw.value.reserve(kept.size());
    for (double w : kept) sw.value.push_back(det_closed_loop(ctx, w));

    for (std::size_t i = 0; i + 1 < sw.omega.size(); ++i) {
        for (const auto& b : by) {
            if (b.omega > sw.omega[i] && b.omega < sw.omega[i + 1]) {
                sw.gap_mu[i] += b.multiplicity;
            }
        }
    }
    return sw;
}

// Insert midpoints until all non-gap steps are below pi/2.
void refine_sweep(const SweepContext& ctx, Sweep& sw) {
    const int max_points = 200000;
    bool changed = true;
    int rounds = 0;
    while (changed && rounds < 48) {
        changed = false;
        ++rounds;
        std::vector<double> omega;
        std::vector<Complex> value;
        std::map<std::size_t, int> gaps;
        omega.reserve(sw.omega.size() * 2);
        value.reserve(sw.omega.size() * 2);
        for (std::size_t i = 0; i < sw.omega.size(); ++i) {
            omega.push_back(sw.omega[i]);
            value.push_back(sw.value[i]);
            if (i + 1 == sw.omega.size()) break;
            const auto git = sw.gap_mu.find(i);
            if (git != sw.gap_mu.end()) {
                gaps[omega.size() - 1] = git->second;
                continue;
            }
            const double step = std::abs(std::arg(sw.value[i + 1] / sw.value[i]));
            if (step >= kPi / 2.0 && int(omega.size()) < max_points) {
                const double mid = 0.5 * (sw.omega[i] + sw.omega[i + 1]);
                if (mid > sw.omega[i] && mid < sw.omega[i + 1]) {
                    omega.push_back(mid);
                    value.push_back(det_closed_loop(ctx, mid));
                    changed = true;
                }
            }
        }
        sw.omega = std::move(omega);
        sw.value = std::move(value);
        sw.gap_mu = std::move(gaps);
    }
    // Verify resolution.
    for (std::size_t i = 0; i + 1 < sw.omega.size(); ++i) {
        if (sw.gap_mu.count(i)) continue;
        if (std::abs(std::arg(sw.value[i + 1] / sw.value[i])) >= kPi / 2.0) {
            sw.inconclusive = true;
            sw.note = "insufficient phase resolution near omega = " + fmt_double(sw.omega[i]);
            return;
        }
    }
    std::vector<double> mags;
    mags.reserve(sw.value.size());
    for (const auto& v : sw.value) {
        sw.min_abs = std::min(sw.min_abs, std::abs(v));
        mags.push_back(std::abs(v));
    }
    std::nth_element(mags.begin(), mags.begin() + mags.size() / 2, mags.end());
    sw.median_abs = mags[mags.size() / 2];
}

// Total contour phase: the positive half doubles by conjugate symmetry, the
// crossings at omega = 0, the Nyquist point and the infinite arc count once.
double total_contour_phase(const SweepContext& ctx, const Sweep& sw, bool& ok, std::string& note) {
    ok = true;
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < sw.omega.size(); ++i) {
        const auto git = sw.gap_mu.find(i);
        if (git != sw.gap_mu.end()) {
            total += 2.0 * gap_step(ctx, theta_of(ctx, sw.omega[i]),
                                    theta_of(ctx, sw.omega[i + 1]), git->second, sw.value[i],
                                    sw.value[i + 1]);
        } else {
            total += 2.0 * std::arg(sw.value[i + 1] / sw.value[i]);
        }
    }
    // Crossing at omega = 0: from conj(F(w1)) to F(w1).
    total += gap_step(ctx, -theta_of(ctx, sw.omega.front()), theta_of(ctx, sw.omega.front()),
                      sw.mu_zero, std::conj(sw.value.front()), sw.value.front());
    // Crossing at the top of the contour.
    if (ctx.discrete) {
        const double th = theta_of(ctx, sw.omega.back());
        total += gap_step(ctx, th, 2.0 * kPi - th, sw.mu_top, sw.value.back(),
                          std::conj(sw.value.back()));
    } else {
        // Arc at infinity: constant value, then down the conjugate side.
        const double step = wrap_pi(-2.0 * std::arg(sw.value.back()));
        if (std::abs(std::abs(std::arg(sw.value.back())) - kPi / 2.0) < 0.05 * kPi) {
            ok = false;
            note = "loop gain has not rolled off at the sweep end";
        }
        total += step;
    }
    return total;
}

}  // namespace

StabilityCertificate certify_stability(const FrequencyResponseSet& frs, const Controller& k,
                                       int dense_factor) {
    frs.validate();
    k.validate();
    const bool discrete = frs.grid.domain == TimeDomain::Discrete;
    if ((k.variable() == 'z') != discrete) {
        throw InputError("controller variable does not match the grid time domain");
    }
    const double Ts = frs.grid.sample_period;

    StabilityCertificate cert;

    const MatrixPolynomial comp_y = k.composite_Y();
    const std::vector<double> dety = polymat_determinant(comp_y);
    cert.det_y_degree = effective_degree(dety);
    const auto roots = polynomial_roots(dety);
    cert.n_k = count_unstable_roots(roots, k.variable());

    const auto by_fixed = boundary_roots(k.Fy, Ts);
    const auto by_full = boundary_roots(comp_y, Ts);

    cert.conditions_ok = true;
    // Condition 2: boundary poles of K come from the fixed part only.
    int mult_fixed = 0, mult_full = 0;
    for (const auto& b : by_fixed) mult_fixed += b.multiplicity;
    for (const auto& b : by_full) mult_full += b.multiplicity;
    if (mult_fixed != mult_full) {
        cert.conditions_ok = false;
        cert.notes.push_back("det(Y) has boundary roots not declared by the fixed factor");
    } else {
        for (const auto& b : by_full) {
            bool matched = false;
            for (const auto& f : by_fixed) {
                if (std::abs(f.omega - b.omega) <= 1e-6 * std::max(1.0, f.omega) &&
                    f.multiplicity == b.multiplicity) {
                    matched = true;
                    break;
                }
            }
            if (!matched) {
                cert.conditions_ok = false;
                cert.notes.push_back("boundary roots of det(Y) moved away from the fixed part");
                break;
            }
        }
    }
    // Condition 3: order of det(Y) pinned by the monic leading coefficient.
    const int expected_deg =
        k.outputs() * k.order() + std::max(0, effective_degree(polymat_determinant(k.Fy)));
    if (cert.det_y_degree != expected_deg) {
        cert.conditions_ok = false;
        cert.notes.push_back("deg det(Y) = " + std::to_string(cert.det_y_degree) +
                             " differs from the structural value " +
                             std::to_string(expected_deg));
    }

    // Plant boundary poles (B_g) cannot be certified from samples.
    for (double e : frs.grid.excluded) {
        bool is_by = false;
        for (const auto& b : by_fixed) {
            if (std::abs(e - b.omega) <= 1e-6 * std::max(1.0, b.omega)) is_by = true;
        }
        if (!is_by) {
            cert.conditions_ok = false;
            cert.notes.push_back("inconclusive near plant boundary frequency omega = " +
                                 fmt_double(e));
        }
    }

    SweepContext ctx{&frs, &k, 0, discrete, Ts};
    for (int i = 0; i < frs.model_count(); ++i) {
        ctx.model = i;
        ModelCertificate mc;
        mc.model = i;
        mc.required = frs.unstable_pole_count[i] + cert.n_k;

        Sweep sw = build_sweep(ctx, by_fixed, dense_factor);
        if (!sw.inconclusive) refine_sweep(ctx, sw);
        if (sw.inconclusive) {
            mc.verdict = Verdict::Inconclusive;
            mc.note = sw.note;
            cert.models.push_back(mc);
            continue;
        }
        mc.clearance = sw.min_abs;
        if (sw.min_abs <= 1e-9 * std::max(sw.median_abs, 1e-300)) {
            mc.verdict = Verdict::Inconclusive;
            mc.note = "det(I + G K) passes through the origin";
            cert.models.push_back(mc);
            continue;
        }

        bool ok = true;
        std::string note;
        const double total = total_contour_phase(ctx, sw, ok, note);
        const double wno_f = total / (2.0 * kPi);
        const double drift = std::abs(wno_f - std::lround(wno_f));
        if (!ok || drift > 0.15) {
            mc.verdict = Verdict::Inconclusive;
            mc.note = ok ? "winding number is not integral (" + fmt_double(wno_f) + ")" : note;
            cert.models.push_back(mc);
            continue;
        }
        mc.winding = int(std::lround(wno_f));
        mc.verdict = (mc.winding == mc.required) ? Verdict::Stable : Verdict::Unstable;
        cert.models.push_back(mc);
    }
    return cert;
}

namespace {

struct DenseEval {
    double omega;
    CMatrix S, K, G, T;
};

DenseEval eval_closed_loop(const FrequencyResponseSet& frs, const Controller& k, int model,
                           double omega) {
    const bool discrete = frs.grid.domain == TimeDomain::Discrete;
    const Complex pt =
        discrete ? std::exp(Complex(0.0, omega * frs.grid.sample_period)) : Complex(0.0, omega);
    DenseEval ev;
    ev.omega = omega;
    ev.G = interpolate_response(frs, model, omega);
    ev.K = k.response(pt);
    const int n = int(ev.G.rows());
    const CMatrix L = ev.G * ev.K;
    ev.S = Eigen::PartialPivLU<CMatrix>(CMatrix::Identity(n, n) + L)
               .solve(CMatrix::Identity(n, n));
    ev.T = L * ev.S;
    return ev;
}

double sigma_max(const CMatrix& M) {
    return Eigen::JacobiSVD<CMatrix>(M).singularValues().coeff(0);
}

}  // namespace

double achieved_hinf(const FrequencyResponseSet& frs, const Controller& k, const WeightSpec& w1,
                     const WeightSpec& w2, StackKind stack, int dense_factor) {
    frs.validate();
    const FrequencyGrid dense = densify_grid(frs.grid, dense_factor);
    const auto W1 = weight_on_grid(w1, dense, frs.grid);
    const auto W2 = weight_on_grid(w2, dense, frs.grid);
    double worst = 0.0;
    for (int i = 0; i < frs.model_count(); ++i) {
        for (std::size_t j = 0; j < dense.size(); ++j) {
            const DenseEval ev = eval_closed_loop(frs, k, i, dense.frequencies[j]);
            const int n = int(ev.G.rows());
            const int m = int(ev.G.cols());
            double s = 0.0;
            switch (stack) {
                case StackKind::Mixed: {
                    CMatrix st(n + m, n);
                    st.topRows(n) = W1[j] * ev.S;
                    st.bottomRows(m) = W2[j] * ev.K * ev.S;
                    s = sigma_max(st);
                    break;
                }
                case StackKind::WeightedSensitivity:
                    s = sigma_max(W1[j] * ev.S);
                    break;
                case StackKind::WeightedControl:
                    s = sigma_max(W2[j] * ev.K * ev.S);
                    break;
                case StackKind::WeightedComplSens:
                    s = sigma_max(W1[j] * ev.T);
                    break;
                case StackKind::RobustLoop:
                    s = sigma_max(W2[j] * ev.K * ev.S * W1[j]);
                    break;
                case StackKind::LoopMismatch:
                    s = sigma_max(ev.G * ev.K - W1[j]);
                    break;
            }
            worst = std::max(worst, s);
        }
    }
    return worst;
}

double achieved_h2(const FrequencyResponseSet& frs, const Controller& k, const WeightSpec& w1,
                   int dense_factor) {
    frs.validate();
    const bool discrete = frs.grid.domain == TimeDomain::Discrete;
    const FrequencyGrid dense = densify_grid(frs.grid, dense_factor);
    const auto W1 = weight_on_grid(w1, dense, frs.grid);
    double total = 0.0;
    for (int i = 0; i < frs.model_count(); ++i) {
        std::vector<double> f(dense.size());
        for (std::size_t j = 0; j < dense.size(); ++j) {
            const DenseEval ev = eval_closed_loop(frs, k, i, dense.frequencies[j]);
            const CMatrix ws = W1[j] * ev.S;
            f[j] = (ws * ws.adjoint()).real().trace();
        }
        // Trapezoid over [0, upper] with flat extension at both ends.
        const double upper =
            discrete ? kPi / frs.grid.sample_period : dense.frequencies.back();
        double integral = f.front() * dense.frequencies.front();
        for (std::size_t j = 0; j + 1 < dense.size(); ++j) {
            integral +=
                0.5 * (f[j] + f[j + 1]) * (dense.frequencies[j + 1] - dense.frequencies[j]);
        }
        if (discrete && upper > dense.frequencies.back()) {
            integral += f.back() * (upper - dense.frequencies.back());
        }
        const double norm = discrete ? frs.grid.sample_period / kPi : 1.0 / kPi;
        total += norm * integral;
    }
    return total;
}

std::vector<ClosedLoopPoint> closed_loop_sweep(const FrequencyResponseSet& frs,
                                               const Controller& k, int model,
                                               int dense_factor) {
    frs.validate();
    const FrequencyGrid dense = densify_grid(frs.grid, dense_factor);
    std::vector<ClosedLoopPoint> out;
    out.reserve(dense.size());
    for (double omega : dense.frequencies) {
        const DenseEval ev = eval_closed_loop(frs, k, model, omega);
        ClosedLoopPoint pt;
        pt.omega = omega;
        pt.sigma_S = sigma_max(ev.S);
        pt.sigma_T = sigma_max(ev.T);
        pt.sigma_U = sigma_max(ev.K * ev.S);
        pt.sigma_L = sigma_max(ev.G * ev.K);
        out.push_back(pt);
    }
    return out;
}

double stability_margin_diagnostic(const FrequencyResponseSet& frs, const Controller& k,
                                   const Controller& kc) {
    frs.validate();
    double worst = std::numeric_limits<double>::infinity();
    for (int i = 0; i < frs.model_count(); ++i) {
        for (std::size_t j = 0; j < frs.grid.size(); ++j) {
            const Complex pt = frs.grid.point(j);
            const CMatrix P = k.eval_Y(pt) + frs.models[i][j] * k.eval_X(pt);
            const CMatrix Pc = kc.eval_Y(pt) + frs.models[i][j] * kc.eval_X(pt);
            Eigen::ComplexEigenSolver<CMatrix> eig(P.adjoint() * Pc, false);
            for (int e = 0; e < eig.eigenvalues().size(); ++e) {
                worst = std::min(worst, eig.eigenvalues()[e].real());
            }
        }
    }
    return worst;
}

std::string certificate_report(const StabilityCertificate& cert) {
    std::ostringstream os;
    os << "stability certificate\n";
    os << "  deg det(Y) = " << cert.det_y_degree << ", N_K = " << cert.n_k << "\n";
    os << "  structural conditions: " << (cert.conditions_ok ? "ok" : "violated") << "\n";
    for (const auto& n : cert.notes) os << "  note: " << n << "\n";
    for (const auto& m : cert.models) {
        os << "  model " << m.model + 1 << ": winding = " << m.winding
           << ", required = " << m.required << ", clearance = " << fmt_double(m.clearance)
           << ", verdict = ";
        switch (m.verdict) {
            case Verdict::Stable: os << "stable"; break;
            case Verdict::Unstable: os << "unstable"; break;
            case Verdict::Inconclusive: os << "inconclusive"; break;
        }
        if (!m.note.empty()) os << " (" << m.note << ")";
        os << "\n";
    }
    os << "  overall: " << (cert.verdict() ? "stable" : "not certified") << "\n";
    return os.str();
}

}  // namespace fdsyn
