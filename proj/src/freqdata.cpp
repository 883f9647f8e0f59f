#include "fdsyn/freqdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace fdsyn {

namespace {

constexpr double kExcludedRelTol = 1e-6;
constexpr double kNudgeFactor = 1e-4;

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

double FrequencyGrid::nyquist() const {
    if (domain != TimeDomain::Discrete || sample_period <= 0.0) {
        throw InputError("nyquist frequency undefined for continuous grid");
    }
    return std::numbers::pi / sample_period;
}

void FrequencyGrid::validate() const {
    double prev = 0.0;
    for (double w : frequencies) {
        if (!(w > prev)) {
            throw InputError("frequency grid must be strictly increasing and positive");
        }
        prev = w;
    }
    if (domain == TimeDomain::Discrete) {
        if (sample_period <= 0.0) throw InputError("discrete grid requires Ts > 0");
        const double ny = nyquist();
        if (!frequencies.empty() && frequencies.back() > ny * (1.0 + 1e-12)) {
            throw InputError("grid frequency exceeds Nyquist frequency pi/Ts");
        }
    }
    for (double w : frequencies) {
        for (double e : excluded) {
            if (std::abs(w - e) <= kExcludedRelTol * std::max(std::abs(e), std::abs(w))) {
                throw InputError("grid contains an excluded frequency");
            }
        }
    }
}

void ExperimentRecord::validate() const {
    if (inputs.empty() || inputs.size() != outputs.size()) {
        throw InputError("experiment record needs matching, nonempty input/output sequences");
    }
    if (sample_period <= 0.0) throw InputError("experiment record requires Ts > 0");
    const auto m = inputs.front().cols();
    const auto n = outputs.front().rows();
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        if (inputs[k].rows() != m || inputs[k].cols() != m) {
            throw InputError("input sample dimension mismatch (expected m x m)");
        }
        if (outputs[k].rows() != n || outputs[k].cols() != m) {
            throw InputError("output sample dimension mismatch (expected n x m)");
        }
    }
}

void FrequencyResponseSet::validate() const {
    grid.validate();
    if (models.empty()) throw InputError("frequency-response set must contain q >= 1 models");
    if (unstable_pole_count.size() != models.size()) {
        throw InputError("unstable_pole_count must have one entry per model");
    }
    for (const auto& model : models) {
        if (model.size() != grid.size()) {
            throw InputError("model has wrong number of frequency samples");
        }
        for (const auto& g : model) {
            if (g.rows() != outputs || g.cols() != inputs) {
                throw InputError("frequency-response matrix dimension mismatch");
            }
            if (!g.allFinite()) throw InputError("frequency-response matrix has non-finite entries");
        }
    }
    for (int c : unstable_pole_count) {
        if (c < 0) throw InputError("unstable pole count must be nonnegative");
    }
}

Complex RationalFunction::eval(Complex point) const {
    auto horner = [&](const std::vector<double>& c) {
        Complex acc(0.0, 0.0);
        for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * point + *it;
        return acc;
    };
    if (num.empty() || den.empty()) throw InputError("rational function needs coefficients");
    return horner(num) / horner(den);
}

WeightSpec WeightSpec::constant(double value, int dim) {
    WeightSpec w;
    w.kind = Kind::ScalarTimesIdentity;
    w.dim = dim;
    w.scalar = RationalFunction{{value}, {1.0}};
    return w;
}

WeightSpec WeightSpec::constant_matrix(const Matrix& value) {
    if (value.rows() != value.cols()) throw InputError("weight matrices must be square");
    WeightSpec w;
    w.kind = Kind::RationalMatrix;
    w.dim = int(value.rows());
    w.entries.resize(w.dim);
    for (int r = 0; r < w.dim; ++r) {
        for (int c = 0; c < w.dim; ++c) {
            w.entries[r].push_back(RationalFunction{{value(r, c)}, {1.0}});
        }
    }
    return w;
}

WeightSpec WeightSpec::scalar_rational(std::vector<double> num, std::vector<double> den, int dim) {
    WeightSpec w;
    w.kind = Kind::ScalarTimesIdentity;
    w.dim = dim;
    w.scalar = RationalFunction{std::move(num), std::move(den)};
    return w;
}

WeightSpec WeightSpec::tabulated(std::vector<CMatrix> values) {
    if (values.empty()) throw InputError("tabulated weight needs at least one sample");
    WeightSpec w;
    w.kind = Kind::Tabulated;
    w.dim = int(values.front().rows());
    w.table = std::move(values);
    return w;
}

bool WeightSpec::is_zero() const {
    if (kind == Kind::ScalarTimesIdentity) {
        return std::all_of(scalar.num.begin(), scalar.num.end(), [](double v) { return v == 0.0; });
    }
    return false;
}

std::vector<CMatrix> estimate_frequency_response(const ExperimentRecord& rec,
                                                 const FrequencyGrid& grid) {
    rec.validate();
    if (grid.domain != TimeDomain::Discrete) {
        throw InputError("frequency-response estimation requires a discrete grid");
    }
    if (std::abs(grid.sample_period - rec.sample_period) >
        1e-12 * std::max(grid.sample_period, rec.sample_period)) {
        throw InputError("grid sample period does not match experiment record");
    }
    const int n = rec.n_outputs();
    const int m = rec.n_inputs();
    const int N = rec.length();

    std::vector<CMatrix> result;
    result.reserve(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double w = grid.frequencies[k];
        const Complex zinv = std::exp(Complex(0.0, -w * rec.sample_period));
        CMatrix U = CMatrix::Zero(m, m);
        CMatrix Y = CMatrix::Zero(n, m);
        Complex zk(1.0, 0.0);
        for (int t = 0; t < N; ++t) {
            U += rec.inputs[t].cast<Complex>() * zk;
            Y += rec.outputs[t].cast<Complex>() * zk;
            zk *= zinv;
        }
        Eigen::FullPivLU<CMatrix> lu(U);
        lu.setThreshold(1e-12);
        if (!lu.isInvertible()) {
            throw IdentificationError("singular input spectrum at omega = " + fmt_double(w));
        }
        result.push_back(Y * lu.inverse());
    }
    return result;
}

FrequencyGrid build_log_grid(double omega_min, double omega_max, int count,
                             const std::vector<double>& excluded,
                             TimeDomain domain, double sample_period) {
    if (!(omega_min > 0.0) || !(omega_max > omega_min)) {
        throw InputError("log grid requires 0 < omega_min < omega_max");
    }
    if (count < 1) throw InputError("log grid requires at least one point");
    if (domain == TimeDomain::Discrete) {
        if (sample_period <= 0.0) throw InputError("discrete grid requires Ts > 0");
        const double ny = std::numbers::pi / sample_period;
        if (omega_max > ny * (1.0 + 1e-12)) {
            throw InputError("omega_max exceeds Nyquist frequency pi/Ts");
        }
    }

    FrequencyGrid grid;
    grid.domain = domain;
    grid.sample_period = sample_period;
    grid.excluded = excluded;
    grid.span_lo = omega_min;
    grid.span_hi = omega_max;
    grid.frequencies.resize(count);
    if (count == 1) {
        grid.frequencies[0] = omega_min;
    } else {
        const double lr = std::log(omega_max / omega_min);
        for (int k = 0; k < count; ++k) {
            grid.frequencies[k] = omega_min * std::exp(lr * double(k) / double(count - 1));
        }
        grid.frequencies.front() = omega_min;
        grid.frequencies.back() = omega_max;
    }

    // Step grid points off excluded frequencies without reordering the grid.
    const double hi_cap = (domain == TimeDomain::Discrete)
                              ? std::numbers::pi / sample_period
                              : std::numeric_limits<double>::infinity();
    for (double& w : grid.frequencies) {
        for (double e : excluded) {
            if (std::abs(w - e) <= kExcludedRelTol * std::max(std::abs(e), std::abs(w))) {
                const double up = e * (1.0 + kNudgeFactor);
                w = (up <= hi_cap) ? up : e * (1.0 - kNudgeFactor);
            }
        }
    }
    grid.validate();
    return grid;
}

std::vector<CMatrix> evaluate_weight(const WeightSpec& weight, const FrequencyGrid& grid) {
    std::vector<CMatrix> result;
    result.reserve(grid.size());
    switch (weight.kind) {
        case WeightSpec::Kind::ScalarTimesIdentity: {
            for (std::size_t k = 0; k < grid.size(); ++k) {
                const Complex pt = grid.point(k);
                auto horner = [&](const std::vector<double>& c) {
                    Complex acc(0.0, 0.0);
                    for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * pt + *it;
                    return acc;
                };
                const Complex d = horner(weight.scalar.den);
                if (std::abs(d) < 1e-300) {
                    throw EvaluationError("weight has a pole at omega = " +
                                          fmt_double(grid.frequencies[k]));
                }
                result.push_back((horner(weight.scalar.num) / d) *
                                 CMatrix::Identity(weight.dim, weight.dim));
            }
            return result;
        }
        case WeightSpec::Kind::RationalMatrix: {
            for (std::size_t k = 0; k < grid.size(); ++k) {
                const Complex pt = grid.point(k);
                CMatrix v(weight.dim, weight.dim);
                for (int r = 0; r < weight.dim; ++r) {
                    for (int c = 0; c < weight.dim; ++c) {
                        const auto& e = weight.entries[r][c];
                        auto horner = [&](const std::vector<double>& cf) {
                            Complex acc(0.0, 0.0);
                            for (auto it = cf.rbegin(); it != cf.rend(); ++it) acc = acc * pt + *it;
                            return acc;
                        };
                        const Complex d = horner(e.den);
                        if (std::abs(d) < 1e-300) {
                            throw EvaluationError("weight has a pole at omega = " +
                                                  fmt_double(grid.frequencies[k]));
                        }
                        v(r, c) = horner(e.num) / d;
                    }
                }
                result.push_back(std::move(v));
            }
            return result;
        }
        case WeightSpec::Kind::Tabulated: {
            if (weight.table.size() != grid.size()) {
                throw InputError("tabulated weight does not match grid size");
            }
            return weight.table;
        }
    }
    throw InputError("unknown weight kind");
}

void write_frs(std::ostream& os, const FrequencyResponseSet& frs) {
    frs.validate();
    os << "FRS " << frs.outputs << ' ' << frs.inputs << ' ' << frs.model_count() << ' ';
    if (frs.grid.domain == TimeDomain::Discrete) {
        os << "discrete " << fmt_double(frs.grid.sample_period);
    } else {
        os << "continuous";
    }
    os << '\n';
    for (const auto& model : frs.models) {
        for (std::size_t k = 0; k < frs.grid.size(); ++k) {
            os << fmt_double(frs.grid.frequencies[k]);
            const CMatrix& g = model[k];
            for (int r = 0; r < g.rows(); ++r) {
                for (int c = 0; c < g.cols(); ++c) {
                    os << ' ' << fmt_double(g(r, c).real()) << ' ' << fmt_double(g(r, c).imag());
                }
            }
            os << '\n';
        }
    }
}

void write_frs_file(const std::string& path, const FrequencyResponseSet& frs) {
    std::ofstream os(path);
    if (!os) throw InputError("cannot open " + path + " for writing");
    write_frs(os, frs);
}

FrequencyResponseSet read_frs(std::istream& is) {
    std::string tag;
    if (!(is >> tag) || tag != "FRS") throw InputError("not an FRS file (missing FRS header)");
    int n = 0, m = 0, q = 0;
    std::string domain;
    if (!(is >> n >> m >> q >> domain)) throw InputError("malformed FRS header");
    if (n < 1 || m < 1 || q < 1) throw InputError("FRS header dimensions must be positive");

    FrequencyResponseSet frs;
    frs.outputs = n;
    frs.inputs = m;
    if (domain == "discrete") {
        frs.grid.domain = TimeDomain::Discrete;
        if (!(is >> frs.grid.sample_period) || frs.grid.sample_period <= 0.0) {
            throw InputError("discrete FRS header requires Ts > 0");
        }
    } else if (domain == "continuous") {
        frs.grid.domain = TimeDomain::Continuous;
    } else {
        throw InputError("FRS header domain must be 'continuous' or 'discrete'");
    }

    // Frequencies are strictly increasing within a model, so a drop in omega
    // marks the start of the next model's records.
    std::vector<double> all_freqs;
    std::vector<CMatrix> all_mats;
    double w;
    while (is >> w) {
        CMatrix g(n, m);
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < m; ++c) {
                double re, im;
                if (!(is >> re >> im)) throw InputError("truncated FRS record");
                g(r, c) = Complex(re, im);
            }
        }
        all_freqs.push_back(w);
        all_mats.push_back(std::move(g));
    }
    if (all_freqs.empty()) throw InputError("FRS file contains no records");
    if (all_freqs.size() % q != 0) throw InputError("FRS record count is not a multiple of q");
    const std::size_t N = all_freqs.size() / q;
    std::vector<double> first_freqs(all_freqs.begin(), all_freqs.begin() + N);
    frs.models.resize(q);
    for (int i = 0; i < q; ++i) {
        for (std::size_t k = 0; k < N; ++k) {
            if (all_freqs[i * N + k] != first_freqs[k]) {
                throw InputError("FRS models do not share the same grid");
            }
            frs.models[i].push_back(std::move(all_mats[i * N + k]));
        }
    }
    frs.grid.frequencies = first_freqs;
    frs.grid.span_lo = first_freqs.front();
    frs.grid.span_hi = first_freqs.back();
    frs.unstable_pole_count.assign(q, 0);
    frs.validate();
    return frs;
}

FrequencyResponseSet read_frs_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw InputError("cannot open " + path);
    return read_frs(is);
}

void write_experiment(std::ostream& os, const ExperimentRecord& rec) {
    rec.validate();
    const int n = rec.n_outputs();
    const int m = rec.n_inputs();
    os << "EXP " << n << ' ' << m << ' ' << rec.length() << ' ' << fmt_double(rec.sample_period)
       << '\n';
    for (int k = 0; k < rec.length(); ++k) {
        bool first = true;
        for (int r = 0; r < m; ++r) {
            for (int c = 0; c < m; ++c) {
                os << (first ? "" : " ") << fmt_double(rec.inputs[k](r, c));
                first = false;
            }
        }
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < m; ++c) {
                os << ' ' << fmt_double(rec.outputs[k](r, c));
            }
        }
        os << '\n';
    }
}

void write_experiment_file(const std::string& path, const ExperimentRecord& rec) {
    std::ofstream os(path);
    if (!os) throw InputError("cannot open " + path + " for writing");
    write_experiment(os, rec);
}

ExperimentRecord read_experiment(std::istream& is) {
    std::string tag;
    if (!(is >> tag) || tag != "EXP") throw InputError("not an EXP file (missing EXP header)");
    int n = 0, m = 0, N = 0;
    double ts = 0.0;
    if (!(is >> n >> m >> N >> ts)) throw InputError("malformed EXP header");
    if (n < 1 || m < 1 || N < 1 || ts <= 0.0) throw InputError("EXP header values out of range");

    ExperimentRecord rec;
    rec.sample_period = ts;
    rec.inputs.reserve(N);
    rec.outputs.reserve(N);
    for (int k = 0; k < N; ++k) {
        Matrix u(m, m), y(n, m);
        for (int r = 0; r < m; ++r) {
            for (int c = 0; c < m; ++c) {
                if (!(is >> u(r, c))) throw InputError("truncated EXP record");
            }
        }
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < m; ++c) {
                if (!(is >> y(r, c))) throw InputError("truncated EXP record");
            }
        }
        rec.inputs.push_back(std::move(u));
        rec.outputs.push_back(std::move(y));
    }
    rec.validate();
    return rec;
}

ExperimentRecord read_experiment_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw InputError("cannot open " + path);
    return read_experiment(is);
}

}  // namespace fdsyn
