#pragma once

#include <complex>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fdsyn/errors.hpp"

namespace fdsyn {

using Complex = std::complex<double>;
using Matrix  = Eigen::MatrixXd;
using CMatrix = Eigen::MatrixXcd;
using Vector  = Eigen::VectorXd;

enum class TimeDomain { Continuous, Discrete };

/// A set of sampled frequencies on (0, pi/Ts], strictly increasing.
struct FrequencyGrid {
    std::vector<double> frequencies;  // rad/s
    TimeDomain domain = TimeDomain::Continuous;
    double sample_period = 0.0;  // Ts, meaningful for discrete grids
    std::vector<double> excluded;  // B_g U B_y, kept off the grid
    double span_lo = 0.0;  // design interval, used for quadrature weights
    double span_hi = 0.0;

    std::size_t size() const { return frequencies.size(); }

    // jw for continuous grids, e^{jwTs} for discrete ones
    Complex point(std::size_t k) const {
        const double w = frequencies[k];
        if (domain == TimeDomain::Discrete) {
            return std::exp(Complex(0.0, w * sample_period));
        }
        return Complex(0.0, w);
    }

    double nyquist() const;  // pi/Ts, throws for continuous grids
    void validate() const;
};

/// m experiments stacked column-wise: u(k) is m x m, y(k) is n x m.
struct ExperimentRecord {
    std::vector<Matrix> inputs;
    std::vector<Matrix> outputs;
    double sample_period = 0.0;

    int n_outputs() const { return outputs.empty() ? 0 : int(outputs.front().rows()); }
    int n_inputs() const { return inputs.empty() ? 0 : int(inputs.front().cols()); }
    int length() const { return int(inputs.size()); }
    void validate() const;
};

/// Multimodel set: q frequency-response matrix arrays on a shared grid.
struct FrequencyResponseSet {
    std::vector<std::vector<CMatrix>> models;  // [q][N], each n x m
    FrequencyGrid grid;
    int outputs = 0;
    int inputs = 0;
    std::vector<int> unstable_pole_count;  // N_G per model

    int model_count() const { return int(models.size()); }
    void validate() const;
};

struct RationalFunction {
    std::vector<double> num;  // ascending coefficients
    std::vector<double> den;

    Complex eval(Complex point) const;
};

/// Frequency-evaluable weight: scalar rational times identity, a full
/// rational matrix, or matrices tabulated on the working grid.
struct WeightSpec {
    enum class Kind { ScalarTimesIdentity, RationalMatrix, Tabulated };

    Kind kind = Kind::ScalarTimesIdentity;
    int dim = 1;
    RationalFunction scalar;                             // ScalarTimesIdentity
    std::vector<std::vector<RationalFunction>> entries;  // RationalMatrix
    std::vector<CMatrix> table;                          // Tabulated

    static WeightSpec constant(double value, int dim);
    static WeightSpec constant_matrix(const Matrix& value);
    static WeightSpec scalar_rational(std::vector<double> num, std::vector<double> den, int dim);
    static WeightSpec tabulated(std::vector<CMatrix> values);

    bool is_zero() const;
};

// G(e^{jw}) = [sum y(k) e^{-jwTsk}] [sum u(k) e^{-jwTsk}]^{-1} per grid point
std::vector<CMatrix> estimate_frequency_response(const ExperimentRecord& rec,
                                                 const FrequencyGrid& grid);

FrequencyGrid build_log_grid(double omega_min, double omega_max, int count,
                             const std::vector<double>& excluded = {},
                             TimeDomain domain = TimeDomain::Continuous,
                             double sample_period = 0.0);

std::vector<CMatrix> evaluate_weight(const WeightSpec& weight, const FrequencyGrid& grid);

// FRS file: "FRS n m q {continuous|discrete Ts}", then per model one record
// per grid frequency: omega followed by re/im pairs in row-major entry order.
void write_frs(std::ostream& os, const FrequencyResponseSet& frs);
void write_frs_file(const std::string& path, const FrequencyResponseSet& frs);
FrequencyResponseSet read_frs(std::istream& is);
FrequencyResponseSet read_frs_file(const std::string& path);

// EXP file: "EXP n m N Ts", then N records of m*m inputs and n*m outputs.
void write_experiment(std::ostream& os, const ExperimentRecord& rec);
void write_experiment_file(const std::string& path, const ExperimentRecord& rec);
ExperimentRecord read_experiment(std::istream& is);
ExperimentRecord read_experiment_file(const std::string& path);

}  // namespace fdsyn
