#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fdsyn/analysis.hpp"
#include "fdsyn/sdp.hpp"

namespace fdsyn {

enum class QuadratureRule { Trapezoid, UniformSum };
enum class InitializerKind { EpsilonStatic, UserSupplied, RandomRestart };
enum class SynthesisStatus { Converged, MaxIterations, Infeasible, NumericalFailure };

struct SynthesisConfig {
    DesignSpec design;
    ControllerParametrization controller;

    double grid_min = 1e-2;
    double grid_max = 1e2;
    int grid_points = 100;
    std::vector<double> excluded;

    int max_iterations = 50;
    double stop_tol = 1e-4;       // relative objective change
    double stop_abs_tol = 1e-10;  // absolute change, for near-zero objectives
    double delta_feas = 1e-8;
    QuadratureRule quadrature = QuadratureRule::Trapezoid;
    InitializerKind initializer = InitializerKind::EpsilonStatic;
    std::optional<Controller> initial_controller;
    int dense_factor = 10;
    unsigned seed = 0;
    int random_trials = 8;
    double solver_tol = 1e-8;
    int solver_max_iterations = 100;
    std::vector<int> unstable_pole_count;  // per model, overrides the FRS default of zero

    void validate() const;
};

struct IterationRecord {
    int iteration = 0;
    double objective = 0.0;
    SdpStatus status = SdpStatus::NumericalFailure;
    double worst_residual = 0.0;  // min block eigenvalue at the previous solution
    Controller controller;
};

struct SynthesisReport {
    SynthesisStatus status = SynthesisStatus::NumericalFailure;
    Controller controller;
    std::vector<IterationRecord> trace;
    int relaxation_rounds = 0;
    StabilityCertificate certificate;
    double final_objective = 0.0;
    double achieved_norm = 0.0;  // H-infinity norm or squared H2 norm
    std::vector<std::vector<Matrix>> gamma_values;  // [q][N], H2 objectives only
    std::string diagnostics;
};

// X_c = eps * I (padded m x n), det(Y_c) roots at the origin (z^p, or poles
// at -1 for continuous designs); eps shrinks by decades until the Nyquist
// certificate accepts the closed loop for every model.
Controller init_epsilon_static(const FrequencyResponseSet& frs,
                               const ControllerParametrization& cp, double eps = 1e-2);

// Multi-start coordinate search maximizing min_w Re det(I + G X Y^{-1});
// returns every iterate above -1 that also passes the Nyquist certificate.
std::vector<Controller> reinit_random(const FrequencyResponseSet& frs,
                                      const ControllerParametrization& cp, int trials,
                                      unsigned seed = 0);

// Quadrature-weighted sum of trace(Gamma_k) over models and grid frequencies.
double h2_objective(const std::vector<std::vector<Matrix>>& gammas, const FrequencyGrid& grid,
                    QuadratureRule rule = QuadratureRule::Trapezoid);

std::vector<double> quadrature_weights(const FrequencyGrid& grid, QuadratureRule rule);

SynthesisReport run_synthesis(const SynthesisConfig& cfg, const FrequencyResponseSet& frs);

// Resample a measured set onto a synthesis grid by linear interpolation.
FrequencyResponseSet resample(const FrequencyResponseSet& frs, const FrequencyGrid& grid);

// JSON config document mirroring SynthesisConfig field for field; unknown
// keys are rejected.
SynthesisConfig load_config(const std::string& path);
SynthesisConfig parse_config(const std::string& text);
std::string config_schema();

}  // namespace fdsyn
