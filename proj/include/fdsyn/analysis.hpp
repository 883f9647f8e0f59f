#pragma once

#include <string>
#include <vector>

#include "fdsyn/controller.hpp"

namespace fdsyn {

// Determinant of a polynomial matrix by evaluation at roots of unity and
// inverse DFT; returns ascending real coefficients.
std::vector<double> polymat_determinant(const MatrixPolynomial& mp);

// Roots via the companion matrix of the (trimmed) polynomial.
std::vector<Complex> polynomial_roots(const std::vector<double>& coeffs);

// Roots strictly outside the stability boundary: |r| > 1 for 'z', Re r > 0
// for 's', with a relative tolerance band treated as "on the boundary".
int count_unstable_roots(const std::vector<Complex>& roots, char variable, double band = 1e-7);

struct BoundaryRoot {
    double omega = 0.0;  // rad/s (needs Ts for 'z'), nonnegative representative
    int multiplicity = 0;
};

// Boundary roots of det(mp): unit-circle roots for 'z' (omega = arg/Ts),
// imaginary-axis roots for 's' (omega = Im).
std::vector<BoundaryRoot> boundary_roots(const MatrixPolynomial& mp, double sample_period,
                                         double band = 1e-6);

// Winding number of a closed-contour sample sequence about the origin.
// Throws EvaluationError when a value sits on the origin or a phase step
// reaches pi/2 (insufficient resolution).
int winding_number(const std::vector<Complex>& values, double clearance_rel = 1e-9);

enum class Verdict { Stable, Unstable, Inconclusive };

struct ModelCertificate {
    int model = 0;
    int winding = 0;
    int required = 0;
    double clearance = 0.0;  // min |det(I + G K)| over the sweep
    Verdict verdict = Verdict::Inconclusive;
    std::string note;
};

struct StabilityCertificate {
    std::vector<ModelCertificate> models;
    int det_y_degree = 0;   // delta, order of det(Y Fy)
    int n_k = 0;            // roots of det(Y Fy) outside the stability boundary
    bool conditions_ok = false;  // structural conditions of the stability theorem
    std::vector<std::string> notes;

    bool verdict() const;
};

// Winding-number certificate on a densified grid (linear interpolation of G
// between measured points); never returns "stable" when the sweep is
// ambiguous.
StabilityCertificate certify_stability(const FrequencyResponseSet& frs, const Controller& k,
                                       int dense_factor = 10);

enum class StackKind {
    Mixed,                 // [W1 S; W2 K S]
    WeightedSensitivity,   // W1 S
    WeightedControl,       // W2 K S
    WeightedComplSens,     // W1 T
    RobustLoop,            // W2 K S W1
    LoopMismatch,          // G K - Ld   (pass Ld in the W1 slot)
};

double achieved_hinf(const FrequencyResponseSet& frs, const Controller& k, const WeightSpec& w1,
                     const WeightSpec& w2, StackKind stack, int dense_factor = 10);

// (Ts/pi) int tr(W1 S S* W1*) dw over [0, pi/Ts] for discrete sets,
// (1/pi) over [0, w_max] for continuous ones, trapezoidal on the dense grid
// with flat extension to the interval ends.
double achieved_h2(const FrequencyResponseSet& frs, const Controller& k, const WeightSpec& w1,
                   int dense_factor = 10);

struct ClosedLoopPoint {
    double omega = 0.0;
    double sigma_S = 0.0, sigma_T = 0.0, sigma_U = 0.0, sigma_L = 0.0;
};

std::vector<ClosedLoopPoint> closed_loop_sweep(const FrequencyResponseSet& frs,
                                               const Controller& k, int model,
                                               int dense_factor = 10);

FrequencyGrid densify_grid(const FrequencyGrid& grid, int factor);

// Linear interpolation of a model's response at omega (clamped to the grid).
CMatrix interpolate_response(const FrequencyResponseSet& frs, int model, double omega);

// Weight evaluated on an arbitrary grid; tabulated weights are interpolated
// from their base grid.
std::vector<CMatrix> weight_on_grid(const WeightSpec& w, const FrequencyGrid& target,
                                    const FrequencyGrid& base);

// min over frequencies of min_i Re lambda_i(P* P_c): positive-real diagnostic
// for the linearized stability condition.  Reporting only.
double stability_margin_diagnostic(const FrequencyResponseSet& frs, const Controller& k,
                                   const Controller& kc);

std::string certificate_report(const StabilityCertificate& cert);

}  // namespace fdsyn
