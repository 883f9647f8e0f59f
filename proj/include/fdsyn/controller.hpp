#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "fdsyn/freqdata.hpp"

namespace fdsyn {

using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Real-coefficient polynomial matrix, degree-ascending coefficients.
struct MatrixPolynomial {
    std::vector<Matrix> coeffs;
    char variable = 's';  // 's' or 'z'

    int rows() const { return coeffs.empty() ? 0 : int(coeffs.front().rows()); }
    int cols() const { return coeffs.empty() ? 0 : int(coeffs.front().cols()); }
    int degree() const { return coeffs.empty() ? -1 : int(coeffs.size()) - 1; }

    CMatrix eval(Complex point) const;  // Horner

    static MatrixPolynomial constant(Matrix value, char variable);
    static MatrixPolynomial ones(int rows, int cols, char variable);
    static MatrixPolynomial identity(int dim, char variable);

    // Entry-wise product with another polynomial matrix of the same shape
    // (coefficient convolution per entry).
    MatrixPolynomial entrywise_product(const MatrixPolynomial& other) const;

    // Multiply every entry by a monic scalar polynomial (ascending coeffs).
    MatrixPolynomial scaled_by_scalar_poly(const std::vector<double>& poly) const;

    void validate() const;
};

enum class MaskKind { Full, Diagonal, Custom };

BoolMatrix make_mask(MaskKind kind, int rows, int cols);

/// Controller structure: shapes, degree, structural masks and fixed factors
/// of K = X Y^{-1}.  X is m x n, Y is n x n with leading coefficient I.
struct ControllerParametrization {
    int outputs = 0;  // n (plant outputs = controller inputs)
    int inputs = 0;   // m (plant inputs = controller outputs)
    int degree = 0;   // p
    char variable = 's';
    BoolMatrix mask_X;        // m x n, true = free entry
    BoolMatrix mask_Y;        // n x n
    MatrixPolynomial Fx;      // m x n fixed factor
    MatrixPolynomial Fy;      // n x n fixed factor
    std::vector<double> boundary_poles;  // B_y: frequencies where det(Fy) = 0 on the boundary

    static ControllerParametrization make(int outputs, int inputs, int degree, char variable,
                                          MaskKind mask = MaskKind::Full);

    void validate() const;
    int free_x_count() const;  // masked-in entries per coefficient x (degree + 1)
    int free_y_count() const;  // masked-in entries per coefficient x degree
};

/// Controller value: free-part coefficients plus the fixed factors needed to
/// evaluate it.  Also serves as the linearization iterate (X_c, Y_c).
struct Controller {
    MatrixPolynomial X;   // m x n
    MatrixPolynomial Y;   // n x n, leading coefficient I
    MatrixPolynomial Fx;  // m x n
    MatrixPolynomial Fy;  // n x n

    int outputs() const { return Y.rows(); }
    int inputs() const { return X.rows(); }
    int order() const { return X.degree(); }
    char variable() const { return X.variable; }

    CMatrix eval_X(Complex point) const;  // (sum X_d t^d) o Fx(t)
    CMatrix eval_Y(Complex point) const;  // (sum Y_d t^d) o Fy(t)
    CMatrix response(Complex point) const;  // K = Xe Ye^{-1}

    MatrixPolynomial composite_X() const { return X.entrywise_product(Fx); }
    MatrixPolynomial composite_Y() const { return Y.entrywise_product(Fy); }

    void validate() const;
};

using ControllerIterate = Controller;

std::vector<CMatrix> evaluate_poly(const MatrixPolynomial& mp, const FrequencyGrid& grid);

// K(point) per grid frequency; throws EvaluationError on singular Y.
std::vector<CMatrix> controller_frequency_response(const Controller& k, const FrequencyGrid& grid);

// Multiply X_c and Y_c by the same monic scalar polynomial (z^d, or (s+1)^d
// for continuous controllers) so the iterate reaches the target degree while
// K_c is unchanged as a transfer function.
Controller augment_order(const Controller& iterate, int target_degree);

// CTRL file: "CTRL m n p {s|z}", X and Y coefficient matrices degree-ascending
// row-major, then Fx and Fy as per-entry polynomial coefficient lists.
void write_controller(std::ostream& os, const Controller& k);
void write_controller_file(const std::string& path, const Controller& k);
Controller read_controller(std::istream& is);
Controller read_controller_file(const std::string& path);

}  // namespace fdsyn
