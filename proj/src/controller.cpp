#include "fdsyn/controller.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace fdsyn {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

CMatrix MatrixPolynomial::eval(Complex point) const {
    if (coeffs.empty()) throw InputError("cannot evaluate empty matrix polynomial");
    CMatrix acc = coeffs.back().cast<Complex>();
    for (int d = int(coeffs.size()) - 2; d >= 0; --d) {
        acc = acc * point + coeffs[d].cast<Complex>();
    }
    return acc;
}

MatrixPolynomial MatrixPolynomial::constant(Matrix value, char variable) {
    MatrixPolynomial mp;
    mp.variable = variable;
    mp.coeffs.push_back(std::move(value));
    return mp;
}

MatrixPolynomial MatrixPolynomial::ones(int rows, int cols, char variable) {
    return constant(Matrix::Ones(rows, cols), variable);
}

MatrixPolynomial MatrixPolynomial::identity(int dim, char variable) {
    return constant(Matrix::Identity(dim, dim), variable);
}

MatrixPolynomial MatrixPolynomial::entrywise_product(const MatrixPolynomial& other) const {
    validate();
    other.validate();
    if (rows() != other.rows() || cols() != other.cols()) {
        throw InputError("entrywise product requires matching shapes");
    }
    MatrixPolynomial out;
    out.variable = variable;
    const int deg = degree() + other.degree();
    out.coeffs.assign(deg + 1, Matrix::Zero(rows(), cols()));
    for (std::size_t a = 0; a < coeffs.size(); ++a) {
        for (std::size_t b = 0; b < other.coeffs.size(); ++b) {
            out.coeffs[a + b].array() += coeffs[a].array() * other.coeffs[b].array();
        }
    }
    return out;
}

MatrixPolynomial MatrixPolynomial::scaled_by_scalar_poly(const std::vector<double>& poly) const {
    validate();
    if (poly.empty()) throw InputError("scalar polynomial must be nonempty");
    MatrixPolynomial out;
    out.variable = variable;
    out.coeffs.assign(degree() + int(poly.size()), Matrix::Zero(rows(), cols()));
    for (std::size_t a = 0; a < coeffs.size(); ++a) {
        for (std::size_t b = 0; b < poly.size(); ++b) {
            out.coeffs[a + b] += coeffs[a] * poly[b];
        }
    }
    return out;
}

void MatrixPolynomial::validate() const {
    if (coeffs.empty()) throw InputError("matrix polynomial needs at least one coefficient");
    for (const auto& c : coeffs) {
        if (c.rows() != coeffs.front().rows() || c.cols() != coeffs.front().cols()) {
            throw InputError("matrix polynomial coefficients must share a shape");
        }
    }
    if (variable != 's' && variable != 'z') {
        throw InputError("matrix polynomial variable must be 's' or 'z'");
    }
}

BoolMatrix make_mask(MaskKind kind, int rows, int cols) {
    BoolMatrix mask(rows, cols);
    switch (kind) {
        case MaskKind::Full:
            mask.setConstant(true);
            break;
        case MaskKind::Diagonal:
            mask.setConstant(false);
            for (int i = 0; i < std::min(rows, cols); ++i) mask(i, i) = true;
            break;
        case MaskKind::Custom:
            mask.setConstant(true);
            break;
    }
    return mask;
}

ControllerParametrization ControllerParametrization::make(int outputs, int inputs, int degree,
                                                          char variable, MaskKind mask) {
    ControllerParametrization cp;
    cp.outputs = outputs;
    cp.inputs = inputs;
    cp.degree = degree;
    cp.variable = variable;
    cp.mask_X = make_mask(mask == MaskKind::Diagonal ? MaskKind::Full : mask, inputs, outputs);
    cp.mask_Y = make_mask(mask, outputs, outputs);
    cp.Fx = MatrixPolynomial::ones(inputs, outputs, variable);
    cp.Fy = MatrixPolynomial::ones(outputs, outputs, variable);
    cp.validate();
    return cp;
}

void ControllerParametrization::validate() const {
    if (outputs < 1 || inputs < 1) throw InputError("controller needs positive dimensions");
    if (degree < 0) throw InputError("controller degree must be nonnegative");
    if (variable != 's' && variable != 'z') throw InputError("controller variable must be 's' or 'z'");
    if (mask_X.rows() != inputs || mask_X.cols() != outputs) {
        throw InputError("mask_X must be m x n");
    }
    if (mask_Y.rows() != outputs || mask_Y.cols() != outputs) {
        throw InputError("mask_Y must be n x n");
    }
    for (int i = 0; i < outputs; ++i) {
        if (!mask_Y(i, i)) throw InputError("mask_Y must keep the diagonal free (leading I)");
    }
    Fx.validate();
    Fy.validate();
    if (Fx.rows() != inputs || Fx.cols() != outputs) throw InputError("Fx must be m x n");
    if (Fy.rows() != outputs || Fy.cols() != outputs) throw InputError("Fy must be n x n");
}

int ControllerParametrization::free_x_count() const {
    return int(mask_X.count()) * (degree + 1);
}

int ControllerParametrization::free_y_count() const {
    return int(mask_Y.count()) * degree;
}

CMatrix Controller::eval_X(Complex point) const {
    return X.eval(point).cwiseProduct(Fx.eval(point));
}

CMatrix Controller::eval_Y(Complex point) const {
    return Y.eval(point).cwiseProduct(Fy.eval(point));
}

namespace {

double max_coeff_abs(const MatrixPolynomial& mp) {
    double m = 0.0;
    for (const auto& c : mp.coeffs) m = std::max(m, c.cwiseAbs().maxCoeff());
    return m;
}

// Determinant test against the polynomial's own coefficient scale;
// FullPivLU's relative pivot ratio is vacuous for 1x1 blocks.
bool safely_invertible(const CMatrix& m, double det_scale, CMatrix* inverse) {
    Eigen::FullPivLU<CMatrix> lu(m);
    if (!lu.isInvertible() || std::abs(lu.determinant()) < 1e-12 * det_scale) return false;
    if (inverse) *inverse = lu.inverse();
    return true;
}

double denominator_scale(const Controller& k) {
    const double per_entry = std::max(
        1e-30, max_coeff_abs(k.Y) * max_coeff_abs(k.Fy) * double(k.Y.degree() + 1));
    return std::pow(std::max(1.0, per_entry), k.outputs());
}

}  // namespace

CMatrix Controller::response(Complex point) const {
    CMatrix yinv;
    if (!safely_invertible(eval_Y(point), denominator_scale(*this), &yinv)) {
        throw EvaluationError("controller denominator Y is singular at evaluation point");
    }
    return eval_X(point) * yinv;
}

void Controller::validate() const {
    X.validate();
    Y.validate();
    Fx.validate();
    Fy.validate();
    if (Y.rows() != Y.cols()) throw InputError("Y must be square");
    if (X.cols() != Y.rows()) throw InputError("X and Y shapes are inconsistent");
    if (Fx.rows() != X.rows() || Fx.cols() != X.cols()) throw InputError("Fx shape mismatch");
    if (Fy.rows() != Y.rows() || Fy.cols() != Y.cols()) throw InputError("Fy shape mismatch");
    if (X.variable != Y.variable) throw InputError("X and Y must share a variable");
    const Matrix& lead = Y.coeffs.back();
    if (!lead.isApprox(Matrix::Identity(Y.rows(), Y.cols()), 0.0)) {
        throw InputError("leading coefficient of Y must be the identity");
    }
}

std::vector<CMatrix> evaluate_poly(const MatrixPolynomial& mp, const FrequencyGrid& grid) {
    mp.validate();
    if (mp.variable == 'z' && grid.domain != TimeDomain::Discrete) {
        throw InputError("z-domain polynomial requires a discrete grid");
    }
    if (mp.variable == 's' && grid.domain != TimeDomain::Continuous) {
        throw InputError("s-domain polynomial requires a continuous grid");
    }
    std::vector<CMatrix> out;
    out.reserve(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) out.push_back(mp.eval(grid.point(k)));
    return out;
}

std::vector<CMatrix> controller_frequency_response(const Controller& k, const FrequencyGrid& grid) {
    k.validate();
    std::vector<CMatrix> out;
    out.reserve(grid.size());
    const double scale = denominator_scale(k);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const Complex pt = grid.point(i);
        CMatrix yinv;
        if (!safely_invertible(k.eval_Y(pt), scale, &yinv)) {
            throw EvaluationError("det(Y) = 0 at omega = " + fmt_double(grid.frequencies[i]));
        }
        out.push_back(k.eval_X(pt) * yinv);
    }
    return out;
}

Controller augment_order(const Controller& iterate, int target_degree) {
    iterate.validate();
    const int current = iterate.order();
    if (target_degree < current) {
        throw InputError("augment_order cannot reduce the controller degree");
    }
    if (target_degree == current) return iterate;

    const int d = target_degree - current;
    // z^d keeps discrete det roots at the origin; (s+1)^d keeps continuous
    // ones off the boundary.  Either way K = X Y^{-1} is unchanged.
    std::vector<double> scalar;
    if (iterate.variable() == 'z') {
        scalar.assign(d + 1, 0.0);
        scalar[d] = 1.0;
    } else {
        scalar.assign(d + 1, 0.0);
        for (int i = 0; i <= d; ++i) {
            double binom = 1.0;
            for (int j = 0; j < i; ++j) binom = binom * double(d - j) / double(j + 1);
            scalar[i] = binom;
        }
    }
    Controller out = iterate;
    out.X = iterate.X.scaled_by_scalar_poly(scalar);
    out.Y = iterate.Y.scaled_by_scalar_poly(scalar);
    return out;
}

namespace {

void write_poly_entry_list(std::ostream& os, const MatrixPolynomial& mp) {
    for (int r = 0; r < mp.rows(); ++r) {
        for (int c = 0; c < mp.cols(); ++c) {
            os << mp.degree();
            for (int d = 0; d <= mp.degree(); ++d) os << ' ' << fmt_double(mp.coeffs[d](r, c));
            os << '\n';
        }
    }
}

MatrixPolynomial read_poly_entry_list(std::istream& is, int rows, int cols, char variable) {
    std::vector<std::vector<double>> entries(rows * cols);
    int max_deg = 0;
    for (int i = 0; i < rows * cols; ++i) {
        int deg;
        if (!(is >> deg) || deg < 0) throw InputError("malformed polynomial entry in CTRL file");
        entries[i].resize(deg + 1);
        for (int d = 0; d <= deg; ++d) {
            if (!(is >> entries[i][d])) throw InputError("truncated polynomial entry in CTRL file");
        }
        max_deg = std::max(max_deg, deg);
    }
    MatrixPolynomial mp;
    mp.variable = variable;
    mp.coeffs.assign(max_deg + 1, Matrix::Zero(rows, cols));
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const auto& e = entries[r * cols + c];
            for (std::size_t d = 0; d < e.size(); ++d) mp.coeffs[d](r, c) = e[d];
        }
    }
    return mp;
}

void write_coeff_matrices(std::ostream& os, const MatrixPolynomial& mp) {
    for (const auto& coeff : mp.coeffs) {
        for (int r = 0; r < coeff.rows(); ++r) {
            for (int c = 0; c < coeff.cols(); ++c) {
                os << (c == 0 ? "" : " ") << fmt_double(coeff(r, c));
            }
            os << '\n';
        }
    }
}

MatrixPolynomial read_coeff_matrices(std::istream& is, int degree, int rows, int cols,
                                     char variable) {
    MatrixPolynomial mp;
    mp.variable = variable;
    for (int d = 0; d <= degree; ++d) {
        Matrix coeff(rows, cols);
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) {
                if (!(is >> coeff(r, c))) throw InputError("truncated coefficient in CTRL file");
            }
        }
        mp.coeffs.push_back(std::move(coeff));
    }
    return mp;
}

}  // namespace

void write_controller(std::ostream& os, const Controller& k) {
    k.validate();
    const int m = k.inputs();
    const int n = k.outputs();
    os << "CTRL " << m << ' ' << n << ' ' << k.order() << ' ' << k.variable() << '\n';
    write_coeff_matrices(os, k.X);
    write_coeff_matrices(os, k.Y);
    write_poly_entry_list(os, k.Fx);
    write_poly_entry_list(os, k.Fy);
}

void write_controller_file(const std::string& path, const Controller& k) {
    std::ofstream os(path);
    if (!os) throw InputError("cannot open " + path + " for writing");
    write_controller(os, k);
}

Controller read_controller(std::istream& is) {
    std::string tag;
    if (!(is >> tag) || tag != "CTRL") throw InputError("not a CTRL file (missing CTRL header)");
    int m = 0, n = 0, p = 0;
    char variable = 's';
    if (!(is >> m >> n >> p >> variable)) throw InputError("malformed CTRL header");
    if (m < 1 || n < 1 || p < 0 || (variable != 's' && variable != 'z')) {
        throw InputError("CTRL header values out of range");
    }
    Controller k;
    k.X = read_coeff_matrices(is, p, m, n, variable);
    k.Y = read_coeff_matrices(is, p, n, n, variable);
    k.Fx = read_poly_entry_list(is, m, n, variable);
    k.Fy = read_poly_entry_list(is, n, n, variable);
    k.validate();
    return k;
}

Controller read_controller_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw InputError("cannot open " + path);
    return read_controller(is);
}

}  // namespace fdsyn
