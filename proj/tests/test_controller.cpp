#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "fdsyn/controller.hpp"
#include "test_util.hpp"

using namespace fdsyn;
using std::numbers::pi;

namespace {

MatrixPolynomial scalar_poly(std::vector<double> coeffs, char var) {
    MatrixPolynomial mp;
    mp.variable = var;
    for (double c : coeffs) mp.coeffs.push_back(Matrix::Constant(1, 1, c));
    return mp;
}

Controller epsilon_integrator(double eps) {
    // K = eps / (z^2 (z - 1)) as a 1x1 controller with p = 3.
    Controller k;
    k.X.variable = 'z';
    k.X.coeffs.assign(4, Matrix::Zero(1, 1));
    k.X.coeffs[0](0, 0) = eps;
    k.Y = scalar_poly({0.0, 0.0, -1.0, 1.0}, 'z');  // z^3 - z^2 = z^2 (z - 1)
    k.Fx = MatrixPolynomial::ones(1, 1, 'z');
    k.Fy = MatrixPolynomial::ones(1, 1, 'z');
    return k;
}

}  // namespace

TEST_CASE("polynomial evaluation hits the integrator root") {
    MatrixPolynomial y;
    y.variable = 'z';
    y.coeffs = {-Matrix::Identity(2, 2), Matrix::Identity(2, 2)};  // I z - I
    CHECK(y.eval(Complex(1.0, 0.0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("degree zero polynomial is constant") {
    std::mt19937 rng(2);
    const Matrix x0 = testutil::random_real(2, 3, rng);
    const auto mp = MatrixPolynomial::constant(x0, 's');
    CHECK(mp.eval(Complex(0.0, 17.0)) == (CMatrix)x0.cast<Complex>());
}

TEST_CASE("z^2 (z-1) at e^{j pi/2}") {
    const auto y = scalar_poly({0.0, 0.0, -1.0, 1.0}, 'z');
    const Complex z = std::exp(Complex(0.0, pi / 2.0));  // j
    const Complex expected = z * z * (z - 1.0);           // (1 - j) by direct arithmetic
    CHECK(std::abs(y.eval(z)(0, 0) - expected) < 1e-15);
    CHECK(std::abs(expected - Complex(1.0, -1.0)) < 1e-15);
}

TEST_CASE("epsilon over integrator frequency response") {
    const double eps = 1e-6;
    const Controller k = epsilon_integrator(eps);
    FrequencyGrid grid;
    grid.domain = TimeDomain::Discrete;
    grid.sample_period = 1.0;
    grid.frequencies = {0.3, 1.0, 2.0};
    grid.span_lo = 0.3;
    grid.span_hi = 2.0;
    const auto resp = controller_frequency_response(k, grid);
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const Complex z = grid.point(j);
        const Complex expected = eps / (z * z * (z - 1.0));
        CHECK(std::abs(resp[j](0, 0) - expected) <= 1e-12 * std::abs(expected));
    }
}

TEST_CASE("diagonal Y inverts element-wise") {
    std::mt19937 rng(4);
    Controller k;
    k.X.variable = 'z';
    k.X.coeffs = {testutil::random_real(2, 2, rng), testutil::random_real(2, 2, rng)};
    // Y = diag(y(z)) with identical entries y(z) = z + 0.3
    k.Y.variable = 'z';
    k.Y.coeffs = {0.3 * Matrix::Identity(2, 2), Matrix::Identity(2, 2)};
    k.Fx = MatrixPolynomial::ones(2, 2, 'z');
    k.Fy = MatrixPolynomial::ones(2, 2, 'z');
    const Complex z = std::exp(Complex(0.0, 0.7));
    const CMatrix resp = k.response(z);
    const CMatrix direct = k.eval_X(z) / (z + 0.3);
    CHECK((resp - direct).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("scalar controller at z = 1") {
    Controller k;
    k.X = scalar_poly({1.0, 0.0}, 'z');
    k.Y = scalar_poly({-0.5, 1.0}, 'z');  // z - 0.5
    k.Fx = MatrixPolynomial::ones(1, 1, 'z');
    k.Fy = MatrixPolynomial::ones(1, 1, 'z');
    CHECK(std::abs(k.response(Complex(1.0, 0.0))(0, 0) - 2.0) < 1e-14);
}

TEST_CASE("augment_order examples") {
    std::mt19937 rng(8);
    const Matrix gain = testutil::random_real(2, 2, rng);

    SUBCASE("discrete static gain to p = 2") {
        Controller k;
        k.X = MatrixPolynomial::constant(gain, 'z');
        k.Y = MatrixPolynomial::identity(2, 'z');
        k.Fx = MatrixPolynomial::ones(2, 2, 'z');
        k.Fy = MatrixPolynomial::ones(2, 2, 'z');
        const Controller a = augment_order(k, 2);
        REQUIRE(a.order() == 2);
        CHECK(a.X.coeffs[0].isZero(0.0));
        CHECK(a.X.coeffs[1].isZero(0.0));
        CHECK(a.X.coeffs[2] == gain);
        CHECK(a.Y.coeffs[2] == Matrix::Identity(2, 2));
    }
    SUBCASE("continuous static gain to p = 2 uses (s+1)^2") {
        Controller k;
        k.X = MatrixPolynomial::constant(gain, 's');
        k.Y = MatrixPolynomial::identity(2, 's');
        k.Fx = MatrixPolynomial::ones(2, 2, 's');
        k.Fy = MatrixPolynomial::ones(2, 2, 's');
        const Controller a = augment_order(k, 2);
        REQUIRE(a.order() == 2);
        CHECK(a.X.coeffs[0] == gain);
        CHECK(a.X.coeffs[1] == (Matrix)(2.0 * gain));
        CHECK(a.X.coeffs[2] == gain);
        CHECK(a.Y.coeffs[0] == Matrix::Identity(2, 2));
        CHECK(a.Y.coeffs[1] == (Matrix)(2.0 * Matrix::Identity(2, 2)));
    }
    SUBCASE("same target degree is the identity") {
        Controller k = epsilon_integrator(0.5);
        const Controller a = augment_order(k, 3);
        CHECK(a.X.coeffs == k.X.coeffs);
        CHECK(a.Y.coeffs == k.Y.coeffs);
    }
}

TEST_CASE("augment_order preserves the frequency response") {
    std::mt19937 rng(13);
    Controller k;
    k.X.variable = 'z';
    k.X.coeffs = {testutil::random_real(2, 3, rng), testutil::random_real(2, 3, rng)};
    k.Y.variable = 'z';
    k.Y.coeffs = {0.2 * testutil::random_real(3, 3, rng), Matrix::Identity(3, 3)};
    k.Fx = MatrixPolynomial::ones(2, 3, 'z');
    k.Fy = MatrixPolynomial::ones(3, 3, 'z');
    const Controller a = augment_order(k, 4);
    std::uniform_real_distribution<double> dist(1e-2, pi);
    for (int t = 0; t < 50; ++t) {
        const Complex z = std::exp(Complex(0.0, dist(rng)));
        const CMatrix r0 = k.response(z);
        const CMatrix r1 = a.response(z);
        CHECK((r0 - r1).cwiseAbs().maxCoeff() <= 1e-10 * r0.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("entrywise fixed factor is applied at evaluation") {
    Controller k;
    k.X = scalar_poly({1.0}, 'z');
    k.Y = scalar_poly({1.0}, 'z');          // Y = 1
    k.Fx = scalar_poly({0.0, 1.0}, 'z');    // Fx = z
    k.Fy = scalar_poly({-1.0, 1.0}, 'z');   // Fy = z - 1
    const Complex z(0.5, 0.25);
    CHECK(std::abs(k.eval_X(z)(0, 0) - z) < 1e-15);
    CHECK(std::abs(k.eval_Y(z)(0, 0) - (z - 1.0)) < 1e-15);
    // masked product: a zero coefficient times a fixed factor stays zero
    Controller k2 = k;
    k2.X = scalar_poly({0.0}, 'z');
    CHECK(k2.eval_X(z)(0, 0) == Complex(0.0, 0.0));
}

TEST_CASE("controller file round-trip is exact") {
    std::mt19937 rng(21);
    Controller k;
    k.X.variable = 's';
    k.X.coeffs = {testutil::random_real(2, 3, rng), testutil::random_real(2, 3, rng),
                  testutil::random_real(2, 3, rng)};
    k.Y.variable = 's';
    k.Y.coeffs = {testutil::random_real(3, 3, rng), testutil::random_real(3, 3, rng),
                  Matrix::Identity(3, 3)};
    k.Fx = MatrixPolynomial::ones(2, 3, 's');
    k.Fy.variable = 's';
    k.Fy.coeffs = {testutil::random_real(3, 3, rng), testutil::random_real(3, 3, rng)};

    std::stringstream ss;
    write_controller(ss, k);
    const Controller back = read_controller(ss);
    REQUIRE(back.order() == 2);
    CHECK(back.variable() == 's');
    for (int d = 0; d <= 2; ++d) {
        CHECK(back.X.coeffs[d] == k.X.coeffs[d]);
        CHECK(back.Y.coeffs[d] == k.Y.coeffs[d]);
    }
    for (int d = 0; d <= k.Fy.degree(); ++d) CHECK(back.Fy.coeffs[d] == k.Fy.coeffs[d]);
}

TEST_CASE("leading Y coefficient must be the identity") {
    Controller k;
    k.X = scalar_poly({1.0, 1.0}, 'z');
    k.Y = scalar_poly({0.0, 2.0}, 'z');
    k.Fx = MatrixPolynomial::ones(1, 1, 'z');
    k.Fy = MatrixPolynomial::ones(1, 1, 'z');
    CHECK_THROWS_AS(k.validate(), InputError);
}

TEST_CASE("singular Y names the frequency") {
    Controller k = epsilon_integrator(1.0);
    FrequencyGrid grid;
    grid.domain = TimeDomain::Discrete;
    grid.sample_period = 1.0;
    grid.frequencies = {1e-13, 1.0};  // z ~ 1 makes z^2(z-1) vanish
    CHECK_THROWS_AS(controller_frequency_response(k, grid), EvaluationError);
}
