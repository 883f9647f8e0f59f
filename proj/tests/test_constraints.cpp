#include <doctest.h>

#include <random>

#include "fdsyn/constraints.hpp"
#include "test_util.hpp"

using namespace fdsyn;
using testutil::min_eig;

TEST_CASE("linearization is exact at the expansion point") {
    std::mt19937 rng(1);
    const CMatrix pc = testutil::random_complex(3, 3, rng);
    const CMatrix lin = linearize_quadratic(pc, pc);
    CHECK((lin - pc.adjoint() * pc).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("scalar linearization bounds the quadratic from below") {
    const CMatrix p = CMatrix::Constant(1, 1, Complex(2.0, 0.0));
    const CMatrix pc = CMatrix::Constant(1, 1, Complex(1.0, 0.0));
    const CMatrix lin = linearize_quadratic(p, pc);
    CHECK(lin(0, 0).real() == doctest::Approx(3.0));
    CHECK(lin(0, 0).real() <= 4.0);
}

TEST_CASE("linearization residual is positive semidefinite") {
    std::mt19937 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const CMatrix p = testutil::random_complex(3, 3, rng);
        const CMatrix pc = testutil::random_complex(3, 3, rng);
        const CMatrix residual = p.adjoint() * p - linearize_quadratic(p, pc);
        CHECK(min_eig(CMatrix(0.5 * (residual + residual.adjoint()))) >= -1e-12);
    }
}

TEST_CASE("quadratic lower bound holds for 1000 random pairs up to 5x5") {
    std::mt19937 rng(3);
    std::uniform_int_distribution<int> dims(1, 5);
    for (int trial = 0; trial < 1000; ++trial) {
        const int d = dims(rng);
        const CMatrix p = testutil::random_complex(d, d, rng, 2.0);
        const CMatrix pc = testutil::random_complex(d, d, rng, 2.0);
        const CMatrix residual = p.adjoint() * p - linearize_quadratic(p, pc);
        CHECK(min_eig(CMatrix(0.5 * (residual + residual.adjoint()))) >= -1e-10);
    }
}

TEST_CASE("open-loop mixed-sensitivity block is feasible iff gamma exceeds one") {
    const int n = 2, m = 2;
    const CMatrix g = CMatrix::Zero(n, m);
    const CMatrix id = CMatrix::Identity(n, n);
    const auto block = build_mixed_sens_block(g, id, id, id /* Pc = Yc = I */, Complex(0, 1), 0, 0);
    const CMatrix x = CMatrix::Zero(m, n);
    const Matrix gamma_dummy = Matrix::Zero(n, n);
    CHECK(min_eig(block.eval(x, id, 1.10, gamma_dummy)) > 0.0);
    CHECK(min_eig(block.eval(x, id, 0.90, gamma_dummy)) < 0.0);
}

TEST_CASE("mixed-sensitivity block uses the paper weights at omega = 0.01") {
    // W1(j 0.01) of (s+3)/(3s+0.3) has magnitude close to 10.
    const auto w1 = WeightSpec::scalar_rational({3.0, 1.0}, {0.3, 3.0}, 3);
    FrequencyGrid grid;
    grid.frequencies = {0.01};
    grid.span_lo = grid.span_hi = 0.01;
    const auto w1v = evaluate_weight(w1, grid)[0];
    CHECK(std::abs(w1v(0, 0)) == doctest::Approx(9.98).epsilon(0.01));
    const auto block = build_mixed_sens_block(CMatrix::Zero(3, 3), w1v, CMatrix::Identity(3, 3),
                                              CMatrix::Identity(3, 3), grid.point(0), 0, 0);
    const CMatrix val =
        block.eval(CMatrix::Zero(3, 3), CMatrix::Identity(3, 3), 1.0, Matrix::Zero(3, 3));
    CHECK(std::abs(val(3, 0) - w1v(0, 0)) < 1e-14);  // W1*Y sits in the (2,1) block
}

TEST_CASE("feasible mixed block at the linearization point means det(Yc + G Xc) != 0") {
    std::mt19937 rng(5);
    const CMatrix g = testutil::random_complex(2, 2, rng);
    const CMatrix xc = testutil::random_complex(2, 2, rng);
    const CMatrix yc = testutil::random_complex(2, 2, rng) + 3.0 * CMatrix::Identity(2, 2);
    const CMatrix pc = yc + g * xc;
    const auto block = build_mixed_sens_block(g, CMatrix::Identity(2, 2), CMatrix::Identity(2, 2),
                                              pc, Complex(0, 1), 0, 0);
    // P = Pc and a huge gamma: positive definiteness reduces to Pc* Pc > 0.
    const CMatrix val = block.eval(xc, yc, 1e8, Matrix::Zero(2, 2));
    const double schur = min_eig(CMatrix(val.topLeftCorner(2, 2)));
    CHECK(schur > 0.0);
    CHECK(std::abs(Eigen::PartialPivLU<CMatrix>(pc).determinant()) > 1e-6);
}

TEST_CASE("scalar H2 block matches the Schur complement") {
    const CMatrix one = CMatrix::Identity(1, 1);
    const auto block = build_h2_block(CMatrix::Zero(1, 1), one, one, Complex(0, 1), 0, 0);
    Matrix gamma(1, 1);
    gamma << 1.2;
    CHECK(min_eig(block.eval(CMatrix::Zero(1, 1), one, 0.0, gamma)) > 0.0);
    gamma << 0.8;
    CHECK(min_eig(block.eval(CMatrix::Zero(1, 1), one, 0.0, gamma)) < 0.0);
}

TEST_CASE("H2 block feasibility bounds the weighted sensitivity at P = Pc") {
    std::mt19937 rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        const CMatrix g = testutil::random_complex(2, 2, rng);
        const CMatrix x = testutil::random_complex(2, 2, rng);
        const CMatrix y = testutil::random_complex(2, 2, rng) + 3.0 * CMatrix::Identity(2, 2);
        const CMatrix w1 = testutil::random_complex(2, 2, rng);
        const CMatrix p = y + g * x;
        if (std::abs(Eigen::PartialPivLU<CMatrix>(p).determinant()) < 1e-3) continue;
        const auto block = build_h2_block(g, w1, p, Complex(0, 1), 0, 0);
        // Real-symmetric Gamma dominating the exact Hermitian value
        // W1 Y (P*P)^-1 Y* W1* (shift by the imaginary part's norm).
        const CMatrix exact =
            w1 * y * (p.adjoint() * p).inverse() * y.adjoint() * w1.adjoint();
        const Matrix gamma =
            exact.real() + (exact.imag().norm() + 1e-6) * Matrix::Identity(2, 2);
        const CMatrix herm_gap = block.eval(x, y, 0.0, gamma);
        // With P = Pc the linearization is exact, so the block value is PSD.
        CHECK(min_eig(herm_gap) >= -1e-9);
    }
}

TEST_CASE("loop-shaping block with exact match is feasible for any positive gamma") {
    std::mt19937 rng(7);
    const CMatrix g = testutil::random_complex(2, 2, rng) + 2.0 * CMatrix::Identity(2, 2);
    const CMatrix y = testutil::random_complex(2, 2, rng) + 3.0 * CMatrix::Identity(2, 2);
    // Pick X with G X = Ld Y exactly.
    const CMatrix ld = testutil::random_complex(2, 2, rng);
    const CMatrix x = g.inverse() * ld * y;
    const auto block = build_loopshape_hinf_block(g, ld, y, Complex(0, 1), 0, 0);
    CHECK(min_eig(block.eval(x, y, 1e-6, Matrix::Zero(2, 2))) > 0.0);
}

TEST_CASE("loop-shaping Schur equivalence on random instances") {
    std::mt19937 rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        const CMatrix g = testutil::random_complex(2, 2, rng);
        const CMatrix ld = testutil::random_complex(2, 2, rng);
        const CMatrix yc = testutil::random_complex(2, 2, rng) + 3.0 * CMatrix::Identity(2, 2);
        const CMatrix x = testutil::random_complex(2, 2, rng, 0.3);
        const CMatrix y = yc + testutil::random_complex(2, 2, rng, 0.1);
        const double gamma = 4.0;
        const auto block = build_loopshape_hinf_block(g, ld, yc, Complex(0, 1), 0, 0);
        const double block_min = min_eig(block.eval(x, y, gamma, Matrix::Zero(2, 2)));
        const CMatrix lin_y = linearize_quadratic(y, yc);
        const CMatrix mism = g * x - ld * y;
        const CMatrix schur = lin_y - mism.adjoint() * mism / gamma;
        const double schur_min = min_eig(CMatrix(0.5 * (schur + schur.adjoint())));
        CHECK((block_min > 0.0) == (schur_min > 0.0));
    }
}

TEST_CASE("loop-shaping H2 block mirrors the infinity version with Gamma") {
    std::mt19937 rng(9);
    const CMatrix g = testutil::random_complex(2, 2, rng);
    const CMatrix ld = testutil::random_complex(2, 2, rng);
    const CMatrix yc = testutil::random_complex(2, 2, rng) + 3.0 * CMatrix::Identity(2, 2);
    const auto b2 = build_loopshape_h2_block(g, ld, yc, Complex(0, 1), 0, 0);
    const auto binf = build_loopshape_hinf_block(g, ld, yc, Complex(0, 1), 0, 0);
    const CMatrix x = testutil::random_complex(2, 2, rng, 0.2);
    const Matrix gamma = 4.0 * Matrix::Identity(2, 2);
    const CMatrix v2 = b2.eval(x, yc, 0.0, gamma);
    const CMatrix vinf = binf.eval(x, yc, 4.0, Matrix::Zero(2, 2));
    CHECK((v2 - vinf).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("stability block sign") {
    std::mt19937 rng(10);
    const CMatrix g = testutil::random_complex(2, 2, rng);
    const CMatrix xc = testutil::random_complex(2, 2, rng, 0.2);
    const CMatrix yc = testutil::random_complex(2, 2, rng) + 3.0 * CMatrix::Identity(2, 2);
    const CMatrix pc = yc + g * xc;
    const auto block = build_stability_block(g, pc, Complex(0, 1), 0, 0);
    CHECK(min_eig(block.eval(xc, yc, 0.0, Matrix::Zero(2, 2))) > 0.0);   // P = Pc: 2 Pc*Pc
    CHECK(min_eig(block.eval(CMatrix(-xc), CMatrix(-yc), 0.0, Matrix::Zero(2, 2))) < 0.0);
}

TEST_CASE("detY block accepts Yc and rejects zero") {
    const CMatrix yc = CMatrix::Identity(3, 3);
    const auto block = build_detY_block(yc, Complex(0, 1), 0);
    CHECK(min_eig(block.eval(CMatrix::Zero(3, 3), yc, 0.0, Matrix::Zero(3, 3))) ==
          doctest::Approx(1.0));
    CHECK(min_eig(block.eval(CMatrix::Zero(3, 3), CMatrix::Zero(3, 3), 0.0,
                             Matrix::Zero(3, 3))) == doctest::Approx(-1.0));
}

TEST_CASE("detY feasibility implies det(Y) != 0 at the frequency") {
    std::mt19937 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const CMatrix yc = testutil::random_complex(3, 3, rng) + 3.0 * CMatrix::Identity(3, 3);
        const CMatrix y = yc + testutil::random_complex(3, 3, rng, 0.2);
        const auto block = build_detY_block(yc, Complex(0, 1), 0);
        if (min_eig(block.eval(CMatrix::Zero(3, 3), y, 0.0, Matrix::Zero(3, 3))) > 0.0) {
            CHECK(std::abs(Eigen::PartialPivLU<CMatrix>(y).determinant()) > 1e-12);
        }
    }
}

TEST_CASE("robust block with zero controller reduces to the linearized stability form") {
    std::mt19937 rng(12);
    const CMatrix g = testutil::random_complex(2, 2, rng);
    const CMatrix yc = testutil::random_complex(2, 2, rng) + 3.0 * CMatrix::Identity(2, 2);
    const auto block = build_robust_additive_block(g, CMatrix::Identity(2, 2),
                                                   CMatrix::Identity(2, 2), yc, Complex(0, 1), 0, 0);
    // X = 0, Y = Yc: the top-left corner is Pc*Pc > 0 and the rest is I.
    const CMatrix val = block.eval(CMatrix::Zero(2, 2), yc, 0.0, Matrix::Zero(2, 2));
    CHECK(min_eig(val) > 0.0);
}

TEST_CASE("robust block feasibility bounds the scalar robustness margin") {
    std::mt19937 rng(13);
    int checked = 0;
    for (int trial = 0; trial < 40 && checked < 10; ++trial) {
        const CMatrix g = testutil::random_complex(1, 1, rng);
        const CMatrix w1 = CMatrix::Constant(1, 1, Complex(0.5 + 0.1 * trial, 0.1));
        const CMatrix w2 = CMatrix::Constant(1, 1, Complex(0.4, -0.2));
        const CMatrix x = testutil::random_complex(1, 1, rng, 0.3);
        const CMatrix y = CMatrix::Constant(1, 1, Complex(2.0, 0.3));
        // Linearize at the candidate itself so the block value is exact.
        auto block = build_robust_additive_block(g, w1, w2, CMatrix(y + g * x), Complex(0, 1), 0, 0);
        const CMatrix val = block.eval(x, y, 0.0, Matrix::Zero(1, 1));
        if (min_eig(val) <= 0.0) continue;
        ++checked;
        // |W2 X (Y + G X)^{-1} W1| < 1 by the Schur complement.
        const Complex ks = x(0, 0) / (y(0, 0) + g(0, 0) * x(0, 0));
        CHECK(std::abs(w2(0, 0) * ks * w1(0, 0)) < 1.0 + 1e-9);
    }
    CHECK(checked > 0);
}

TEST_CASE("robust block with W2 = 0 reduces to the stability corner") {
    std::mt19937 rng(14);
    const CMatrix g = testutil::random_complex(2, 2, rng);
    const CMatrix yc = testutil::random_complex(2, 2, rng) + 3.0 * CMatrix::Identity(2, 2);
    auto block = build_robust_additive_block(g, CMatrix::Identity(2, 2), CMatrix::Zero(2, 2), yc,
                                             Complex(0, 1), 0, 0);
    const CMatrix x = testutil::random_complex(2, 2, rng, 0.2);
    const CMatrix y = yc + testutil::random_complex(2, 2, rng, 0.1);
    const CMatrix val = block.eval(x, y, 0.0, Matrix::Zero(2, 2));
    const CMatrix p = y + g * x;
    // The corner must equal the linearized P form around the stored point.
    CHECK((val.topLeftCorner(2, 2) - linearize_quadratic(p, yc)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(val.bottomLeftCorner(2, 2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("every assembled block is exactly Hermitian") {
    std::mt19937 rng(15);
    const CMatrix g = testutil::random_complex(3, 2, rng);
    const CMatrix w1 = testutil::random_complex(3, 3, rng);
    const CMatrix w2 = testutil::random_complex(2, 2, rng);
    const CMatrix pc = testutil::random_complex(3, 3, rng);
    const CMatrix x = testutil::random_complex(2, 3, rng);
    const CMatrix y = testutil::random_complex(3, 3, rng);
    const auto block = build_mixed_sens_block(g, w1, w2, pc, Complex(0, 1), 0, 0);
    const CMatrix val = block.eval(x, y, 2.5, Matrix::Zero(3, 3));
    CHECK((val - val.adjoint()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mixed-sensitivity feasibility implies the stability inequality") {
    std::mt19937 rng(16);
    int feasible = 0;
    for (int trial = 0; trial < 40; ++trial) {
        const CMatrix g = testutil::random_complex(2, 2, rng);
        const CMatrix xc = testutil::random_complex(2, 2, rng, 0.2);
        const CMatrix yc = testutil::random_complex(2, 2, rng) + 3.0 * CMatrix::Identity(2, 2);
        const CMatrix pc = yc + g * xc;
        const CMatrix x = xc + testutil::random_complex(2, 2, rng, 0.05);
        const CMatrix y = yc + testutil::random_complex(2, 2, rng, 0.05);
        const auto mixed = build_mixed_sens_block(g, CMatrix::Identity(2, 2),
                                                  CMatrix::Identity(2, 2), pc, Complex(0, 1), 0, 0);
        if (min_eig(mixed.eval(x, y, 50.0, Matrix::Zero(2, 2))) <= 0.0) continue;
        ++feasible;
        const auto stab = build_stability_block(g, pc, Complex(0, 1), 0, 0);
        CHECK(min_eig(stab.eval(x, y, 0.0, Matrix::Zero(2, 2))) > 0.0);
    }
    CHECK(feasible > 5);
}

TEST_CASE("multimodel replication emits one block family per model") {
    std::mt19937 rng(17);
    FrequencyGrid grid;
    grid.domain = TimeDomain::Discrete;
    grid.sample_period = 0.1;
    grid.frequencies = {1.0, 3.0, 8.0};
    grid.span_lo = 1.0;
    grid.span_hi = 8.0;

    auto make_frs = [&](int q) {
        FrequencyResponseSet frs;
        frs.grid = grid;
        frs.outputs = 2;
        frs.inputs = 2;
        for (int i = 0; i < q; ++i) {
            std::vector<CMatrix> model;
            for (std::size_t k = 0; k < grid.size(); ++k) {
                model.push_back(testutil::random_complex(2, 2, rng, 0.3));
            }
            frs.models.push_back(std::move(model));
        }
        frs.unstable_pole_count.assign(q, 0);
        return frs;
    };

    Controller iterate;
    iterate.X.variable = 'z';
    iterate.X.coeffs = {0.01 * Matrix::Identity(2, 2), Matrix::Zero(2, 2)};
    iterate.Y.variable = 'z';
    iterate.Y.coeffs = {Matrix::Zero(2, 2), Matrix::Identity(2, 2)};
    iterate.Fx = MatrixPolynomial::ones(2, 2, 'z');
    iterate.Fy = MatrixPolynomial::ones(2, 2, 'z');

    DesignSpec spec;
    spec.objective = Objective::MixedSensHinf;
    spec.W1 = WeightSpec::constant(1.0, 2);
    spec.W2 = WeightSpec::constant(1.0, 2);

    const auto frs1 = make_frs(1);
    const auto ev = evaluate_design(spec, grid, 2, 2);
    const auto blocks1 = replicate_multimodel(ev, frs1, make_linearization(frs1, iterate));
    CHECK(blocks1.size() == 2 * grid.size());  // mixed + detY per frequency

    const auto frs3 = make_frs(3);
    const auto blocks3 = replicate_multimodel(ev, frs3, make_linearization(frs3, iterate));
    CHECK(blocks3.size() == 3 * grid.size() + grid.size());
    int per_model[3] = {0, 0, 0};
    for (const auto& b : blocks3) {
        if (b.model_index >= 0) ++per_model[b.model_index];
    }
    CHECK(per_model[0] == int(grid.size()));
    CHECK(per_model[1] == int(grid.size()));
    CHECK(per_model[2] == int(grid.size()));
}
