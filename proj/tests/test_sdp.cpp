#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "fdsyn/sdp.hpp"
#include "test_util.hpp"

using namespace fdsyn;
using testutil::min_eig;

namespace {

// Hand-built LMI: min c.x subject to scalar diagonal blocks x_i - lo_i >= 0.
RealLmiSystem diagonal_system(const Vector& c, const Vector& lo) {
    RealLmiSystem sys;
    sys.dim = int(c.size());
    sys.objective = c;
    for (int i = 0; i < sys.dim; ++i) {
        RealLmiBlock blk;
        blk.size = 1;
        blk.constant = Matrix::Constant(1, 1, -lo[i]);
        blk.coefficients.push_back({i, {Triplet{0, 0, 1.0}}});
        sys.blocks.push_back(std::move(blk));
    }
    return sys;
}

}  // namespace

TEST_CASE("real embedding of the identity") {
    const CMatrix h = CMatrix::Identity(2, 2);
    CHECK(hermitian_to_real(h) == (Matrix)Matrix::Identity(4, 4));
}

TEST_CASE("real embedding duplicates an analytic 2x2 spectrum") {
    CMatrix h(2, 2);
    h << Complex(2, 0), Complex(0, 1), Complex(0, -1), Complex(2, 0);
    const Matrix e = hermitian_to_real(h);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(e, Eigen::EigenvaluesOnly);
    const Vector v = eig.eigenvalues();
    REQUIRE(v.size() == 4);
    CHECK(v[0] == doctest::Approx(1.0));
    CHECK(v[1] == doctest::Approx(1.0));
    CHECK(v[2] == doctest::Approx(3.0));
    CHECK(v[3] == doctest::Approx(3.0));
}

TEST_CASE("real embedding doubles a random 4x4 spectrum") {
    std::mt19937 rng(1);
    const CMatrix h = testutil::random_hermitian(4, rng);
    Eigen::SelfAdjointEigenSolver<CMatrix> ec(h, Eigen::EigenvaluesOnly);
    Eigen::SelfAdjointEigenSolver<Matrix> er(hermitian_to_real(h), Eigen::EigenvaluesOnly);
    std::vector<double> doubled;
    for (int i = 0; i < 4; ++i) {
        doubled.push_back(ec.eigenvalues()[i]);
        doubled.push_back(ec.eigenvalues()[i]);
    }
    std::sort(doubled.begin(), doubled.end());
    for (int i = 0; i < 8; ++i) {
        CHECK(std::abs(er.eigenvalues()[i] - doubled[i]) < 1e-10);
    }
}

TEST_CASE("embedding preserves the positivity verdict on 500 random matrices") {
    std::mt19937 rng(2);
    int failures = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const int d = 1 + int(rng() % 5);
        const CMatrix h = testutil::random_hermitian(d, rng);
        const double mc = min_eig(h);
        const double mr = min_eig(hermitian_to_real(h));
        if (std::abs(mc - mr) > 1e-10 * std::max(1.0, std::abs(mc))) ++failures;
    }
    CHECK(failures == 0);
}

TEST_CASE("non-Hermitian input is rejected") {
    CMatrix h(2, 2);
    h << Complex(1, 0), Complex(1, 0), Complex(0, 0), Complex(1, 0);
    CHECK_THROWS_AS(hermitian_to_real(h), InputError);
}

TEST_CASE("decision layout counts the miniature mixed-sensitivity problem") {
    // p = 1, full masks, 3x3 plant: 2*9 X entries + 9 Y entries + gamma = 28.
    auto cp = ControllerParametrization::make(3, 3, 1, 's');
    const auto layout = DecisionLayout::make(cp, gamma_variables_for(Objective::MixedSensHinf,
                                                                     3, 1, 10));
    CHECK(layout.dim() == 28);
    CHECK(layout.gamma_index == 27);
    CHECK(layout.x_index(0, 0, 0) == 0);
    CHECK(layout.x_index(1, 2, 2) == 17);
    CHECK(layout.y_index(0, 0, 0) == 18);
}

TEST_CASE("masked and Gamma layouts are bijective") {
    auto cp = ControllerParametrization::make(2, 2, 3, 'z', MaskKind::Diagonal);
    const auto gv = gamma_variables_for(Objective::H2, 2, 2, 4);
    const auto layout = DecisionLayout::make(cp, gv);
    // X full 2x2 over 4 degrees = 16, Y diagonal 2 over 3 degrees = 6,
    // Gamma: 2 models x 4 freqs x 3 upper entries = 24.
    CHECK(layout.dim() == 16 + 6 + 24);
    std::vector<int> seen(layout.dim(), 0);
    for (int d = 0; d <= 3; ++d) {
        for (int r = 0; r < 2; ++r) {
            for (int c = 0; c < 2; ++c) {
                const int i = layout.x_index(d, r, c);
                if (i >= 0) ++seen[i];
            }
        }
    }
    for (int d = 0; d < 3; ++d) {
        for (int r = 0; r < 2; ++r) {
            for (int c = 0; c < 2; ++c) {
                const int i = layout.y_index(d, r, c);
                if (i >= 0) ++seen[i];
            }
        }
    }
    for (int i = 0; i < 2; ++i) {
        for (int k = 0; k < 4; ++k) {
            for (int r = 0; r < 2; ++r) {
                for (int c = r; c < 2; ++c) ++seen[layout.gamma_entry_index(i, k, r, c)];
            }
        }
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; }));
    CHECK(layout.y_index(0, 0, 1) == -1);  // masked out
}

TEST_CASE("controller round-trips through the decision vector") {
    std::mt19937 rng(3);
    auto cp = ControllerParametrization::make(2, 2, 2, 'z', MaskKind::Diagonal);
    const auto layout = DecisionLayout::make(cp, GammaVariables{});
    Vector x = testutil::random_real(layout.dim(), 1, rng).col(0);
    const Controller k = controller_from_decision(layout, x, cp);
    CHECK(k.Y.coeffs.back() == (Matrix)Matrix::Identity(2, 2));
    CHECK(k.Y.coeffs[0](0, 1) == 0.0);  // masked out stays zero
    const Vector back = decision_from_controller(layout, k, x[layout.gamma_index]);
    CHECK((back - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("minimizing a single gamma block returns the strictness margin") {
    auto cp = ControllerParametrization::make(1, 1, 0, 'z');
    const auto layout = DecisionLayout::make(cp, gamma_variables_for(Objective::MixedSensHinf,
                                                                     1, 1, 1));
    // One mixed-sensitivity block with G = 0, W1 = W2 = 0, Yc = Pc = 1:
    // the (2,2)/(3,3) corners are gamma I, the (1,1) corner is constant.
    const auto block = build_mixed_sens_block(CMatrix::Zero(1, 1), CMatrix::Zero(1, 1),
                                              CMatrix::Zero(1, 1), CMatrix::Identity(1, 1),
                                              Complex(0, 1), 0, 0);
    Vector obj = Vector::Zero(layout.dim());
    obj[layout.gamma_index] = 1.0;
    AssembleOptions opts;
    opts.delta_feas = 1e-6;
    const auto sys = assemble({block}, layout, obj, opts);
    const auto sol = solve(sys);
    REQUIRE(sol.status == SdpStatus::Optimal);
    CHECK(sol.x[layout.gamma_index] >= 0.9e-6);
    CHECK(sol.x[layout.gamma_index] <= 1e-4);
}

TEST_CASE("duplicated blocks do not change the solution") {
    Vector c(1), lo(1);
    c << 1.0;
    lo << 2.5;
    auto sys1 = diagonal_system(c, lo);
    auto sys2 = sys1;
    sys2.blocks.push_back(sys2.blocks.front());
    const auto s1 = solve(sys1);
    const auto s2 = solve(sys2);
    REQUIRE(s1.status == SdpStatus::Optimal);
    REQUIRE(s2.status == SdpStatus::Optimal);
    CHECK(std::abs(s1.objective - s2.objective) < 1e-6 * std::abs(s1.objective));
}

TEST_CASE("simple bound: min gamma subject to gamma >= 1") {
    Vector c(1), lo(1);
    c << 1.0;
    lo << 1.0;
    const auto sol = solve(diagonal_system(c, lo));
    REQUIRE(sol.status == SdpStatus::Optimal);
    CHECK(sol.objective == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(sol.worst_block_min_eig >= -1e-7);
}

TEST_CASE("scalar Schur complement: min trace Gamma with [[G,1],[1,1]] >= 0") {
    RealLmiSystem sys;
    sys.dim = 1;
    sys.objective = Vector::Ones(1);
    RealLmiBlock blk;
    blk.size = 2;
    blk.constant = Matrix::Zero(2, 2);
    blk.constant(0, 1) = blk.constant(1, 0) = 1.0;
    blk.constant(1, 1) = 1.0;
    blk.coefficients.push_back({0, {Triplet{0, 0, 1.0}}});
    sys.blocks.push_back(blk);
    const auto sol = solve(sys);
    REQUIRE(sol.status == SdpStatus::Optimal);
    CHECK(sol.objective == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("random diagonal problems reach the known optimum") {
    std::mt19937 rng(4);
    std::uniform_real_distribution<double> cost(0.1, 3.0);
    std::uniform_real_distribution<double> bound(-2.0, 4.0);
    for (int trial = 0; trial < 10; ++trial) {
        const int d = 2 + int(rng() % 6);
        Vector c(d), lo(d);
        for (int i = 0; i < d; ++i) {
            c[i] = cost(rng);
            lo[i] = bound(rng);
        }
        const auto sol = solve(diagonal_system(c, lo));
        REQUIRE(sol.status == SdpStatus::Optimal);
        const double expected = c.dot(lo);
        CHECK(std::abs(sol.objective - expected) <= 1e-6 * std::max(1.0, std::abs(expected)));
    }
}

TEST_CASE("contradictory scalar bounds are reported infeasible") {
    // x - 1 >= 0 and -x >= 0 cannot hold together.
    RealLmiSystem sys;
    sys.dim = 1;
    sys.objective = Vector::Ones(1);
    RealLmiBlock b1;
    b1.size = 1;
    b1.constant = Matrix::Constant(1, 1, -1.0);
    b1.coefficients.push_back({0, {Triplet{0, 0, 1.0}}});
    RealLmiBlock b2;
    b2.size = 1;
    b2.constant = Matrix::Zero(1, 1);
    b2.coefficients.push_back({0, {Triplet{0, 0, -1.0}}});
    sys.blocks = {b1, b2};
    const auto sol = solve(sys);
    CHECK(sol.status == SdpStatus::Infeasible);
}

TEST_CASE("assembled affine system reproduces direct block evaluation") {
    std::mt19937 rng(5);
    auto cp = ControllerParametrization::make(2, 2, 1, 'z');
    const auto gv = gamma_variables_for(Objective::MixedSensHinf, 2, 1, 2);
    const auto layout = DecisionLayout::make(cp, gv);

    FrequencyGrid grid;
    grid.domain = TimeDomain::Discrete;
    grid.sample_period = 0.5;
    grid.frequencies = {0.8, 2.0};
    grid.span_lo = 0.8;
    grid.span_hi = 2.0;

    std::vector<ConstraintBlock> blocks;
    for (int k = 0; k < 2; ++k) {
        const CMatrix g = testutil::random_complex(2, 2, rng);
        const CMatrix pc = testutil::random_complex(2, 2, rng) + 2.0 * CMatrix::Identity(2, 2);
        blocks.push_back(build_mixed_sens_block(g, testutil::random_complex(2, 2, rng),
                                                testutil::random_complex(2, 2, rng), pc,
                                                grid.point(k), 0, k));
        blocks.push_back(build_detY_block(CMatrix(pc - 0.3 * CMatrix::Identity(2, 2)),
                                          grid.point(k), k));
    }
    Vector obj = Vector::Zero(layout.dim());
    obj[layout.gamma_index] = 1.0;
    AssembleOptions opts;
    opts.delta_feas = 0.0;
    const auto sys = assemble(blocks, layout, obj, opts);
    REQUIRE(sys.blocks.size() == blocks.size());

    const Vector x = testutil::random_real(layout.dim(), 1, rng).col(0);
    const Controller kc = controller_from_decision(layout, x, cp);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const Complex pt = blocks[b].point;
        const CMatrix xw = kc.eval_X(pt);
        const CMatrix yw = kc.eval_Y(pt);
        const CMatrix direct =
            blocks[b].eval(xw, yw, x[layout.gamma_index], Matrix::Zero(2, 2));
        const Matrix assembled = eval_real_block(sys.blocks[b], x);
        CHECK((assembled - hermitian_to_real(direct)).cwiseAbs().maxCoeff() <
              1e-10 * std::max(1.0, direct.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("assembly is deterministic") {
    std::mt19937 rng(6);
    auto cp = ControllerParametrization::make(2, 2, 1, 'z');
    const auto layout = DecisionLayout::make(cp, gamma_variables_for(Objective::MixedSensHinf,
                                                                     2, 1, 1));
    const CMatrix g = testutil::random_complex(2, 2, rng);
    const CMatrix pc = testutil::random_complex(2, 2, rng) + 2.0 * CMatrix::Identity(2, 2);
    const auto block = build_mixed_sens_block(g, CMatrix::Identity(2, 2), CMatrix::Identity(2, 2),
                                              pc, Complex(0.5, 0.2), 0, 0);
    Vector obj = Vector::Zero(layout.dim());
    obj[layout.gamma_index] = 1.0;
    const auto s1 = assemble({block}, layout, obj);
    const auto s2 = assemble({block}, layout, obj);
    REQUIRE(s1.blocks.size() == s2.blocks.size());
    CHECK(s1.blocks[0].constant == s2.blocks[0].constant);
    REQUIRE(s1.blocks[0].coefficients.size() == s2.blocks[0].coefficients.size());
    for (std::size_t i = 0; i < s1.blocks[0].coefficients.size(); ++i) {
        const auto& [v1, t1] = s1.blocks[0].coefficients[i];
        const auto& [v2, t2] = s2.blocks[0].coefficients[i];
        CHECK(v1 == v2);
        REQUIRE(t1.size() == t2.size());
        for (std::size_t t = 0; t < t1.size(); ++t) {
            CHECK(t1[t].row == t2[t].row);
            CHECK(t1[t].col == t2[t].col);
            CHECK(t1[t].value == t2[t].value);
        }
    }
}

TEST_CASE("SDPA dump has the expected shape") {
    Vector c(2), lo(2);
    c << 1.0, 2.0;
    lo << 0.5, -1.0;
    const auto sys = diagonal_system(c, lo);
    std::stringstream ss;
    write_sdpa(ss, sys);
    int m = 0, nblocks = 0;
    ss >> m >> nblocks;
    CHECK(m == 2);
    CHECK(nblocks == 2);
    int b1 = 0, b2 = 0;
    ss >> b1 >> b2;
    CHECK(b1 == 1);
    CHECK(b2 == 1);
    double c1 = 0, c2 = 0;
    ss >> c1 >> c2;
    CHECK(c1 == -1.0);
    CHECK(c2 == -2.0);
    int entries = 0;
    std::string line;
    std::getline(ss, line);
    while (std::getline(ss, line)) {
        if (!line.empty()) ++entries;
    }
    CHECK(entries == 4);  // two nonzero constants and two coefficient entries
}

TEST_CASE("post-solve audit certifies the block residuals") {
    Vector c(3), lo(3);
    c << 1.0, 1.0, 1.0;
    lo << 1.0, 2.0, 3.0;
    const auto sol = solve(diagonal_system(c, lo));
    REQUIRE(sol.status == SdpStatus::Optimal);
    CHECK(sol.worst_block_min_eig >= -1e-7);
}
