#include <gtest/gtest.h>

#include <algorithm>

#include "floquet/bloch.hpp"
#include "floquet/fixtures.hpp"

using namespace floquet;

namespace {

const BlochPair* find_label(const BlochSpectrum& sp, int k, int j) {
    for (const auto& p : sp.pairs)
        if (p.label.k == k && p.label.j == j) return &p;
    return nullptr;
}

}  // namespace

TEST(Assemble, FreeOperatorK1) {
    Matrix a = assemble_bloch_matrix(fixtures::free_operator(2, 1), 0.0, 1);
    ASSERT_EQ(a.rows(), 3);
    const double f = 4 * kPi * kPi;
    EXPECT_NEAR(std::abs(a(0, 0) + f), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(a(1, 1)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(a(2, 2) + f), 0.0, 1e-12);
    EXPECT_NEAR((a - a.diagonal().asDiagonal().toDenseMatrix()).norm(), 0.0, 0.0);
}

TEST(Assemble, ConstantCIsBlockDiagonal) {
    const Matrix c = fixtures::nonnormal_mean();
    const double t = 0.37;
    const int K = 3;
    Matrix a = assemble_bloch_matrix(fixtures::constant_operator(2, c), t, K);
    BlochBasis b{K, 2};
    for (int p = -K; p <= K; ++p)
        for (int q = -K; q <= K; ++q) {
            Matrix blk = a.block(b.index(p, 0), b.index(q, 0), 2, 2);
            Matrix expect = p == q ? Matrix(free_symbol(p, t, 2) * Matrix::Identity(2, 2) + c)
                                   : Matrix::Zero(2, 2);
            EXPECT_LE((blk - expect).norm(), 1e-12);
        }
}

TEST(Assemble, CosinePotentialTridiagonal) {
    OperatorSpec s = fixtures::free_operator(2, 1);
    FourierMatrixSeries q(1, 1);
    q.mode(1)(0, 0) = 1.0;
    q.mode(-1)(0, 0) = 1.0;
    s.coeffs.emplace(2, q);
    Matrix a = assemble_bloch_matrix(s, 0.0, 1);
    Matrix expect(3, 3);
    const double f = 4 * kPi * kPi;
    expect << -f, 1, 0, 1, 0, 1, 0, 1, -f;
    EXPECT_LE((a - expect).norm(), 1e-12);
}

TEST(Assemble, TruncationTooSmall) {
    auto s = fixtures::exceptional_point_operator(0.01);
    EXPECT_THROW(assemble_bloch_matrix(s, 0.0, 1), TruncationTooSmall);
    EXPECT_NO_THROW(assemble_bloch_matrix(s, 0.0, 2));
}

TEST(Assemble, HigherOrderCouplingUsesLowerSymbol) {
    // n = 3 with P_3 = constant: coupling weight (i(2πp+t))^0 = 1
    OperatorSpec s = fixtures::free_operator(3, 1);
    s.coeffs.emplace(3, FourierMatrixSeries::constant(Matrix::Constant(1, 1, 2.0)));
    Matrix a = assemble_bloch_matrix(s, 0.5, 2);
    for (int p = -2; p <= 2; ++p)
        EXPECT_LE(std::abs(a(p + 2, p + 2) - free_symbol(p, 0.5, 3) - 2.0), 1e-9);
}

TEST(Solve, FreeOperatorExact) {
    for (int n : {2, 3}) {
        const double t = 0.83;
        auto sp = solve_bloch(fixtures::free_operator(n, 1), t, 8);
        ASSERT_EQ(sp.pairs.size(), 17u);
        for (const auto& p : sp.pairs) {
            const cplx expect = free_symbol(p.label.k, t, n);
            EXPECT_LE(std::abs(p.lambda - expect), 1e-12 * (1 + std::abs(expect)));
            EXPECT_NEAR(std::abs(p.alpha), 1.0, 1e-12);
            EXPECT_FALSE(p.defective);
            EXPECT_NEAR(p.psi.norm(), 1.0, 1e-12);
        }
    }
}

TEST(Solve, DiagonalMeanAtPi) {
    auto sp = solve_bloch(fixtures::constant_operator(2, fixtures::diag2(1.0, 4.0)), kPi, 4);
    for (double target : {-kPi * kPi + 1.0, -kPi * kPi + 4.0}) {
        double best = 1e9;
        for (const auto& p : sp.pairs) best = std::min(best, std::abs(p.lambda - target));
        EXPECT_LE(best, 1e-10);
    }
}

TEST(Solve, CanonicalOrderAndCount) {
    auto sp = solve_bloch(fixtures::perturbed_operator(1e-2), 1.0, 6);
    ASSERT_EQ(sp.pairs.size(), 26u);
    for (std::size_t i = 1; i < sp.pairs.size(); ++i)
        EXPECT_FALSE(canonical_less(sp.pairs[i].lambda, sp.pairs[i - 1].lambda));
}

TEST(Solve, BiorthogonalityInvariant) {
    for (double t : {0.0, 0.4, 1.0, kPi, 5.0}) {
        auto sp = solve_bloch(fixtures::perturbed_operator(1e-2), t, 12);
        auto r = biorthogonality(sp);
        EXPECT_EQ(r.defective, 0);
        EXPECT_LE(r.max_off_diagonal, 1e-8) << "t = " << t;
        EXPECT_LE(r.max_diagonal_error, 1e-10);
        for (const auto& p : sp.pairs) {
            EXPECT_NEAR(p.psi.norm(), 1.0, 1e-12);
            EXPECT_LE(std::abs(p.psi.dot(p.x_left) - 1.0), 1e-10);
        }
    }
}

TEST(Solve, DegenerateFreeSpectrumIsBiorthogonal) {
    // t = 0: bands k and -k coincide exactly
    auto sp = solve_bloch(fixtures::free_operator(2, 2), 0.0, 6);
    auto r = biorthogonality(sp);
    EXPECT_LE(r.max_off_diagonal, 1e-12);
    EXPECT_EQ(r.defective, 0);
}

TEST(Solve, LabelsFollowUnperturbedFamily) {
    auto s = fixtures::constant_operator(2, fixtures::nonnormal_mean());
    auto sys = validate_spec(s);
    const double t = 0.6;
    auto sp = solve_bloch(s, t, 10);
    for (int k = -10; k <= 10; ++k)
        for (int j = 0; j < 2; ++j) {
            const BlochPair* p = find_label(sp, k, j);
            ASSERT_NE(p, nullptr);
            const cplx mu = unperturbed_eigenvalue(sys, k, j, t);
            EXPECT_LE(std::abs(p->lambda - mu), 1e-9 * (1 + std::abs(mu)));
        }
    // asymptotic kind appears once the disk contains the eigenvalue
    EXPECT_EQ(find_label(sp, 0, 0)->label.kind, LabelKind::small);
    EXPECT_EQ(find_label(sp, 8, 1)->label.kind, LabelKind::asymptotic);
}

TEST(Solve, FiberPeriodicity) {
    auto s = fixtures::perturbed_operator(1e-2);
    const int K = 12;
    const double t = 0.9;
    auto a = solve_bloch(s, t + kTwoPi, K);
    auto b = solve_bloch(s, t, K);
    for (const auto& pa : a.pairs) {
        if (std::abs(pa.label.k) > K / 2) continue;
        const BlochPair* pb = find_label(b, pa.label.k + 1, pa.label.j);
        ASSERT_NE(pb, nullptr);
        EXPECT_LE(std::abs(pa.lambda - pb->lambda), 1e-9 * (1 + std::abs(pb->lambda)));
    }
}

TEST(Solve, EigenvectorCoefficientDecay) {
    auto s = fixtures::perturbed_operator(1e-2);
    const int K = 24;
    auto sp = solve_bloch(s, 0.7, K);
    const BlochBasis b = sp.basis();
    for (int k = -1; k <= 1; ++k) {
        const BlochPair* p = find_label(sp, k, 0);
        ASSERT_NE(p, nullptr);
        // block norms at modes p = K/4..K/2 fall at least like p^{-2}
        for (int q = K / 4; q < K / 2; ++q) {
            const double a = p->psi.segment(b.index(q, 0), 2).norm();
            const double c = p->psi.segment(b.index(q + 1, 0), 2).norm();
            if (a < 1e-14) continue;
            EXPECT_LE(c / a, std::pow(double(q) / (q + 1), 2) + 1e-12);
        }
    }
}

TEST(Solve, SlopesMatchFreeDerivative) {
    auto s = fixtures::free_operator(2, 1);
    auto sp = solve_bloch(s, 0.4, 5);
    auto d = eigenvalue_slopes(s, sp);
    for (std::size_t i = 0; i < sp.pairs.size(); ++i) {
        const cplx expect = free_symbol_derivative(sp.pairs[i].label.k, 0.4, 2);
        EXPECT_LE(std::abs(d[i] - expect), 1e-9 * (1 + std::abs(expect)));
    }
}
