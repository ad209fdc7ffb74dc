#include <gtest/gtest.h>

#include "floquet/gelfand.hpp"

using namespace floquet;

namespace {

Vector vec2(cplx a, cplx b) {
    Vector v(2);
    v << a, b;
    return v;
}

}  // namespace

TEST(CellFunction, EvaluateAndNorm) {
    auto f = CellFunction::piecewise_constant(1, -1, 2, {Matrix{{1.0, 2.0}}, Matrix{{3.0, cplx(0, 4)}}});
    EXPECT_EQ(f(-0.75)(0), cplx(1.0));
    EXPECT_EQ(f(-0.25)(0), cplx(2.0));
    EXPECT_EQ(f(0.6)(0), cplx(0, 4));
    EXPECT_EQ(f(1.2)(0), cplx(0.0));
    EXPECT_DOUBLE_EQ(f.norm2(), (1 + 4 + 9 + 16) / 2.0);
}

TEST(CellFunction, FourierCellsMatchSamples) {
    Matrix d(1, 3);
    d << cplx(0.5, 0), 1.0, cplx(0, -0.25);  // modes -1, 0, 1
    auto f = CellFunction::fourier(1, 2, 1, {d});
    const double x = 2.3;
    const cplx expect = 0.5 * std::exp(-kI * kTwoPi * 0.3) + 1.0 + cplx(0, -0.25) * std::exp(kI * kTwoPi * 0.3);
    EXPECT_LE(std::abs(f(x)(0) - expect), 1e-14);
    EXPECT_NEAR(f.norm2(), 0.25 + 1 + 0.0625, 1e-15);
}

TEST(CellFunction, MixedRepresentationsRejected) {
    auto a = CellFunction::indicator(vec2(1, 0));
    auto b = CellFunction::fourier(2, 0, 0, {Matrix::Ones(2, 1)});
    EXPECT_THROW(a += b, InvalidArgument);
    EXPECT_THROW(CellFunction::piecewise_constant(2, 0, 3, {Matrix::Ones(2, 2)}), InvalidArgument);
}

TEST(Gelfand, SingleCellIsConstantInT) {
    const Vector v = vec2(1.0, cplx(0, 2));
    auto f = CellFunction::indicator(v);
    for (double t : {0.0, 1.3, 4.0}) {
        auto b = gelfand_transform(f, t, 4);
        EXPECT_LE((b(0.4) - v).norm(), 1e-15);
        // quasi-periodic extension
        EXPECT_LE((b(1.4) - std::exp(kI * t) * v).norm(), 1e-14);
    }
}

TEST(Gelfand, TwoCells) {
    const cplx a(1.0, 0.5), b(-2.0, 1.0);
    auto f = CellFunction::piecewise_constant(1, 0, 1, {Matrix::Constant(1, 1, a), Matrix::Constant(1, 1, b)});
    for (double t : {0.2, 2.9}) {
        auto bf = gelfand_transform(f, t, 2);
        EXPECT_LE(std::abs(bf(0.5)(0) - (a + b * std::exp(-kI * t))), 1e-14);
    }
}

TEST(Gelfand, PeriodicInT) {
    auto f = random_cell_function(7, 2, -3, 6, 4);
    auto b0 = gelfand_transform(f, 0.7, 8);
    auto b1 = gelfand_transform(f, 0.7 + kTwoPi, 8);
    EXPECT_LE((b0.cell - b1.cell).cwiseAbs().maxCoeff(), 1e-12);
    // the mode index shifts by one: c_p(t + 2π) = c_{p+1}(t)
    for (int p = -8; p < 8; ++p) EXPECT_LE((b1.mode(p) - b0.mode(p + 1)).norm(), 1e-12);
}

TEST(Gelfand, FourierCoefficientsReproduceCell) {
    // Σ_p c_p e^{i(2πp+t)x} converges to f_t; smooth Fourier cell data converges fast
    Matrix d = Matrix::Zero(1, 5);
    d(0, 1) = 0.3;
    d(0, 2) = 1.0;
    d(0, 3) = cplx(0.0, 0.4);
    auto f = CellFunction::fourier(1, -1, 2, {d, d});
    const double t = 1.1;
    auto b = gelfand_transform(f, t, 200);
    for (double x : {0.2, 0.55, 0.8}) {
        cplx s{};
        for (int p = -200; p <= 200; ++p) s += b.mode(p)(0) * std::exp(kI * (kTwoPi * p + t) * x);
        EXPECT_LE(std::abs(s - b(x)(0)), 2e-2);
    }
    // Parseval on [0,1) for the quasi-periodic modes
    double modes = 0.0;
    for (int p = -200; p <= 200; ++p) modes += b.mode(p).squaredNorm();
    EXPECT_NEAR(modes, b.norm2(), 1e-3 * b.norm2());
}

TEST(Gelfand, Linearity) {
    auto f = random_cell_function(1, 2, -2, 5, 3);
    auto g = random_cell_function(2, 2, 0, 4, 3);
    const cplx a(0.3, -1.2);
    auto h = a * f + g;
    for (double t : {0.0, 2.2}) {
        auto bf = gelfand_transform(f, t, 6), bg = gelfand_transform(g, t, 6), bh = gelfand_transform(h, t, 6);
        EXPECT_LE((bh.coeffs - (a * bf.coeffs + bg.coeffs)).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LE((bh.cell - (a * bf.cell + bg.cell)).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Split, Partitions) {
    auto pos = random_cell_function(3, 1, 0, 3, 2);
    auto [p1, m1] = split_support(pos);
    EXPECT_TRUE(p1.empty());
    EXPECT_EQ(m1.cells(), 3);

    auto neg = random_cell_function(4, 1, -2, 2, 2);
    auto [p2, m2] = split_support(neg);
    EXPECT_EQ(p2.cells(), 2);
    EXPECT_TRUE(m2.empty());

    auto f = CellFunction::piecewise_constant(2, -1, 1, {Matrix(vec2(1, 2)), Matrix(vec2(3, 4))});
    auto [fp, fm] = split_support(f);
    EXPECT_EQ(fp.cells(), 1);
    EXPECT_EQ(fm.cells(), 1);
    auto sum = fp + fm;
    for (double x = -1.5; x < 1.5; x += 0.125) EXPECT_TRUE(sum(x) == f(x)) << x;
}

TEST(Split, TransformsAreAnalyticHalfPlanes) {
    // f⁺ has cells k < 0, so its transform carries e^{-ikt} with -k > 0: bounded for Im t > 0
    auto f = random_cell_function(5, 1, -3, 6, 2);
    auto [fp, fm] = split_support(f);
    const double big = 30.0;
    EXPECT_LT(gelfand_transform(fp, cplx(1.0, big), 0).cell.norm(), 1e-6);
    // f⁻ keeps its k = 0 cell and decays in the other cells for Im t < 0
    EXPECT_LE((gelfand_transform(fm, cplx(1.0, -big), 0).cell - fm.cell(0)).norm(), 1e-6);
    // and blows up the other way
    EXPECT_GT(gelfand_transform(fm, cplx(1.0, big), 0).cell.norm(), 1e6);
}

TEST(Parseval, TwoCellScalar) {
    auto f = CellFunction::piecewise_constant(1, 0, 1, {Matrix::Constant(1, 1, cplx(1, 2)), Matrix::Constant(1, 1, -0.5)});
    auto r = parseval_residual(f, 64);
    EXPECT_NEAR(r.lhs, 5.25, 1e-15);
    EXPECT_LE(r.residual, 1e-12);
}

TEST(Parseval, SingleCellAndZero) {
    EXPECT_LE(parseval_residual(CellFunction::indicator(vec2(1, 3))).residual, 1e-15);
    auto z = parseval_residual(CellFunction::zero(2));
    EXPECT_TRUE(z.zero_function);
    EXPECT_EQ(z.residual, 0.0);
}

TEST(Parseval, RandomSixCellVector) {
    for (unsigned seed : {11u, 12u, 13u}) {
        auto f = random_cell_function(seed, 2, -3, 6, 5);
        const auto r128 = parseval_residual(f, 128);
        const auto r256 = parseval_residual(f, 256);
        EXPECT_LE(r128.residual, 1e-10);
        EXPECT_LE(std::abs(r128.rhs - r256.rhs) / r128.lhs, 1e-12);
        EXPECT_LE(parseval_residual(f).residual, 1e-10);
    }
}

TEST(Inversion, RandomSixCell) {
    for (unsigned seed : {21u, 22u}) {
        auto f = random_cell_function(seed, 2, -2, 6, 3);
        EXPECT_LE(inversion_residual(f), 1e-12);
        EXPECT_LE(inversion_residual(f, 64), 1e-12);
    }
}

TEST(Sup, IndicatorAndTwoCells) {
    EXPECT_NEAR(gelfand_sup(CellFunction::indicator(vec2(3, 4))), 5.0, 1e-14);
    auto f = CellFunction::piecewise_constant(1, 0, 1, {Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 1.0)});
    EXPECT_NEAR(gelfand_sup(f), 2.0, 1e-14);
}
