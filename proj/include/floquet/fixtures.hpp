#pragma once

#include "floquet/gelfand.hpp"
#include "floquet/operator.hpp"

// Reference operators with known spectral structure, shared by the tests, the
// acceptance suite and `floquet verify`.
namespace floquet::fixtures {

inline OperatorSpec free_operator(int n, int m) {
    OperatorSpec s;
    s.order = n;
    s.dim = m;
    return s;
}

inline OperatorSpec constant_operator(int n, const Matrix& c) {
    OperatorSpec s;
    s.order = n;
    s.dim = static_cast<int>(c.rows());
    s.coeffs.emplace(2, FourierMatrixSeries::constant(c));
    return s;
}

inline Matrix diag2(double a, double b) {
    Matrix c = Matrix::Zero(2, 2);
    c(0, 0) = a;
    c(1, 1) = b;
    return c;
}

/// Non-normal mean matrix with eigenvalues 2 ± sqrt(1.1).
inline Matrix nonnormal_mean() {
    Matrix c(2, 2);
    c << 1.0, 0.5, 0.2, 3.0;
    return c;
}

/// Small eigenvalue spread: all band crossings of the n = 2 fiber fall within
/// |t| < 0.01 or |t - π| < 0.02.
inline Matrix narrow_mean() {
    Matrix c(2, 2);
    c << 0.0, 0.1, 0.05, 0.2;
    return c;
}

/// Fixed zero-mean perturbation with modes ±1.
inline FourierMatrixSeries band_one_perturbation() {
    FourierMatrixSeries b(2, 1);
    b.mode(1) << cplx(0.3, 0.4), cplx(-0.7, 0.1), cplx(0.5, -0.2), cplx(0.6, 0.3);
    b.mode(-1) << cplx(-0.2, 0.5), cplx(0.4, -0.6), cplx(0.8, 0.1), cplx(-0.3, -0.4);
    return b;
}

/// P_2 = C + ε B with C = nonnormal_mean(), n = 2.
inline OperatorSpec perturbed_operator(double eps, const Matrix& c = nonnormal_mean()) {
    OperatorSpec s = constant_operator(2, c);
    FourierMatrixSeries b = band_one_perturbation();
    for (int q = -1; q <= 1; ++q) b.mode(q) *= eps;
    s.coeffs.at(2) += b;
    return s;
}

/// C = diag(0,1) plus ε(E12 e^{-i4πx} - E21 e^{i4πx}). Around t = 1/(8π) the
/// crossing pair (1,1), (-1,0) [0-based j] splits into two exceptional points at
/// t = (1 ± 2ε)/(8π), where the eigenvalues coalesce with a square-root branch.
inline OperatorSpec exceptional_point_operator(double eps) {
    OperatorSpec s = constant_operator(2, diag2(0.0, 1.0));
    FourierMatrixSeries c(2, 2);
    c.mode(-2)(0, 1) = eps;
    c.mode(2)(1, 0) = -eps;
    s.coeffs.at(2) += c;
    return s;
}

/// Scalar Hill operator with one-sided potential Σ_{l=1..L} ε l³ e^{i4πlx}.
/// Lower-triangular in Fourier space, so the spectrum is exactly the free one;
/// near t = 0 band -k picks up a component εk²/(8πt) on mode k, so |α_k| decays in k.
inline OperatorSpec one_sided_growing_operator(double eps, int L) {
    OperatorSpec s = free_operator(2, 1);
    FourierMatrixSeries q(1, 2 * L);
    for (int l = 1; l <= L; ++l) q.mode(2 * l)(0, 0) = eps * l * l * l;
    s.coeffs.emplace(2, q);
    return s;
}

/// v·χ_{[0,1)}.
inline CellFunction unit_indicator(int m) { return CellFunction::indicator(Vector::Ones(m)); }

/// C¹ bump on [−2, 2): cell k carries w_k sin²(πy), w = (1/2, 1, 1, 1/2), on every component.
inline CellFunction smooth_bump(int m) {
    std::vector<Matrix> cells;
    for (double w : {0.5, 1.0, 1.0, 0.5}) {
        Matrix d = Matrix::Zero(m, 3);  // modes -1, 0, 1
        d.col(0).setConstant(-0.25 * w);
        d.col(1).setConstant(0.5 * w);
        d.col(2).setConstant(-0.25 * w);
        cells.push_back(d);
    }
    return CellFunction::fourier(m, -2, 1, std::move(cells));
}

}  // namespace floquet::fixtures
