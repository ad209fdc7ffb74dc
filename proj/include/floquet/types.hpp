#pragma once

#include <complex>
#include <numbers>

#include <Eigen/Dense>

namespace floquet {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr cplx kI{0.0, 1.0};

inline constexpr const char* kVersion = "floquet 0.3.0";

/// (i(2πp + t))^power, by repeated multiplication so integer powers stay exact-ish.
inline cplx free_symbol(int p, cplx t, int power) {
    const cplx base = kI * (kTwoPi * p + t);
    cplx r{1.0, 0.0};
    for (int i = 0; i < power; ++i) r *= base;
    return r;
}

/// d/dt of free_symbol.
inline cplx free_symbol_derivative(int p, cplx t, int power) {
    if (power == 0) return {0.0, 0.0};
    return static_cast<double>(power) * kI * free_symbol(p, t, power - 1);
}

/// Lexicographic (Re, Im) ordering used for every canonical sort.
inline bool canonical_less(cplx a, cplx b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
}

}  // namespace floquet
