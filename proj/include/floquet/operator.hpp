#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "floquet/error.hpp"
#include "floquet/fourier_series.hpp"
#include "floquet/types.hpp"

namespace floquet {

/// l(y) = y^(n) + P_2 y^(n-2) + ... + P_n y with m×m periodic coefficients.
struct OperatorSpec {
    int order = 2;
    int dim = 1;
    std::map<int, FourierMatrixSeries> coeffs;  // keyed by ν in [2, n]

    const FourierMatrixSeries* coefficient(int nu) const {
        auto it = coeffs.find(nu);
        return it == coeffs.end() ? nullptr : &it->second;
    }

    int max_bandwidth() const {
        int q = 0;
        for (const auto& [nu, s] : coeffs) q = std::max(q, s.effective_bandwidth());
        return q;
    }

    Matrix mean_matrix() const {
        const auto* p2 = coefficient(2);
        return p2 ? p2->mean() : Matrix::Zero(dim, dim);
    }
};

/// Shape checks only; no spectral assumptions.
inline void check_structure(const OperatorSpec& spec) {
    if (spec.order < 2) throw MalformedSpec("order n must be >= 2");
    if (spec.dim < 1) throw MalformedSpec("dimension m must be >= 1");
    for (const auto& [nu, s] : spec.coeffs) {
        if (nu < 2 || nu > spec.order)
            throw MalformedSpec("coefficient index " + std::to_string(nu) + " outside [2, n]");
        if (s.dim() != spec.dim)
            throw MalformedSpec("coefficient P_" + std::to_string(nu) + " has dimension " +
                                std::to_string(s.dim()) + ", expected " + std::to_string(spec.dim));
    }
}

/// Eigensystem of the mean matrix C with biorthonormal left vectors.
struct MeanEigensystem {
    int order = 2;
    Matrix C;
    Vector mu;
    std::vector<Vector> v;  // unit right eigenvectors
    std::vector<Vector> u;  // left eigenvectors, <u_j, v_j> = 1

    int dim() const { return static_cast<int>(mu.size()); }
};

namespace detail {

inline MeanEigensystem eigensystem_of(const Matrix& c, int order) {
    const int m = static_cast<int>(c.rows());
    MeanEigensystem sys;
    sys.order = order;
    sys.C = c;
    Eigen::ComplexEigenSolver<Matrix> es(c, true);
    if (es.info() != Eigen::Success) throw EigensolveFailure("mean matrix eigensolve did not converge");
    // canonical order keeps band index j reproducible
    std::vector<int> idx(m);
    for (int i = 0; i < m; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        return canonical_less(es.eigenvalues()(a), es.eigenvalues()(b));
    });
    Matrix V(m, m);
    sys.mu.resize(m);
    for (int j = 0; j < m; ++j) {
        sys.mu(j) = es.eigenvalues()(idx[j]);
        V.col(j) = es.eigenvectors().col(idx[j]).normalized();
    }
    const Matrix Vinv = V.inverse();
    for (int j = 0; j < m; ++j) {
        sys.v.push_back(V.col(j));
        sys.u.push_back(Vinv.row(j).adjoint());
    }
    return sys;
}

}  // namespace detail

/// Eigensystem of C = mean of P_2; rejects nearly repeated μ.
inline MeanEigensystem validate_spec(const OperatorSpec& spec, double gap_tol = 1e-8) {
    check_structure(spec);
    const Matrix c = spec.mean_matrix();
    const double cnorm = c.norm();
    MeanEigensystem sys = detail::eigensystem_of(c, spec.order);
    const int m = sys.dim();
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j)
            if (std::abs(sys.mu(i) - sys.mu(j)) <= gap_tol * (1.0 + cnorm))
                throw DegenerateMeanMatrix("eigenvalues " + std::to_string(i) + " and " +
                                           std::to_string(j) + " of C coincide within gap_tol");
    return sys;
}

/// Reference system with μ = 0 and the standard basis; used to label spectra
/// when C has repeated eigenvalues (e.g. the free operator with m > 1).
inline MeanEigensystem standard_reference(int order, int dim) {
    MeanEigensystem sys;
    sys.order = order;
    sys.C = Matrix::Zero(dim, dim);
    sys.mu = Vector::Zero(dim);
    for (int j = 0; j < dim; ++j) {
        Vector e = Vector::Zero(dim);
        e(j) = 1.0;
        sys.v.push_back(e);
        sys.u.push_back(e);
    }
    return sys;
}

/// e(t) = (∫_0^1 |e^{itx}|^2 dx)^{-1/2}; equals 1 for real t.
inline double quasi_norm_factor(cplx t) {
    const double s = -2.0 * t.imag();
    if (std::abs(s) < 1e-8) return 1.0 / std::sqrt(1.0 + s / 2.0 + s * s / 6.0);
    return 1.0 / std::sqrt(std::expm1(s) / s);
}

/// μ_{k,j}(t) = (i(2πk+t))^n + μ_j (i(2πk+t))^{n-2}.
inline cplx unperturbed_eigenvalue(const MeanEigensystem& sys, int k, int j, cplx t) {
    return free_symbol(k, t, sys.order) + sys.mu(j) * free_symbol(k, t, sys.order - 2);
}

struct UnperturbedPair {
    cplx eigenvalue;
    int mode = 0;    // Fourier index carrying the profile
    Vector profile;  // e(t) v_j
};

/// Closed-form eigenpair of the constant-coefficient fiber; j is 0-based.
inline UnperturbedPair unperturbed_eigenpair(const MeanEigensystem& sys, int k, int j, cplx t) {
    if (j < 0 || j >= sys.dim())
        throw InvalidArgument("band index " + std::to_string(j) + " outside [0, m)");
    return {unperturbed_eigenvalue(sys, k, j, t), k, quasi_norm_factor(t) * sys.v[j]};
}

}  // namespace floquet
