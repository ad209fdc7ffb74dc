#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "floquet/error.hpp"
#include "floquet/linalg.hpp"
#include "floquet/operator.hpp"
#include "floquet/types.hpp"

namespace floquet {

/// Galerkin basis e_s e^{i(2πp+t)x}, p = -K..K, flattened as (p+K)*m + s.
struct BlochBasis {
    int K = 0;
    int m = 1;
    int size() const { return m * (2 * K + 1); }
    int index(int p, int s) const { return (p + K) * m + s; }
    int mode_of(int i) const { return i / m - K; }
    int component_of(int i) const { return i % m; }
};

namespace detail {

inline void check_truncation(const OperatorSpec& spec, int K) {
    if (K < 0) throw InvalidArgument("truncation K must be >= 0");
    if (K < spec.max_bandwidth())
        throw TruncationTooSmall("K = " + std::to_string(K) + " below coefficient bandwidth " +
                                 std::to_string(spec.max_bandwidth()));
}

/// Shared assembly loop; `symbol(p, power)` supplies the mode-dependent scalar.
template <class Symbol>
Matrix assemble_with(const OperatorSpec& spec, int K, Symbol symbol) {
    check_structure(spec);
    check_truncation(spec, K);
    const BlochBasis basis{K, spec.dim};
    const int m = spec.dim, n = spec.order;
    Matrix a = Matrix::Zero(basis.size(), basis.size());
    for (int p = -K; p <= K; ++p) {
        const cplx d = symbol(p, n);
        for (int s = 0; s < m; ++s) a(basis.index(p, s), basis.index(p, s)) += d;
    }
    for (const auto& [nu, series] : spec.coeffs) {
        const int q_max = series.effective_bandwidth();
        for (int p = -K; p <= K; ++p) {
            const cplx w = symbol(p, n - nu);
            if (w == cplx{}) continue;
            for (int q = -q_max; q <= q_max; ++q) {
                const int row_mode = p + q;
                if (row_mode < -K || row_mode > K) continue;
                const Matrix& c = series.mode(q);
                if (c.isZero(0.0)) continue;
                a.block(basis.index(row_mode, 0), basis.index(p, 0), m, m) += w * c;
            }
        }
    }
    return a;
}

}  // namespace detail

/// Matrix of L_t on the truncated basis; exact, no quadrature.
inline Matrix assemble_bloch_matrix(const OperatorSpec& spec, cplx t, int K) {
    return detail::assemble_with(spec, K, [t](int p, int power) { return free_symbol(p, t, power); });
}

/// dA/dt, for eigenvalue slopes.
inline Matrix assemble_bloch_derivative(const OperatorSpec& spec, cplx t, int K) {
    return detail::assemble_with(
        spec, K, [t](int p, int power) { return free_symbol_derivative(p, t, power); });
}

enum class LabelKind { asymptotic, small };

/// (k, j) from matching to the unperturbed family; `kind` says whether the
/// eigenvalue sits in its asymptotic disk, `small_index` numbers the rest.
struct BandLabel {
    int k = 0;
    int j = 0;
    LabelKind kind = LabelKind::small;
    int small_index = -1;

    bool same_band(const BandLabel& o) const { return k == o.k && j == o.j; }
};

struct BlochPair {
    BandLabel label;
    cplx lambda;
    Vector psi;     // unit coefficient norm
    Vector x_left;  // (x_left, psi) = 1 unless defective; unit norm otherwise
    cplx alpha;     // (ψ*, ψ) for unit ψ*, ψ
    bool defective = false;
};

struct BlochSpectrum {
    cplx t;
    int K = 0;
    int m = 1;
    int n = 2;
    std::vector<BlochPair> pairs;

    BlochBasis basis() const { return {K, m}; }
};

struct SolverOptions {
    int K = 24;
    double defect_tol = 1e-8;
    double cluster_tol = 1e-6;  // relative distance for local re-biorthogonalization
    bool label = true;
};

/// Pairs each eigenvalue with a slot (k, j) of the unperturbed family by optimal
/// assignment on |λ - μ_{k,j}(t)|; exact ties go to the larger projection on v_j.
inline void assign_labels(std::vector<BlochPair>& pairs, const MeanEigensystem& ref, cplx t, int K) {
    const int m = ref.dim(), n = ref.order;
    const BlochBasis basis{K, m};
    const int N = basis.size();
    if (static_cast<int>(pairs.size()) != N) throw InvalidArgument("spectrum size mismatch");
    std::vector<cplx> mu(N);
    for (int k = -K; k <= K; ++k)
        for (int j = 0; j < m; ++j) mu[basis.index(k, j)] = unperturbed_eigenvalue(ref, k, j, t);
    Eigen::MatrixXd cost(N, N);
    for (int i = 0; i < N; ++i) {
        const Vector& psi = pairs[i].psi;
        for (int k = -K; k <= K; ++k) {
            const auto block = psi.segment(basis.index(k, 0), m);
            for (int j = 0; j < m; ++j) {
                const int s = basis.index(k, j);
                const double overlap = std::min(1.0, std::abs(ref.u[j].dot(block)));
                cost(i, s) = std::abs(pairs[i].lambda - mu[s]) +
                             1e-9 * (1.0 + std::abs(mu[s])) * (1.0 - overlap);
            }
        }
    }
    const std::vector<int> slot = solve_assignment(cost);
    int small = 0;
    for (int i = 0; i < N; ++i) {
        BandLabel& lab = pairs[i].label;
        lab.k = basis.mode_of(slot[i]);
        lab.j = basis.component_of(slot[i]);
        const double radius = std::pow(std::abs(lab.k), n - 1);
        const bool in_disk =
            lab.k != 0 && std::abs(pairs[i].lambda - free_symbol(lab.k, t, n)) < radius;
        lab.kind = in_disk ? LabelKind::asymptotic : LabelKind::small;
        lab.small_index = in_disk ? -1 : small++;
    }
}

/// Reference system for labeling: the mean eigensystem when C has simple
/// eigenvalues, otherwise μ = 0 with the standard basis.
inline MeanEigensystem labeling_reference(const OperatorSpec& spec) {
    try {
        return validate_spec(spec);
    } catch (const DegenerateMeanMatrix&) {
        return standard_reference(spec.order, spec.dim);
    }
}

class BlochSolver {
public:
    explicit BlochSolver(OperatorSpec spec, SolverOptions options = {})
        : spec_(std::move(spec)), options_(options) {
        check_structure(spec_);
        detail::check_truncation(spec_, options_.K);
        reference_ = labeling_reference(spec_);
    }

    const OperatorSpec& spec() const { return spec_; }
    const SolverOptions& options() const { return options_; }
    const MeanEigensystem& reference() const { return reference_; }
    int truncation() const { return options_.K; }
    BlochBasis basis() const { return {options_.K, spec_.dim}; }

    BlochSpectrum solve(cplx t) const {
        const int K = options_.K;
        EigenDecomposition eig = nonsymmetric_eigen(assemble_bloch_matrix(spec_, t, K));
        const int N = static_cast<int>(eig.values.size());
        rebiorthogonalize_clusters(eig);

        BlochSpectrum out;
        out.t = t;
        out.K = K;
        out.m = spec_.dim;
        out.n = spec_.order;
        out.pairs.resize(N);
        for (int i = 0; i < N; ++i) {
            BlochPair& pr = out.pairs[i];
            pr.lambda = eig.values(i);
            pr.psi = eig.right.col(i).normalized();
            Vector star = eig.left.col(i).normalized();
            pr.alpha = pr.psi.dot(star);
            pr.defective = std::abs(pr.alpha) <= options_.defect_tol;
            pr.x_left = pr.defective ? star : Vector(star / pr.alpha);
        }
        std::sort(out.pairs.begin(), out.pairs.end(),
                  [](const BlochPair& a, const BlochPair& b) { return canonical_less(a.lambda, b.lambda); });
        if (options_.label) assign_labels(out.pairs, reference_, t, K);
        return out;
    }

private:
    /// Within groups of nearly equal eigenvalues LAPACK's left and right vectors
    /// are not mutually biorthogonal; restore it with W ← W G^{-H}, G = W^H V.
    void rebiorthogonalize_clusters(EigenDecomposition& eig) const {
        const int N = static_cast<int>(eig.values.size());
        std::vector<int> parent(N);
        std::iota(parent.begin(), parent.end(), 0);
        auto find = [&](int i) {
            while (parent[i] != i) i = parent[i] = parent[parent[i]];
            return i;
        };
        bool any = false;
        for (int i = 0; i < N; ++i)
            for (int j = i + 1; j < N; ++j) {
                const double scale = 1.0 + std::max(std::abs(eig.values(i)), std::abs(eig.values(j)));
                if (std::abs(eig.values(i) - eig.values(j)) <= options_.cluster_tol * scale) {
                    parent[find(i)] = find(j);
                    any = true;
                }
            }
        if (!any) return;
        std::vector<std::vector<int>> groups(N);
        for (int i = 0; i < N; ++i) groups[find(i)].push_back(i);
        for (const auto& g : groups) {
            if (g.size() < 2) continue;
            const int p = static_cast<int>(g.size());
            Matrix Vg(N, p), Wg(N, p);
            for (int c = 0; c < p; ++c) {
                Vg.col(c) = eig.right.col(g[c]);
                Wg.col(c) = eig.left.col(g[c]);
            }
            const Matrix G = Wg.adjoint() * Vg;
            Eigen::JacobiSVD<Matrix> svd(G);
            if (svd.singularValues().minCoeff() <= options_.defect_tol) continue;
            const Matrix corrected = Wg * G.inverse().adjoint();
            for (int c = 0; c < p; ++c) eig.left.col(g[c]) = corrected.col(c);
        }
    }

    OperatorSpec spec_;
    SolverOptions options_;
    MeanEigensystem reference_;
};

inline BlochSpectrum solve_bloch(const OperatorSpec& spec, cplx t, int K) {
    SolverOptions opts;
    opts.K = K;
    return BlochSolver(spec, opts).solve(t);
}

/// dλ/dt = x^H A'(t) ψ per pair; NaN for defective pairs.
inline std::vector<cplx> eigenvalue_slopes(const OperatorSpec& spec, const BlochSpectrum& sp) {
    const Matrix d = assemble_bloch_derivative(spec, sp.t, sp.K);
    std::vector<cplx> out(sp.pairs.size());
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = 0; i < sp.pairs.size(); ++i) {
        const BlochPair& pr = sp.pairs[i];
        out[i] = pr.defective ? cplx{nan, nan} : pr.x_left.dot(d * pr.psi);
    }
    return out;
}

struct BiorthogonalityReport {
    double max_off_diagonal = 0.0;  // max_{i≠j} |(x_i, ψ_j)|
    double max_diagonal_error = 0.0;  // max_i |(x_i, ψ_i) - 1|
    int defective = 0;
};

/// Non-defective pairs only.
inline BiorthogonalityReport biorthogonality(const BlochSpectrum& sp) {
    BiorthogonalityReport r;
    std::vector<int> ok;
    for (std::size_t i = 0; i < sp.pairs.size(); ++i) {
        if (sp.pairs[i].defective) {
            ++r.defective;
            continue;
        }
        ok.push_back(static_cast<int>(i));
    }
    const int N = static_cast<int>(sp.pairs.empty() ? 0 : sp.pairs[0].psi.size());
    Matrix X(N, ok.size()), P(N, ok.size());
    for (std::size_t c = 0; c < ok.size(); ++c) {
        X.col(c) = sp.pairs[ok[c]].x_left;
        P.col(c) = sp.pairs[ok[c]].psi;
    }
    // (x_i, ψ_j) = ψ_j^H x_i
    const Matrix g = P.adjoint() * X;
    for (Eigen::Index j = 0; j < g.rows(); ++j)
        for (Eigen::Index i = 0; i < g.cols(); ++i) {
            if (i == j)
                r.max_diagonal_error = std::max(r.max_diagonal_error, std::abs(g(j, i) - 1.0));
            else
                r.max_off_diagonal = std::max(r.max_off_diagonal, std::abs(g(j, i)));
        }
    return r;
}

}  // namespace floquet
