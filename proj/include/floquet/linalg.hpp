#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <vector>

#ifndef LAPACK_COMPLEX_CPP
#define LAPACK_COMPLEX_CPP
#endif
#include <lapacke.h>

#include "floquet/error.hpp"
#include "floquet/types.hpp"

namespace floquet {

struct EigenDecomposition {
    Vector values;
    Matrix right;  // columns, unit 2-norm
    Matrix left;   // columns w with w^H A = λ w^H, unit 2-norm
};

/// Dense non-Hermitian eigendecomposition with left and right vectors (zgeev).
inline EigenDecomposition nonsymmetric_eigen(Matrix a) {
    const lapack_int n = static_cast<lapack_int>(a.rows());
    EigenDecomposition out;
    out.values.resize(n);
    out.right.resize(n, n);
    out.left.resize(n, n);
    if (n == 0) return out;
    static_assert(sizeof(cplx) == sizeof(lapack_complex_double));
    const lapack_int info = LAPACKE_zgeev(
        LAPACK_COL_MAJOR, 'V', 'V', n, reinterpret_cast<lapack_complex_double*>(a.data()), n,
        reinterpret_cast<lapack_complex_double*>(out.values.data()),
        reinterpret_cast<lapack_complex_double*>(out.left.data()), n,
        reinterpret_cast<lapack_complex_double*>(out.right.data()), n);
    if (info != 0)
        throw EigensolveFailure("zgeev returned info = " + std::to_string(info));
    return out;
}

/// Gauss–Legendre nodes and weights on [-1, 1].
struct GaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

inline GaussRule gauss_legendre(int n) {
    GaussRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        // recompute derivative at the converged node
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
            const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.nodes[i] = -x;
        rule.nodes[n - 1 - i] = x;
        rule.weights[i] = w;
        rule.weights[n - 1 - i] = w;
    }
    if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
    return rule;
}

/// Nodes/weights of `rule` mapped to [a, b], appended to the output vectors.
inline void append_panel(const GaussRule& rule, double a, double b, std::vector<double>& nodes,
                         std::vector<double>& weights) {
    const double c = 0.5 * (a + b), r = 0.5 * (b - a);
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        nodes.push_back(c + r * rule.nodes[i]);
        weights.push_back(r * rule.weights[i]);
    }
}

/// Appends an `order`-point Gauss-Legendre panel on [a, b] to `out`.
inline void append_panel(GaussRule& out, double a, double b, int order) {
    static std::mutex mutex;
    static std::map<int, GaussRule> cache;
    const GaussRule* rule;
    {
        std::lock_guard lock(mutex);
        auto it = cache.find(order);
        if (it == cache.end()) it = cache.emplace(order, gauss_legendre(order)).first;
        rule = &it->second;
    }
    append_panel(*rule, a, b, out.nodes, out.weights);
}

/// Minimum-cost assignment rows → columns (rows ≤ cols), O(n^2 m) potentials method.
/// Returns assignment[row] = column.
inline std::vector<int> solve_assignment(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    const int m = static_cast<int>(cost.cols());
    if (n > m) throw InvalidArgument("assignment needs rows <= cols");
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
    std::vector<int> p(m + 1, 0), way(m + 1, 0);
    std::vector<char> used(m + 1);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> assignment(n, -1);
    for (int j = 1; j <= m; ++j)
        if (p[j] != 0) assignment[p[j] - 1] = j - 1;
    return assignment;
}

/// Least-squares slope of y against x.
inline double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (n < 2) return std::numeric_limits<double>::quiet_NaN();
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) mx += x[i], my += y[i];
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

}  // namespace floquet
