#pragma once

#include <array>
#include <cmath>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "floquet/error.hpp"
#include "floquet/operator.hpp"
#include "floquet/types.hpp"

namespace floquet {

/// Value and low-order partial derivatives of Δ(λ, t).
struct DeterminantJet {
    cplx value;
    cplx d_lambda;
    cplx d_lambda2;
    cplx d_t;
    cplx d_t2;
    cplx d_lambda_t;
};

/// Δ(λ,t) = det(Φ(1;λ) - e^{it} I) for the first-order system z = (y, y', ..., y^{(n-1)}),
/// Φ(0) = I. Derivatives come from trapezoid Cauchy integrals on small circles;
/// t enters only through e^{it}, so t-derivatives reuse the same monodromies.
class CharacteristicDeterminant {
public:
    explicit CharacteristicDeterminant(OperatorSpec spec, double tolerance = 1e-12, int circle_points = 8)
        : spec_(std::move(spec)), tol_(tolerance), points_(circle_points) {
        check_structure(spec_);
    }

    const OperatorSpec& spec() const { return spec_; }
    int size() const { return spec_.order * spec_.dim; }

    Matrix monodromy(cplx lambda) const {
        namespace ode = boost::numeric::odeint;
        using State = std::vector<cplx>;
        const int N = size(), m = spec_.dim, n = spec_.order;
        State z(static_cast<std::size_t>(N) * N, cplx{});
        for (int i = 0; i < N; ++i) z[static_cast<std::size_t>(i) * N + i] = 1.0;

        Matrix a = Matrix::Zero(N, N);
        for (int r = 0; r + 1 < n; ++r) a.block(r * m, (r + 1) * m, m, m).setIdentity();
        auto rhs = [&](const State& y, State& dy, double x) {
            a.block((n - 1) * m, 0, m, N).setZero();
            a.block((n - 1) * m, 0, m, m).diagonal().setConstant(lambda);
            for (const auto& [nu, series] : spec_.coeffs)
                a.block((n - 1) * m, (n - nu) * m, m, m) -= series.evaluate(x);
            Eigen::Map<const Matrix> Y(y.data(), N, N);
            Eigen::Map<Matrix> DY(dy.data(), N, N);
            DY.noalias() = a * Y;
        };
        const double dt0 = 1.0 / (16.0 * (1.0 + std::pow(std::abs(lambda), 1.0 / n)));
        try {
            auto stepper = ode::make_controlled(tol_, tol_, ode::runge_kutta_fehlberg78<State>());
            ode::integrate_adaptive(stepper, rhs, z, 0.0, 1.0, dt0);
        } catch (const std::exception& e) {
            throw IntegratorFailure(e.what());
        }
        Matrix phi = Eigen::Map<Matrix>(z.data(), N, N);
        if (!phi.allFinite()) throw IntegratorFailure("non-finite monodromy at lambda = " + to_string(lambda));
        return phi;
    }

    static cplx determinant_at(const Matrix& phi, cplx t) {
        Matrix d = phi;
        d.diagonal().array() -= std::exp(kI * t);
        return d.partialPivLu().determinant();
    }

    cplx operator()(cplx lambda, cplx t) const { return determinant_at(monodromy(lambda), t); }

    /// Circle radius used for λ-derivatives, scaled to the local eigenvalue spacing.
    double default_lambda_radius(cplx lambda) const {
        return 1e-3 * std::pow(1.0 + std::abs(lambda), (spec_.order - 1.0) / spec_.order);
    }

    /// Value and ∂/∂λ only (one circle of monodromies).
    DeterminantJet lambda_jet(cplx lambda, cplx t, double radius = 0.0) const {
        if (radius <= 0.0) radius = default_lambda_radius(lambda);
        DeterminantJet j{};
        j.value = (*this)(lambda, t);
        const int P = points_;
        cplx s1{}, s2{};
        for (int a = 0; a < P; ++a) {
            const cplx w = std::polar(1.0, kTwoPi * a / P);
            const cplx f = (*this)(lambda + radius * w, t);
            s1 += f / w;
            s2 += f / (w * w);
        }
        j.d_lambda = s1 / (P * radius);
        j.d_lambda2 = 2.0 * s2 / (P * radius * radius);
        return j;
    }

    /// Full jet including t and mixed derivatives.
    DeterminantJet jet(cplx lambda, cplx t, double lambda_radius = 0.0, double t_radius = 1e-3) const {
        if (lambda_radius <= 0.0) lambda_radius = default_lambda_radius(lambda);
        const int P = points_;
        std::vector<cplx> w(P);
        for (int a = 0; a < P; ++a) w[a] = std::polar(1.0, kTwoPi * a / P);

        DeterminantJet j{};
        const Matrix center = monodromy(lambda);
        j.value = determinant_at(center, t);
        cplx t1{}, t2{};
        for (int b = 0; b < P; ++b) {
            const cplx f = determinant_at(center, t + t_radius * w[b]);
            t1 += f / w[b];
            t2 += f / (w[b] * w[b]);
        }
        j.d_t = t1 / (P * t_radius);
        j.d_t2 = 2.0 * t2 / (P * t_radius * t_radius);

        cplx l1{}, l2{}, mixed{};
        for (int a = 0; a < P; ++a) {
            const Matrix phi = monodromy(lambda + lambda_radius * w[a]);
            const cplx f = determinant_at(phi, t);
            l1 += f / w[a];
            l2 += f / (w[a] * w[a]);
            cplx inner{};
            for (int b = 0; b < P; ++b) inner += determinant_at(phi, t + t_radius * w[b]) / w[b];
            mixed += inner / w[a];
        }
        j.d_lambda = l1 / (P * lambda_radius);
        j.d_lambda2 = 2.0 * l2 / (P * lambda_radius * lambda_radius);
        j.d_lambda_t = mixed / (double(P) * P * lambda_radius * t_radius);
        return j;
    }

private:
    static std::string to_string(cplx z) {
        return "(" + std::to_string(z.real()) + ", " + std::to_string(z.imag()) + ")";
    }

    OperatorSpec spec_;
    double tol_;
    int points_;
};

inline cplx characteristic_determinant(const OperatorSpec& spec, cplx lambda, cplx t) {
    return CharacteristicDeterminant(spec)(lambda, t);
}

/// Newton on Δ(·, t) until |Δ/Δ'| ≤ tol (1 + |λ|).
inline cplx refine_eigenvalue(const CharacteristicDeterminant& det, cplx t, cplx lambda0,
                              int max_iter = 50, double tol = 1e-10) {
    cplx lambda = lambda0;
    for (int it = 0; it < max_iter; ++it) {
        const DeterminantJet j = det.lambda_jet(lambda, t);
        if (j.value == cplx{}) return lambda;
        if (j.d_lambda == cplx{}) throw NoConvergence("vanishing derivative in eigenvalue refinement");
        const cplx step = j.value / j.d_lambda;
        lambda -= step;
        if (std::abs(step) <= tol * (1.0 + std::abs(lambda))) return lambda;
    }
    throw NoConvergence("eigenvalue refinement exceeded " + std::to_string(max_iter) + " iterations");
}

inline cplx refine_eigenvalue(const OperatorSpec& spec, cplx t, cplx lambda0, int max_iter = 50) {
    return refine_eigenvalue(CharacteristicDeterminant(spec), t, lambda0, max_iter);
}

/// |Δ/Δ'| at (λ, t): the size of the Newton correction.
inline double newton_correction(const CharacteristicDeterminant& det, cplx lambda, cplx t) {
    const DeterminantJet j = det.lambda_jet(lambda, t);
    return std::abs(j.value / j.d_lambda);
}

}  // namespace floquet
