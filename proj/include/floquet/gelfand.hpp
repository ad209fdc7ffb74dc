#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include "floquet/error.hpp"
#include "floquet/types.hpp"

namespace floquet {

enum class CellRepr { piecewise_constant, fourier };

namespace detail {

/// ∫_0^1 e^{-iωx} dx, stable near ω = 0.
inline cplx unit_exp_integral(cplx omega) {
    if (std::abs(omega) < 1e-4) {
        const cplx z = -kI * omega;  // ∫ e^{zx} = 1 + z/2 + z²/6 + z³/24 + ...
        return 1.0 + z * (0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z / 120.0)));
    }
    return (std::exp(-kI * omega) - 1.0) / (-kI * omega);
}

}  // namespace detail

/// Finitely supported m-vector function on the line. Cell k covers [k, k+1);
/// its data is either S piecewise-constant sub-cell values or Fourier modes
/// -R..R of the restriction, f(k + x) = Σ_q d_q e^{2πiqx}. Column-major: one
/// m-vector per sub-cell or mode.
class CellFunction {
public:
    CellFunction() = default;

    static CellFunction piecewise_constant(int dim, int first_cell, int subcells, std::vector<Matrix> cells) {
        return CellFunction(dim, first_cell, CellRepr::piecewise_constant, subcells, std::move(cells));
    }
    static CellFunction fourier(int dim, int first_cell, int bandwidth, std::vector<Matrix> cells) {
        return CellFunction(dim, first_cell, CellRepr::fourier, bandwidth, std::move(cells));
    }
    /// v·χ_{[first, first+1)}.
    static CellFunction indicator(const Vector& v, int first_cell = 0) {
        return piecewise_constant(static_cast<int>(v.size()), first_cell, 1, {Matrix(v)});
    }
    static CellFunction zero(int dim, CellRepr repr = CellRepr::piecewise_constant, int resolution = 1) {
        return CellFunction(dim, 0, repr, resolution, {});
    }

    int dim() const { return dim_; }
    CellRepr repr() const { return repr_; }
    int resolution() const { return resolution_; }  // S, or the mode bound R
    int first() const { return first_; }
    int end() const { return first_ + cells(); }
    int cells() const { return static_cast<int>(data_.size()); }
    bool empty() const { return data_.empty(); }
    int columns() const { return repr_ == CellRepr::fourier ? 2 * resolution_ + 1 : resolution_; }
    const Matrix& cell(int k) const { return data_.at(k - first_); }
    const std::vector<Matrix>& data() const { return data_; }

    /// Value on the cell, x ∈ [0,1); shared by BlochField.
    static Vector evaluate_cell(const Matrix& d, CellRepr repr, int resolution, double x) {
        if (repr == CellRepr::piecewise_constant) {
            const int s = std::clamp(static_cast<int>(std::floor(x * resolution)), 0, resolution - 1);
            return d.col(s);
        }
        Vector v = Vector::Zero(d.rows());
        for (int q = -resolution; q <= resolution; ++q) v += d.col(q + resolution) * std::exp(kI * (kTwoPi * q * x));
        return v;
    }

    Vector operator()(double x) const {
        const double fl = std::floor(x);
        const int k = static_cast<int>(fl);
        if (k < first_ || k >= end()) return Vector::Zero(dim_);
        return evaluate_cell(cell(k), repr_, resolution_, x - fl);
    }

    /// ∫_0^1 <g, h> over one cell of data in this representation (h conjugated).
    static cplx cell_inner(const Matrix& g, const Matrix& h, CellRepr repr, int resolution) {
        cplx s{};
        for (int c = 0; c < g.cols(); ++c) s += h.col(c).dot(g.col(c));
        return repr == CellRepr::piecewise_constant ? s / double(resolution) : s;
    }

    /// ∫ |f|² exactly.
    double norm2() const {
        double s = 0.0;
        for (const auto& d : data_) s += std::real(cell_inner(d, d, repr_, resolution_));
        return s;
    }

    /// ∫ f(y) e^{-iωy} dy, exact for both representations.
    Vector fourier_transform(cplx omega) const {
        Vector out = Vector::Zero(dim_);
        for (int k = first_; k < end(); ++k) {
            const Matrix& d = cell(k);
            Vector local = Vector::Zero(dim_);
            if (repr_ == CellRepr::piecewise_constant) {
                const double w = 1.0 / resolution_;
                // ∫_{s/S}^{(s+1)/S} e^{-iωx} = w e^{-iωs/S} E(ω w)
                const cplx e = w * detail::unit_exp_integral(omega * w);
                for (int s = 0; s < resolution_; ++s) local += d.col(s) * (e * std::exp(-kI * omega * (s * w)));
            } else {
                for (int q = -resolution_; q <= resolution_; ++q)
                    local += d.col(q + resolution_) * detail::unit_exp_integral(omega - kTwoPi * q);
            }
            out += local * std::exp(-kI * omega * double(k));
        }
        return out;
    }

    CellFunction& operator+=(const CellFunction& o) {
        if (o.empty()) return *this;
        if (empty()) {
            if (o.dim_ != dim_) throw InvalidArgument("cell function dimensions differ");
            *this = o;
            return *this;
        }
        if (o.dim_ != dim_ || o.repr_ != repr_ || o.resolution_ != resolution_)
            throw InvalidArgument("cell functions with different representations cannot be combined");
        const int lo = std::min(first_, o.first_), hi = std::max(end(), o.end());
        std::vector<Matrix> merged(hi - lo, Matrix::Zero(dim_, columns()));
        for (int k = first_; k < end(); ++k) merged[k - lo] += cell(k);
        for (int k = o.first_; k < o.end(); ++k) merged[k - lo] += o.cell(k);
        first_ = lo;
        data_ = std::move(merged);
        return *this;
    }
    CellFunction& operator*=(cplx a) {
        for (auto& d : data_) d *= a;
        return *this;
    }
    friend CellFunction operator+(CellFunction a, const CellFunction& b) { return a += b; }
    friend CellFunction operator*(cplx a, CellFunction f) { return f *= a; }
    friend CellFunction operator-(CellFunction a, const CellFunction& b) { return a += cplx(-1.0) * b; }

    /// Cells [lo, hi) of this function (possibly empty).
    CellFunction restrict_cells(int lo, int hi) const {
        lo = std::max(lo, first_);
        hi = std::min(hi, end());
        if (lo >= hi) return CellFunction(dim_, 0, repr_, resolution_, {});
        return CellFunction(dim_, lo, repr_, resolution_,
                            std::vector<Matrix>(data_.begin() + (lo - first_), data_.begin() + (hi - first_)));
    }

private:
    CellFunction(int dim, int first, CellRepr repr, int resolution, std::vector<Matrix> data)
        : dim_(dim), first_(first), repr_(repr), resolution_(resolution), data_(std::move(data)) {
        if (dim_ < 1) throw InvalidArgument("cell function dimension must be >= 1");
        if (resolution_ < (repr_ == CellRepr::fourier ? 0 : 1))
            throw InvalidArgument("invalid cell resolution " + std::to_string(resolution_));
        for (const auto& d : data_)
            if (d.rows() != dim_ || d.cols() != columns())
                throw InvalidArgument("cell data has shape " + std::to_string(d.rows()) + "x" +
                                      std::to_string(d.cols()) + ", expected " + std::to_string(dim_) + "x" +
                                      std::to_string(columns()));
    }

    int dim_ = 1;
    int first_ = 0;
    CellRepr repr_ = CellRepr::piecewise_constant;
    int resolution_ = 1;
    std::vector<Matrix> data_;
};

/// f_t on [0,1): exact cell data Σ_k f(·+k) e^{-ikt} and the quasi-periodic
/// coefficients c_p = F(2πp + t), |p| ≤ M, so f_t(x) = Σ_p c_p e^{i(2πp+t)x}.
struct BlochField {
    cplx t;
    int M = 0;
    Matrix coeffs;  // m × (2M+1), column p + M
    Matrix cell;    // combined cell data, same representation as the source
    CellRepr repr = CellRepr::piecewise_constant;
    int resolution = 1;

    int dim() const { return static_cast<int>(cell.rows()); }
    Vector mode(int p) const { return coeffs.col(p + M); }

    /// Exact value, extended by f_t(x+1) = e^{it} f_t(x).
    Vector operator()(double x) const {
        const double fl = std::floor(x);
        return CellFunction::evaluate_cell(cell, repr, resolution, x - fl) * std::exp(kI * t * fl);
    }

    /// ∫_0^1 |f_t|² from the cell data.
    double norm2() const { return std::real(CellFunction::cell_inner(cell, cell, repr, resolution)); }
};

inline BlochField gelfand_transform(const CellFunction& f, cplx t, int M) {
    if (M < 0) throw InvalidArgument("mode cutoff must be >= 0");
    BlochField b;
    b.t = t;
    b.M = M;
    b.repr = f.repr();
    b.resolution = f.resolution();
    b.cell = Matrix::Zero(f.dim(), f.columns());
    for (int k = f.first(); k < f.end(); ++k) b.cell += f.cell(k) * std::exp(-kI * t * double(k));
    b.coeffs.resize(f.dim(), 2 * M + 1);
    for (int p = -M; p <= M; ++p) b.coeffs.col(p + M) = f.fourier_transform(kTwoPi * p + t);
    return b;
}

/// f⁺ = cells < 0, f⁻ = cells ≥ 0.
inline std::pair<CellFunction, CellFunction> split_support(const CellFunction& f) {
    const int lo = std::min(f.first(), 0), hi = std::max(f.end(), 0);
    return {f.restrict_cells(lo, 0), f.restrict_cells(0, hi)};
}

/// Default periodic-trapezoid node count: next power of two ≥ 2·width + 1,
/// width being the largest |cell index| the transform sees.
inline int default_t_nodes(const CellFunction& f) {
    const int width = std::max({std::abs(f.first()), std::abs(f.end() - 1), f.cells()});
    int n = 1;
    while (n < 2 * width + 1) n *= 2;
    return n;
}

inline std::vector<double> periodic_trapezoid_nodes(int n) {
    std::vector<double> t(n);
    for (int i = 0; i < n; ++i) t[i] = kTwoPi * i / n;
    return t;
}

struct ParsevalResult {
    double lhs = 0.0;
    double rhs = 0.0;
    double residual = 0.0;
    bool zero_function = false;  // residual undefined; reported as exact
};

/// ∫|f|² against (1/2π)∫∫|f_t|² with an n-node periodic trapezoid rule in t.
inline ParsevalResult parseval_residual(const CellFunction& f, int t_nodes = 0) {
    if (t_nodes <= 0) t_nodes = default_t_nodes(f);
    ParsevalResult r;
    r.lhs = f.norm2();
    for (double t : periodic_trapezoid_nodes(t_nodes)) r.rhs += gelfand_transform(f, t, 0).norm2();
    r.rhs /= t_nodes;
    if (r.lhs == 0.0) {
        r.zero_function = true;
        return r;
    }
    r.residual = std::abs(r.lhs - r.rhs) / r.lhs;
    return r;
}

/// max |(1/2π)∫ f_t dt - f| over cell-0 data, relative to the largest data entry.
inline double inversion_residual(const CellFunction& f, int t_nodes = 0) {
    if (t_nodes <= 0) t_nodes = default_t_nodes(f);
    Matrix avg = Matrix::Zero(f.dim(), f.columns());
    for (double t : periodic_trapezoid_nodes(t_nodes)) avg += gelfand_transform(f, t, 0).cell;
    avg /= double(t_nodes);
    const Matrix target = (0 >= f.first() && 0 < f.end()) ? f.cell(0) : Matrix::Zero(f.dim(), f.columns());
    double scale = 0.0;
    for (const auto& d : f.data()) scale = std::max(scale, d.cwiseAbs().maxCoeff());
    if (scale == 0.0) return 0.0;
    return (avg - target).cwiseAbs().maxCoeff() / scale;
}

/// sup over t ∈ [0,2π] and x of |f_t(x)| (Euclidean norm in C^m), sampled.
inline double gelfand_sup(const CellFunction& f, int t_samples = 256, int x_samples = 64) {
    double M = 0.0;
    for (int i = 0; i < t_samples; ++i) {
        const BlochField b = gelfand_transform(f, kTwoPi * i / t_samples, 0);
        if (f.repr() == CellRepr::piecewise_constant) {
            for (int s = 0; s < f.resolution(); ++s) M = std::max(M, b.cell.col(s).norm());
        } else {
            for (int a = 0; a < x_samples; ++a) M = std::max(M, b((a + 0.5) / x_samples).norm());
        }
    }
    return M;
}

/// Random complex piecewise-constant function on cells [first, first + cells).
inline CellFunction random_cell_function(unsigned seed, int dim, int first, int cells, int subcells) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> nd;
    std::vector<Matrix> data;
    for (int k = 0; k < cells; ++k) {
        Matrix d(dim, subcells);
        for (int r = 0; r < dim; ++r)
            for (int c = 0; c < subcells; ++c) d(r, c) = cplx(nd(gen), nd(gen));
        data.push_back(d);
    }
    return CellFunction::piecewise_constant(dim, first, subcells, std::move(data));
}

}  // namespace floquet
