#pragma once

#include <cmath>
#include <vector>

#include "floquet/error.hpp"
#include "floquet/types.hpp"

namespace floquet {

/// P(x) = Σ_{q=-Q..Q} Ĉ_q e^{i2πqx}, period 1.
class FourierMatrixSeries {
public:
    FourierMatrixSeries() = default;

    FourierMatrixSeries(int dim, int bandwidth) : dim_(dim), bandwidth_(bandwidth) {
        if (dim < 1) throw MalformedSpec("series dimension must be >= 1");
        if (bandwidth < 0) throw MalformedSpec("series bandwidth must be >= 0");
        modes_.assign(2 * bandwidth + 1, Matrix::Zero(dim, dim));
    }

    static FourierMatrixSeries constant(const Matrix& c) {
        if (c.rows() != c.cols()) throw MalformedSpec("constant coefficient must be square");
        FourierMatrixSeries s(static_cast<int>(c.rows()), 0);
        s.modes_[0] = c;
        return s;
    }

    int dim() const { return dim_; }
    int bandwidth() const { return bandwidth_; }

    const Matrix& mode(int q) const { return modes_.at(q + bandwidth_); }
    Matrix& mode(int q) { return modes_.at(q + bandwidth_); }

    /// Grows the bandwidth if needed, then adds `value` to mode q.
    void add_mode(int q, const Matrix& value) {
        if (value.rows() != dim_ || value.cols() != dim_)
            throw MalformedSpec("mode matrix has wrong shape");
        if (std::abs(q) > bandwidth_) widen(std::abs(q));
        mode(q) += value;
    }

    Matrix mean() const { return modes_.empty() ? Matrix() : mode(0); }

    /// Evaluation reduces x into [0,1) first so x and x+1 give the same phases.
    Matrix evaluate(double x) const {
        const double frac = x - std::floor(x);
        Matrix out = Matrix::Zero(dim_, dim_);
        for (int q = -bandwidth_; q <= bandwidth_; ++q) {
            const Matrix& c = mode(q);
            if (q != 0 && c.isZero(0.0)) continue;
            out += c * std::polar(1.0, kTwoPi * q * frac);
        }
        return out;
    }

    /// Bandwidth after dropping trailing all-zero modes.
    int effective_bandwidth() const {
        for (int q = bandwidth_; q > 0; --q)
            if (!mode(q).isZero(0.0) || !mode(-q).isZero(0.0)) return q;
        return 0;
    }

    FourierMatrixSeries& operator+=(const FourierMatrixSeries& other) {
        if (other.dim_ != dim_) throw MalformedSpec("series dimension mismatch");
        if (other.bandwidth_ > bandwidth_) widen(other.bandwidth_);
        for (int q = -other.bandwidth_; q <= other.bandwidth_; ++q) mode(q) += other.mode(q);
        return *this;
    }

private:
    void widen(int bandwidth) {
        std::vector<Matrix> modes(2 * bandwidth + 1, Matrix::Zero(dim_, dim_));
        for (int q = -bandwidth_; q <= bandwidth_; ++q) modes[q + bandwidth] = mode(q);
        modes_ = std::move(modes);
        bandwidth_ = bandwidth;
    }

    int dim_ = 0;
    int bandwidth_ = 0;
    std::vector<Matrix> modes_;
};

}  // namespace floquet
