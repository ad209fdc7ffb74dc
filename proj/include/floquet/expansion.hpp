#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "floquet/bands.hpp"
#include "floquet/bloch.hpp"
#include "floquet/error.hpp"
#include "floquet/gelfand.hpp"
#include "floquet/linalg.hpp"
#include "floquet/parallel.hpp"
#include "floquet/singularity.hpp"

namespace floquet {

struct QuadratureConfig {
    int regular_nodes = 200;   // total budget over the regular intervals
    int regular_order = 16;    // Gauss-Legendre points per panel
    int window_order = 16;     // zero/pi windows
    int stage_order = 8;       // per shell of a δ-stage
    int stages = 8;            // δ_i = ε 2^{-i}, i = 1..stages
    int richardson_terms = 3;
    double pv_tol = 1e-6;
    double defect_shift = 1e-6;  // defective node → average of t ± shift
};

struct Interval {
    double a = 0.0;
    double b = 0.0;
    double length() const { return b - a; }
};

struct SqWindow {
    double t_j = 0.0;
    double epsilon = 0.0;
    cplx Lambda;
    int multiplicity = 0;
    std::vector<BandLabel> B;           // integrable members
    std::vector<double> gamma_B;        // their fitted exponents
    std::vector<BandLabel> S;           // non-integrable and indeterminate members, one bracket
};

enum class CenterKind { zero, pi };

struct CenterWindow {
    CenterKind kind = CenterKind::zero;
    double center = 0.0;
    double h = 0.0;
    std::vector<SqWindow> sub_windows;
    std::vector<Interval> pieces;  // window minus sub-windows
};

struct ExpansionPlan {
    double h = 0.0;
    double epsilon = 0.0;
    std::vector<Interval> regular;
    std::vector<SqWindow> sq;
    CenterWindow zero;
    CenterWindow pi;
    QuadratureConfig quad;

    /// Sum of component lengths; 2π for a consistent plan.
    double total_length() const {
        double s = 0.0;
        for (const auto& r : regular) s += r.length();
        for (const auto& w : sq) s += 2 * w.epsilon;
        return s + 2 * zero.h + 2 * pi.h;
    }
};

namespace detail {

inline double wrap_window(double t, double h) {
    double u = std::fmod(t + h, kTwoPi);
    if (u <= 0.0) u += kTwoPi;
    return u - h;  // (−h, 2π−h]
}

inline SqWindow window_from_report(const DegeneracyReport& r, double t, double eps) {
    SqWindow w;
    w.t_j = t;
    w.epsilon = eps;
    w.Lambda = r.Lambda;
    w.multiplicity = r.multiplicity;
    for (const auto& m : r.members) {
        if (m.cls == MemberClass::integrable) {
            w.B.push_back(m.label);
            w.gamma_B.push_back(m.gamma);
        } else {
            w.S.push_back(m.label);
        }
    }
    return w;
}

inline std::vector<Interval> subtract(Interval base, std::vector<std::pair<double, double>> holes) {
    std::sort(holes.begin(), holes.end());
    std::vector<Interval> out;
    double cur = base.a;
    for (auto [lo, hi] : holes) {
        lo = std::max(lo, base.a);
        hi = std::min(hi, base.b);
        if (lo >= hi) continue;
        if (lo > cur) out.push_back({cur, lo});
        cur = std::max(cur, hi);
    }
    if (cur < base.b) out.push_back({cur, base.b});
    return out;
}

}  // namespace detail

/// Partition of (−h, 2π−h] into regular intervals, ε-windows around each
/// reported singular quasimomentum, and the paired windows at 0 and π.
inline ExpansionPlan plan_expansion(const std::vector<DegeneracyReport>& reports, double h, double eps,
                                    QuadratureConfig quad = {}) {
    if (!(h > 0.0) || h >= kPi / 2) throw InvalidArgument("h must lie in (0, π/2)");
    if (!(eps > 0.0)) throw InvalidArgument("epsilon must be positive");
    ExpansionPlan plan;
    plan.h = h;
    plan.epsilon = eps;
    plan.quad = quad;
    plan.zero = {CenterKind::zero, 0.0, h, {}, {}};
    plan.pi = {CenterKind::pi, kPi, h, {}, {}};

    for (const auto& r : reports) {
        const double t = detail::wrap_window(r.t_j, h);
        CenterWindow* center = nullptr;
        if (std::abs(t) < h) center = &plan.zero;
        if (std::abs(t - kPi) < h) center = &plan.pi;
        if (center) {
            center->sub_windows.push_back(detail::window_from_report(r, t, eps));
        } else {
            plan.sq.push_back(detail::window_from_report(r, t, eps));
        }
    }
    if (eps * plan.sq.size() >= h)
        throw EpsilonTooLarge("epsilon * " + std::to_string(plan.sq.size()) + " singular points must stay below h");
    std::sort(plan.sq.begin(), plan.sq.end(), [](const SqWindow& a, const SqWindow& b) { return a.t_j < b.t_j; });
    for (std::size_t i = 0; i < plan.sq.size(); ++i) {
        const double lo = plan.sq[i].t_j - eps, hi = plan.sq[i].t_j + eps;
        if (i + 1 < plan.sq.size() && hi > plan.sq[i + 1].t_j - eps)
            throw OverlappingWindows("windows around t = " + std::to_string(plan.sq[i].t_j) + " and " +
                                     std::to_string(plan.sq[i + 1].t_j) + " overlap");
        for (double c : {0.0, kPi, kTwoPi})
            if (lo < c + h && hi > c - h)
                throw OverlappingWindows("window around t = " + std::to_string(plan.sq[i].t_j) +
                                         " meets the window at " + std::to_string(c));
    }
    std::vector<std::pair<double, double>> holes;
    for (const auto& w : plan.sq) holes.push_back({w.t_j - w.epsilon, w.t_j + w.epsilon});
    for (Interval base : {Interval{h, kPi - h}, Interval{kPi + h, kTwoPi - h}})
        for (const auto& piece : detail::subtract(base, holes)) plan.regular.push_back(piece);

    // sub-windows shrink to stay inside their window and apart from each other
    for (CenterWindow* cw : {&plan.zero, &plan.pi}) {
        auto& subs = cw->sub_windows;
        std::sort(subs.begin(), subs.end(), [](const SqWindow& a, const SqWindow& b) { return a.t_j < b.t_j; });
        for (std::size_t i = 0; i < subs.size(); ++i) {
            double e = std::min({eps, subs[i].t_j - (cw->center - cw->h), (cw->center + cw->h) - subs[i].t_j});
            if (i > 0) e = std::min(e, 0.5 * (subs[i].t_j - subs[i - 1].t_j));
            if (i + 1 < subs.size()) e = std::min(e, 0.5 * (subs[i + 1].t_j - subs[i].t_j));
            if (!(e > 0.0)) throw OverlappingWindows("coincident singular points inside a center window");
            subs[i].epsilon = e;
        }
        std::vector<std::pair<double, double>> sh;
        for (const auto& s : subs) sh.push_back({s.t_j - s.epsilon, s.t_j + s.epsilon});
        cw->pieces = detail::subtract({cw->center - cw->h, cw->center + cw->h}, sh);
    }
    return plan;
}

/// Source of fiber spectra for the expansion.
class SpectrumProvider {
public:
    virtual ~SpectrumProvider() = default;
    virtual BlochSpectrum at(cplx t) const = 0;
    virtual int truncation() const = 0;
    virtual int dim() const = 0;
};

class SolvingProvider : public SpectrumProvider {
public:
    explicit SolvingProvider(const BlochSolver& solver) : solver_(solver) {}
    BlochSpectrum at(cplx t) const override { return solver_.solve(t); }
    int truncation() const override { return solver_.truncation(); }
    int dim() const override { return solver_.spec().dim; }

private:
    const BlochSolver& solver_;
};

/// Solves and keeps every real-t spectrum it hands out, for export.
class RecordingProvider : public SpectrumProvider {
public:
    explicit RecordingProvider(const BlochSolver& solver) : solver_(solver) {}
    BlochSpectrum at(cplx t) const override {
        BlochSpectrum sp = solver_.solve(t);
        if (t.imag() == 0.0) {
            std::lock_guard lock(mutex_);
            store_.emplace(t.real(), sp);
        }
        return sp;
    }
    int truncation() const override { return solver_.truncation(); }
    int dim() const override { return solver_.spec().dim; }

    /// Recorded spectra in ascending t; no band links.
    BandTable table() const {
        std::lock_guard lock(mutex_);
        BandTable out;
        for (const auto& [t, sp] : store_) {
            out.grid.push_back(t);
            out.spectra.push_back(sp);
        }
        return out;
    }

private:
    const BlochSolver& solver_;
    mutable std::mutex mutex_;
    mutable std::map<double, BlochSpectrum> store_;
};

/// Serves spectra from a table; every requested t must be a table node.
class TableProvider : public SpectrumProvider {
public:
    explicit TableProvider(BandTable table) : table_(std::move(table)) {
        if (table_.spectra.empty()) throw InvalidArgument("empty band table");
        for (std::size_t i = 0; i < table_.nodes(); ++i) index_.emplace(table_.grid[i], i);
    }
    BlochSpectrum at(cplx t) const override {
        if (t.imag() != 0.0) throw InvalidArgument("band table holds real quasimomenta only");
        auto it = index_.lower_bound(t.real() - 1e-14 * (1.0 + std::abs(t.real())));
        if (it == index_.end() || std::abs(it->first - t.real()) > 1e-14 * (1.0 + std::abs(t.real())))
            throw InvalidArgument("band table has no node at t = " + std::to_string(t.real()));
        return table_.spectra[it->second];
    }
    int truncation() const override { return table_.spectra.front().K; }
    int dim() const override { return table_.spectra.front().m; }

private:
    BandTable table_;
    std::map<double, std::size_t> index_;
};

/// x-samples on (−p, p): Gauss-Legendre panels of width ≤ 0.25 with breaks at the
/// integers, enough points per panel to resolve frequencies up to 2π(K+1).
struct SampleGrid {
    double p = 0.0;
    int K = 0;
    int m = 1;
    std::vector<double> x;
    std::vector<double> w;
    Matrix modes;  // modes(i, q+K) = e^{2πiqx_i}

    SampleGrid() = default;
    /// `plot` extra uniform points with zero weight ride along for plotting.
    SampleGrid(double half_width, int truncation, int dim, int plot = 0) : p(half_width), K(truncation), m(dim) {
        if (!(p > 0.0)) throw InvalidArgument("p must be positive");
        std::vector<double> breaks{-p};
        for (int k = static_cast<int>(std::ceil(-p)); k < p; ++k)
            if (k > -p) breaks.push_back(k);
        breaks.push_back(p);
        const double omega = kTwoPi * (K + 1);
        GaussRule rule;
        for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
            const double len = breaks[i + 1] - breaks[i];
            const int panels = std::max(1, static_cast<int>(std::ceil(len / 0.25 - 1e-12)));
            const double pl = len / panels;
            const int N = static_cast<int>(std::ceil(omega * pl / 2.0)) + 12;
            for (int j = 0; j < panels; ++j)
                append_panel(rule, breaks[i] + j * pl, breaks[i] + (j + 1) * pl, N);
        }
        x = rule.nodes;
        w = rule.weights;
        for (int i = 0; i < plot; ++i) {
            x.push_back(-p + (i + 0.5) * 2.0 * p / plot);
            w.push_back(0.0);
        }
        modes.resize(x.size(), 2 * K + 1);
        for (std::size_t i = 0; i < x.size(); ++i)
            for (int q = -K; q <= K; ++q) modes(i, q + K) = std::exp(kI * (kTwoPi * q * x[i]));
    }

    int points() const { return static_cast<int>(x.size()); }
    int size() const { return points() * m; }

    /// Samples of f, laid out [i·m + s].
    Vector sample(const CellFunction& f) const {
        Vector v(size());
        for (int i = 0; i < points(); ++i) v.segment(i * m, m) = f(x[i]);
        return v;
    }

    double norm(const Vector& v) const {
        double s = 0.0;
        for (int i = 0; i < points(); ++i) s += w[i] * v.segment(i * m, m).squaredNorm();
        return std::sqrt(s);
    }
};

struct Coefficient {
    BandLabel label;
    cplx a;      // (f_t, X); NaN when defective
    cplx raw;    // (f_t, ψ*) for the unit left vector
    cplx alpha;
    bool defective = false;
};

namespace detail {

/// c[(p+K)m + s] = F_s(2πp + t): f_t in the Galerkin basis.
inline Vector galerkin_coefficients(const CellFunction& f, cplx t, int K) {
    const int m = f.dim();
    Vector c(m * (2 * K + 1));
    for (int p = -K; p <= K; ++p) c.segment((p + K) * m, m) = f.fourier_transform(kTwoPi * p + t);
    return c;
}

}  // namespace detail

/// Biorthogonal coefficients of f_t against every pair of the spectrum. The field
/// must carry modes up to the spectrum's truncation.
inline std::vector<Coefficient> coefficients(const BlochField& field, const BlochSpectrum& sp) {
    if (field.M < sp.K) throw InvalidArgument("field modes below the spectrum truncation");
    if (field.dim() != sp.m) throw InvalidArgument("field and spectrum dimensions differ");
    Vector c(sp.m * (2 * sp.K + 1));
    for (int p = -sp.K; p <= sp.K; ++p) c.segment((p + sp.K) * sp.m, sp.m) = field.mode(p);
    std::vector<Coefficient> out;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& pr : sp.pairs) {
        Coefficient co;
        co.label = pr.label;
        co.alpha = pr.alpha;
        co.defective = pr.defective;
        if (pr.defective) {
            co.raw = pr.x_left.dot(c);
            co.a = cplx(nan, nan);
        } else {
            co.a = pr.x_left.dot(c);
            co.raw = std::conj(pr.alpha) * co.a;
        }
        out.push_back(co);
    }
    return out;
}

/// Pair indices per group for one spectrum.
using Grouping = std::function<std::vector<std::vector<int>>(const BlochSpectrum&)>;

namespace detail {

/// Samples Σ_{k∈group} a_k(t) Ψ_{k,t}(x_i) for every function and group at one t.
/// Result[f] is size() × groups. Nodes with a defective pair in use are replaced
/// by the mean over t ± shift.
inline std::vector<Matrix> evaluate_groups(const SpectrumProvider& provider, const std::vector<CellFunction>& fs,
                                           const Grouping& grouping, const SampleGrid& grid, cplx t,
                                           double shift, bool allow_shift = true) {
    const BlochSpectrum sp = provider.at(t);
    const auto groups = grouping(sp);
    bool defective = false;
    for (const auto& g : groups)
        for (int i : g) defective |= sp.pairs[i].defective;
    if (defective) {
        if (!allow_shift) throw NumericalError("defective pair persists after shifting the node");
        auto lo = evaluate_groups(provider, fs, grouping, grid, t - shift, shift, false);
        auto hi = evaluate_groups(provider, fs, grouping, grid, t + shift, shift, false);
        for (std::size_t f = 0; f < lo.size(); ++f) lo[f] = 0.5 * (lo[f] + hi[f]);
        return lo;
    }
    const int K = sp.K, m = sp.m, G = static_cast<int>(groups.size());
    if (grid.K != K || grid.m != m) throw InvalidArgument("sample grid does not match the spectrum truncation");
    const int F = static_cast<int>(fs.size());
    Matrix coef((2 * K + 1), F * G * m);  // column (f·G + g)·m + s
    for (int f = 0; f < F; ++f) {
        const Vector c = galerkin_coefficients(fs[f], t, K);
        for (int g = 0; g < G; ++g) {
            Vector acc = Vector::Zero(c.size());
            for (int i : groups[g]) acc += sp.pairs[i].x_left.dot(c) * sp.pairs[i].psi;
            for (int s = 0; s < m; ++s)
                for (int q = 0; q <= 2 * K; ++q) coef(q, (f * G + g) * m + s) = acc(q * m + s);
        }
    }
    const Matrix vals = grid.modes * coef;  // points × (F·G·m)
    std::vector<Matrix> out(F, Matrix(grid.size(), G));
    for (int i = 0; i < grid.points(); ++i) {
        const cplx phase = std::exp(kI * t * grid.x[i]);
        for (int f = 0; f < F; ++f)
            for (int g = 0; g < G; ++g)
                for (int s = 0; s < m; ++s) out[f](i * m + s, g) = phase * vals(i, (f * G + g) * m + s);
    }
    return out;
}

inline bool keep_label(const BandLabel& l, int k_max) {
    return l.kind != LabelKind::asymptotic || std::abs(l.k) <= k_max;
}

inline Grouping all_labels(int k_max) {
    return [k_max](const BlochSpectrum& sp) {
        std::vector<int> g;
        for (std::size_t i = 0; i < sp.pairs.size(); ++i)
            if (keep_label(sp.pairs[i].label, k_max)) g.push_back(static_cast<int>(i));
        return std::vector<std::vector<int>>{g};
    };
}

/// Group key for the paired windows: {±k} at 0, {k, −k−1} at π, small labels
/// share key −1.
inline int paired_key(const BandLabel& l, CenterKind kind) {
    if (l.kind != LabelKind::asymptotic) return -1;
    if (kind == CenterKind::zero) return std::abs(l.k);
    return l.k >= 0 ? l.k : -l.k - 1;
}

inline Grouping paired_groups(CenterKind kind, int k_max) {
    return [kind, k_max](const BlochSpectrum& sp) {
        std::map<int, std::vector<int>> by;
        for (std::size_t i = 0; i < sp.pairs.size(); ++i)
            if (keep_label(sp.pairs[i].label, k_max))
                by[paired_key(sp.pairs[i].label, kind)].push_back(static_cast<int>(i));
        std::vector<std::vector<int>> out;
        for (auto& [key, g] : by) out.push_back(std::move(g));
        return out;
    };
}

/// Indices of the p eigenvalues nearest Λ.
inline std::vector<int> cluster_indices(const BlochSpectrum& sp, cplx Lambda, int p) {
    std::vector<std::pair<double, int>> d;
    for (std::size_t i = 0; i < sp.pairs.size(); ++i) d.push_back({std::abs(sp.pairs[i].lambda - Lambda), int(i)});
    std::partial_sort(d.begin(), d.begin() + std::min<std::size_t>(p, d.size()), d.end());
    std::vector<int> out;
    for (int r = 0; r < p && r < static_cast<int>(d.size()); ++r) out.push_back(d[r].second);
    return out;
}

inline int find_label(const std::vector<BandLabel>& ls, const BandLabel& l) {
    for (std::size_t i = 0; i < ls.size(); ++i)
        if (ls[i].same_band(l)) return static_cast<int>(i);
    return -1;
}

/// Groups inside an SQ window: [rest, B members..., S bracket]. If the cluster's
/// labels at t do not match the report, the whole cluster becomes the bracket.
inline Grouping sq_groups(const SqWindow& w, int k_max) {
    return [w, k_max](const BlochSpectrum& sp) {
        const auto cl = cluster_indices(sp, w.Lambda, w.multiplicity);
        std::vector<std::vector<int>> out(1 + w.B.size() + 1);
        std::vector<char> in_cluster(sp.pairs.size(), 0);
        for (int i : cl) in_cluster[i] = 1;
        for (std::size_t i = 0; i < sp.pairs.size(); ++i)
            if (!in_cluster[i] && keep_label(sp.pairs[i].label, k_max)) out[0].push_back(static_cast<int>(i));
        std::vector<int> slot(cl.size(), -2);
        bool consistent = true;
        std::vector<char> usedB(w.B.size(), 0);
        for (std::size_t r = 0; r < cl.size(); ++r) {
            const BandLabel& l = sp.pairs[cl[r]].label;
            const int b = find_label(w.B, l);
            if (b >= 0 && !usedB[b]) {
                usedB[b] = 1;
                slot[r] = b;
            } else if (find_label(w.S, l) >= 0) {
                slot[r] = -1;
            } else {
                consistent = false;
            }
        }
        for (std::size_t r = 0; r < cl.size(); ++r) {
            if (!consistent || slot[r] == -1)
                out.back().push_back(cl[r]);
            else
                out[1 + slot[r]].push_back(cl[r]);
        }
        return out;
    };
}

/// Sub-window groups inside a center window: the paired groups that meet the
/// cluster are merged into one bracket, the rest stay together.
inline Grouping center_sub_groups(const SqWindow& w, CenterKind kind, int k_max) {
    return [w, kind, k_max](const BlochSpectrum& sp) {
        const auto cl = cluster_indices(sp, w.Lambda, w.multiplicity);
        std::vector<int> keys;
        for (int i : cl) keys.push_back(paired_key(sp.pairs[i].label, kind));
        std::vector<std::vector<int>> out(2);
        for (std::size_t i = 0; i < sp.pairs.size(); ++i) {
            if (!keep_label(sp.pairs[i].label, k_max)) continue;
            const int key = paired_key(sp.pairs[i].label, kind);
            const bool merged = std::find(keys.begin(), keys.end(), key) != keys.end() ||
                                std::find(cl.begin(), cl.end(), static_cast<int>(i)) != cl.end();
            out[merged ? 1 : 0].push_back(static_cast<int>(i));
        }
        return out;
    };
}

struct Node {
    double t;
    double w;
    int stage;  // 0 for plain panels, i ≥ 1 for shell (δ_i, δ_{i−1}]
};

inline std::vector<Node> panel_nodes(const std::vector<Interval>& pieces, double density, int order) {
    std::vector<Node> out;
    for (const auto& iv : pieces) {
        if (iv.length() <= 0.0) continue;
        const int panels = std::max(1, static_cast<int>(std::lround(iv.length() * density)));
        GaussRule r;
        for (int j = 0; j < panels; ++j)
            append_panel(r, iv.a + iv.length() * j / panels, iv.a + iv.length() * (j + 1) / panels, order);
        for (std::size_t i = 0; i < r.nodes.size(); ++i) out.push_back({r.nodes[i], r.weights[i], 0});
    }
    return out;
}

inline std::vector<Node> shell_nodes(double t_j, double eps, int stages, int order) {
    std::vector<Node> out;
    for (int i = 1; i <= stages; ++i) {
        const double outer = eps * std::ldexp(1.0, -(i - 1)), inner = eps * std::ldexp(1.0, -i);
        for (int side : {-1, 1}) {
            GaussRule r;
            const double a = t_j + side * outer, b = t_j + side * inner;
            append_panel(r, std::min(a, b), std::max(a, b), order);
            for (std::size_t a = 0; a < r.nodes.size(); ++a) out.push_back({r.nodes[a], r.weights[a], i});
        }
    }
    return out;
}

}  // namespace detail

/// Result of a δ-limit for one group.
struct DeltaLimit {
    Vector value;               // extrapolated limit
    std::vector<Vector> stages;  // A_i = ∫_{δ_i < |t − t_j| ≤ ε}, i = 1..stages
    std::vector<Vector> extrapolated;  // limit estimate from the stages ending at i
    double change = 0.0;        // ‖last − previous estimate‖
    double scale = 0.0;
    bool cauchy = false;
};

/// Generalized Richardson on A(δ) = A + Σ_l c_l δ^{e_l} using the last
/// exponents.size()+1 stages, plus the Cauchy test between the estimates
/// ending at the last and the second-to-last stage.
inline DeltaLimit delta_limit(std::vector<Vector> stages, double eps, const std::vector<double>& exponents,
                              double pv_tol, const std::function<double(const Vector&)>& norm) {
    const int S = static_cast<int>(stages.size());
    const int L = static_cast<int>(exponents.size());
    if (S < L + 2) throw InvalidArgument("need at least " + std::to_string(L + 2) + " δ-stages");
    DeltaLimit out;
    out.stages = std::move(stages);
    out.extrapolated.assign(S, Vector());
    for (int end = L + 1; end <= S; ++end) {
        Eigen::MatrixXd V(L + 1, L + 1);
        for (int r = 0; r <= L; ++r) {
            const double delta = eps * std::ldexp(1.0, -(end - L + r));
            V(r, 0) = 1.0;
            for (int l = 0; l < L; ++l) V(r, l + 1) = std::pow(delta, exponents[l]);
        }
        const Eigen::VectorXd row = V.transpose().fullPivLu().solve(Eigen::VectorXd::Unit(L + 1, 0));
        Vector est = Vector::Zero(out.stages[0].size());
        for (int r = 0; r <= L; ++r) est += row(r) * out.stages[end - L + r - 1];
        out.extrapolated[end - 1] = est;
    }
    out.value = out.extrapolated[S - 1];
    out.scale = norm(out.value);
    out.change = norm(out.extrapolated[S - 1] - out.extrapolated[S - 2]);
    out.cauchy = out.change <= pv_tol * std::max(1.0, out.scale);
    return out;
}

inline std::vector<double> richardson_exponents(double gamma, int terms) {
    int q = 1;
    if (gamma > 0.05 && gamma < 0.95) q = std::max(1, static_cast<int>(std::lround(1.0 / (1.0 - gamma))));
    std::vector<double> e;
    for (int l = 1; l <= terms; ++l) e.push_back(double(l) / q);
    return e;
}

namespace detail {

/// Integrates every group of `grouping` over the δ-shells around t_j and returns
/// the per-function, per-group stage sums (stages × [size × groups]).
inline std::vector<std::vector<Matrix>> shell_sums(const SpectrumProvider& provider, const std::vector<CellFunction>& fs,
                                                  const Grouping& grouping, int groups, const SampleGrid& grid,
                                                  double t_j, double eps, const QuadratureConfig& q, int* nodes_used) {
    const auto nodes = shell_nodes(t_j, eps, q.stages, q.stage_order);
    auto vals = parallel_map(nodes.size(), [&](std::size_t i) {
        return evaluate_groups(provider, fs, grouping, grid, nodes[i].t, q.defect_shift);
    });
    if (nodes_used) *nodes_used += static_cast<int>(nodes.size());
    std::vector<std::vector<Matrix>> out(fs.size(), std::vector<Matrix>(q.stages, Matrix::Zero(grid.size(), groups)));
    for (std::size_t i = 0; i < nodes.size(); ++i)
        for (std::size_t f = 0; f < fs.size(); ++f) {
            if (vals[i][f].cols() != groups) throw InvalidArgument("grouping changed size between nodes");
            out[f][nodes[i].stage - 1] += nodes[i].w * vals[i][f];
        }
    // cumulative: A_i covers shells 1..i
    for (auto& per_f : out)
        for (int s = 1; s < q.stages; ++s) per_f[s] += per_f[s - 1];
    return out;
}

inline std::vector<Vector> column_stages(const std::vector<Matrix>& stages, int g) {
    std::vector<Vector> out;
    for (const auto& m : stages) out.push_back(m.col(g));
    return out;
}

}  // namespace detail

/// Principal-value integral of Σ_{k∈group} a_k Ψ_k over δ < |t − t_j| ≤ ε, the
/// group taken among the `multiplicity` eigenvalues nearest Λ. Throws NotCauchy
/// when the δ-sequence does not settle.
inline DeltaLimit bracket_integral(const std::vector<BandLabel>& group, double t_j, cplx Lambda, int multiplicity,
                                   double eps, const CellFunction& f, const SpectrumProvider& provider,
                                   const SampleGrid& grid, const QuadratureConfig& q = {}, double gamma = 0.0,
                                   bool throw_on_failure = true) {
    Grouping g = [&](const BlochSpectrum& sp) {
        std::vector<int> sel;
        for (int i : detail::cluster_indices(sp, Lambda, multiplicity))
            if (detail::find_label(group, sp.pairs[i].label) >= 0) sel.push_back(i);
        return std::vector<std::vector<int>>{sel};
    };
    auto sums = detail::shell_sums(provider, {f}, g, 1, grid, t_j, eps, q, nullptr);
    auto res = delta_limit(detail::column_stages(sums[0], 0), eps, richardson_exponents(gamma, q.richardson_terms),
                           q.pv_tol, [&](const Vector& v) { return grid.norm(v); });
    if (throw_on_failure && !res.cauchy)
        throw NotCauchy("bracket at t = " + std::to_string(t_j) + " changed by " + std::to_string(res.change) +
                        " between the last δ-stages");
    return res;
}

struct ExpansionOptions {
    int k_max = 0;  // 0: every label
    bool throw_not_cauchy = true;
    int plot_points = 0;
};

struct ContributionRecord {
    std::string name;
    Vector samples;  // unweighted values at the grid, [i·m + s]
    double norm = 0.0;
};

struct ReconstructionResult {
    std::shared_ptr<const SampleGrid> grid;
    Vector f;
    Vector f_hat;
    std::vector<ContributionRecord> contributions;
    std::vector<DeltaLimit> brackets;  // one per δ-limit group, in plan order
    double norm_f = 0.0;
    double error_l2 = 0.0;
    int K = 0;
    int k_max = 0;
    int t_nodes = 0;

    double relative_error() const { return norm_f > 0.0 ? error_l2 / norm_f : error_l2; }
};

namespace detail {

inline double panel_density(const ExpansionPlan& plan) {
    double len = 0.0;
    for (const auto& r : plan.regular) len += r.length();
    const int panels = std::max<int>(static_cast<int>(plan.regular.size()),
                                     static_cast<int>(std::lround(double(plan.quad.regular_nodes) / plan.quad.regular_order)));
    return len > 0.0 ? panels / len : 1.0;
}

/// ∫ over plain panels for every function (one group).
inline std::vector<Vector> integrate_panels(const SpectrumProvider& provider, const std::vector<CellFunction>& fs,
                                            const Grouping& grouping, const SampleGrid& grid,
                                            const std::vector<Node>& nodes, double shift, int* used) {
    auto vals = parallel_map(nodes.size(), [&](std::size_t i) {
        return evaluate_groups(provider, fs, grouping, grid, nodes[i].t, shift);
    });
    *used += static_cast<int>(nodes.size());
    std::vector<Vector> out(fs.size(), Vector::Zero(grid.size()));
    for (std::size_t i = 0; i < nodes.size(); ++i)
        for (std::size_t f = 0; f < fs.size(); ++f) out[f] += nodes[i].w * vals[i][f].rowwise().sum();
    return out;
}

}  // namespace detail

/// f_hat = (1/2π)[regular + SQ windows + paired windows] for each function in one
/// pass over the quasimomentum nodes. `regular_only` drops the windows (the
/// partial expansion of the approximation bound).
inline std::vector<ReconstructionResult> reconstruct(const std::vector<CellFunction>& fs, const ExpansionPlan& plan,
                                                     const SpectrumProvider& provider, double p,
                                                     ExpansionOptions opts = {}, bool regular_only = false) {
    const int K = provider.truncation(), m = provider.dim();
    for (const auto& f : fs)
        if (f.dim() != m) throw InvalidArgument("function dimension differs from the operator");
    const int k_max = opts.k_max > 0 ? std::min(opts.k_max, K) : K;
    auto grid = std::make_shared<SampleGrid>(p, K, m, opts.plot_points);
    const auto& q = plan.quad;
    const double norm2pi = 1.0 / kTwoPi;
    int used = 0;
    const std::size_t F = fs.size();
    std::vector<ReconstructionResult> res(F);
    for (std::size_t f = 0; f < F; ++f) {
        res[f].grid = grid;
        res[f].f = grid->sample(fs[f]);
        res[f].norm_f = grid->norm(res[f].f);
        res[f].K = K;
        res[f].k_max = k_max;
    }
    auto add = [&](std::size_t f, std::string name, Vector v) {
        v *= norm2pi;
        const double n = grid->norm(v);
        res[f].contributions.push_back({std::move(name), std::move(v), n});
    };
    auto stage_limits = [&](const std::vector<std::vector<Matrix>>& sums, std::size_t f, int G, double eps,
                            const std::vector<std::vector<double>>& exps, double t_j) {
        Vector total = Vector::Zero(grid->size());
        for (int g = 0; g < G; ++g) {
            auto lim = delta_limit(detail::column_stages(sums[f], g), eps, exps[g], q.pv_tol,
                                   [&](const Vector& v) { return grid->norm(v); });
            if (!lim.cauchy && opts.throw_not_cauchy)
                throw NotCauchy("δ-limit at t = " + std::to_string(t_j) + " failed the Cauchy test (change " +
                                std::to_string(lim.change) + ")");
            total += lim.value;
            res[f].brackets.push_back(std::move(lim));
        }
        return total;
    };

    const double density = detail::panel_density(plan);
    auto reg = detail::integrate_panels(provider, fs, detail::all_labels(k_max), *grid,
                                        detail::panel_nodes(plan.regular, density, q.regular_order), q.defect_shift,
                                        &used);
    for (std::size_t f = 0; f < F; ++f) add(f, "regular", reg[f]);

    if (!regular_only) {
        for (std::size_t w = 0; w < plan.sq.size(); ++w) {
            const SqWindow& win = plan.sq[w];
            const int G = 2 + static_cast<int>(win.B.size());
            std::vector<std::vector<double>> exps(G, richardson_exponents(0.0, q.richardson_terms));
            for (std::size_t b = 0; b < win.B.size(); ++b)
                exps[1 + b] = richardson_exponents(win.gamma_B[b], q.richardson_terms);
            auto sums = detail::shell_sums(provider, fs, detail::sq_groups(win, k_max), G, *grid, win.t_j,
                                           win.epsilon, q, &used);
            for (std::size_t f = 0; f < F; ++f)
                add(f, "sq@" + std::to_string(win.t_j), stage_limits(sums, f, G, win.epsilon, exps, win.t_j));
        }
        for (const CenterWindow* cw : {&plan.zero, &plan.pi}) {
            const std::string name = cw->kind == CenterKind::zero ? "zero" : "pi";
            const double wd = std::max(density, 1.0 / (2.0 * cw->h));
            auto main = detail::integrate_panels(provider, fs, detail::paired_groups(cw->kind, k_max), *grid,
                                                 detail::panel_nodes(cw->pieces, wd, q.window_order),
                                                 q.defect_shift, &used);
            for (const auto& sub : cw->sub_windows) {
                std::vector<std::vector<double>> exps(2, richardson_exponents(0.0, q.richardson_terms));
                auto sums = detail::shell_sums(provider, fs, detail::center_sub_groups(sub, cw->kind, k_max), 2,
                                               *grid, sub.t_j, sub.epsilon, q, &used);
                for (std::size_t f = 0; f < F; ++f)
                    main[f] += stage_limits(sums, f, 2, sub.epsilon, exps, sub.t_j);
            }
            for (std::size_t f = 0; f < F; ++f) add(f, name, main[f]);
        }
    }
    for (std::size_t f = 0; f < F; ++f) {
        res[f].f_hat = Vector::Zero(grid->size());
        for (const auto& c : res[f].contributions) res[f].f_hat += c.samples;
        res[f].error_l2 = grid->norm(res[f].f - res[f].f_hat);
        res[f].t_nodes = used;
    }
    return res;
}

inline ReconstructionResult reconstruct(const CellFunction& f, const ExpansionPlan& plan,
                                        const SpectrumProvider& provider, double p, ExpansionOptions opts = {}) {
    return reconstruct(std::vector<CellFunction>{f}, plan, provider, p, opts).front();
}

/// Σ_{paired groups} ∫ over one center window (with its sub-windows), scaled by 1/2π.
inline Vector paired_window_integral(CenterKind kind, const CellFunction& f, const ExpansionPlan& plan,
                                     const SpectrumProvider& provider, double p, ExpansionOptions opts = {}) {
    ExpansionPlan only = plan;
    only.regular.clear();
    only.sq.clear();
    // keep the window of interest, empty the other
    CenterWindow& other = kind == CenterKind::zero ? only.pi : only.zero;
    other.pieces.clear();
    other.sub_windows.clear();
    auto r = reconstruct(std::vector<CellFunction>{f}, only, provider, p, opts).front();
    return r.f_hat;
}

struct ApproximationCheck {
    double measured = 0.0;  // ‖f − (1/2π)·regular part‖ on (−p, p)
    double bound = 0.0;     // 6 M h
    double slack = 0.0;
    double M = 0.0;
    bool passes = false;
};

/// Omission error of the regular-interval partial expansion against 6Mh. The
/// slack is the full reconstruction error (truncation and quadrature) plus 1e-6.
inline ApproximationCheck approximation_check(const CellFunction& f, const ExpansionPlan& plan,
                                              const SpectrumProvider& provider, double p,
                                              ExpansionOptions opts = {}) {
    ApproximationCheck out;
    out.M = gelfand_sup(f);
    out.bound = 6.0 * out.M * plan.h;
    auto partial = reconstruct(std::vector<CellFunction>{f}, plan, provider, p, opts, true).front();
    auto full = reconstruct(std::vector<CellFunction>{f}, plan, provider, p, opts).front();
    out.measured = partial.error_l2;
    out.slack = full.error_l2 + 1e-6;
    out.passes = out.measured <= out.bound + out.slack;
    return out;
}

struct SemicircleCheck {
    Vector real_line;
    Vector semicircle;
    double difference = 0.0;  // L² norm on the grid
};

/// Compares the real-line δ-limit of the full cluster projection with contour
/// integrals over the half circles |t − t_j| = ε: f⁺ above the axis, f⁻ below.
inline SemicircleCheck semicircle_check(const CellFunction& f, const SpectrumProvider& provider, double t_j,
                                        cplx Lambda, int multiplicity, double eps, double p,
                                        const QuadratureConfig& q = {}, int arc_nodes = 64) {
    const SampleGrid grid(p, provider.truncation(), provider.dim());
    Grouping cluster = [&](const BlochSpectrum& sp) {
        return std::vector<std::vector<int>>{detail::cluster_indices(sp, Lambda, multiplicity)};
    };
    auto sums = detail::shell_sums(provider, {f}, cluster, 1, grid, t_j, eps, q, nullptr);
    auto lim = delta_limit(detail::column_stages(sums[0], 0), eps, richardson_exponents(0.0, q.richardson_terms),
                           q.pv_tol, [&](const Vector& v) { return grid.norm(v); });
    const auto [fp, fm] = split_support(f);
    GaussRule arc;
    const int panels = std::max(1, arc_nodes / 16);
    for (int j = 0; j < panels; ++j) append_panel(arc, kPi * j / panels, kPi * (j + 1) / panels, 16);
    struct ArcNode {
        cplx z, dz;
        bool upper;
    };
    std::vector<ArcNode> nodes;
    for (std::size_t i = 0; i < arc.nodes.size(); ++i) {
        const double th = arc.nodes[i];
        // upper: θ from π down to 0; lower: θ from −π up to 0
        const cplx eu = std::polar(1.0, th), el = std::polar(1.0, -th);
        nodes.push_back({t_j + eps * eu, -kI * eps * eu * arc.weights[i], true});
        nodes.push_back({t_j + eps * el, -kI * eps * el * arc.weights[i] * -1.0, false});
    }
    auto vals = parallel_map(nodes.size(), [&](std::size_t i) {
        const CellFunction& part = nodes[i].upper ? fp : fm;
        if (part.empty()) return Vector(Vector::Zero(grid.size()));
        return Vector(detail::evaluate_groups(provider, {part}, cluster, grid, nodes[i].z, q.defect_shift)[0].col(0));
    });
    SemicircleCheck out;
    out.real_line = lim.value;
    out.semicircle = Vector::Zero(grid.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) out.semicircle += nodes[i].dz * vals[i];
    out.difference = grid.norm(out.real_line - out.semicircle);
    return out;
}

}  // namespace floquet
