#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "floquet/bands.hpp"
#include "floquet/bloch.hpp"
#include "floquet/error.hpp"
#include "floquet/linalg.hpp"
#include "floquet/monodromy.hpp"
#include "floquet/parallel.hpp"

namespace floquet {

struct DegeneracyCandidate {
    double t_star = 0.0;
    cplx lambda_star;
    double gap = 0.0;
    int interval = 0;  // grid interval [grid[i], grid[i+1]]
    std::vector<BandLabel> source_labels;
};

/// Grid intervals on which two tracked eigenvalues come within gap_tol (absolute),
/// judged on the linear interpolant of their difference.
/// t_star is the interpolant's closest approach rather than the interval midpoint.
inline std::vector<DegeneracyCandidate> find_degeneracies(const BandTable& table, double gap_tol = 1e-2) {
    std::vector<DegeneracyCandidate> out;
    if (table.nodes() < 2) return out;
    const auto tracks = table.tracks();
    const std::size_t T = tracks.size();
    for (std::size_t i = 0; i + 1 < table.nodes(); ++i) {
        const auto& A = table.spectra[i].pairs;
        const auto& B = table.spectra[i + 1].pairs;
        const double t0 = table.grid[i], t1 = table.grid[i + 1];
        std::vector<DegeneracyCandidate> here;
        for (std::size_t a = 0; a < T; ++a)
            for (std::size_t b = a + 1; b < T; ++b) {
                const BlochPair& a0 = A[tracks[a][i]];
                const BlochPair& b0 = A[tracks[b][i]];
                const BlochPair& a1 = B[tracks[a][i + 1]];
                const BlochPair& b1 = B[tracks[b][i + 1]];
                const cplx d0 = a0.lambda - b0.lambda, d1 = a1.lambda - b1.lambda;
                const cplx dd = d1 - d0;
                if (std::min(std::abs(d0), std::abs(d1)) > gap_tol + std::abs(dd)) continue;
                double s = std::norm(dd) > 0 ? -std::real(std::conj(d0) * dd) / std::norm(dd) : 0.0;
                s = std::clamp(s, 0.0, 1.0);
                const double gap = std::abs(d0 + s * dd);
                if (gap > gap_tol) continue;
                DegeneracyCandidate c;
                c.t_star = t0 + s * (t1 - t0);
                c.lambda_star = 0.5 * ((a0.lambda + s * (a1.lambda - a0.lambda)) + (b0.lambda + s * (b1.lambda - b0.lambda)));
                c.gap = gap;
                c.interval = static_cast<int>(i);
                c.source_labels = {a0.label, b0.label};
                here.push_back(c);
            }
        // merge collisions that share a cluster within this interval
        for (auto& c : here) {
            bool merged = false;
            for (auto& o : out) {
                if (std::abs(o.interval - c.interval) > 1) continue;
                if (std::abs(o.lambda_star - c.lambda_star) > gap_tol + o.gap + c.gap)
                    continue;
                if (std::abs(o.t_star - c.t_star) > (t1 - t0)) continue;
                for (const auto& l : c.source_labels) {
                    bool seen = false;
                    for (const auto& m : o.source_labels) seen |= m.same_band(l);
                    if (!seen) o.source_labels.push_back(l);
                }
                if (c.gap < o.gap) {
                    o.gap = c.gap;
                    o.t_star = c.t_star;
                    o.lambda_star = c.lambda_star;
                    o.interval = c.interval;
                }
                merged = true;
                break;
            }
            if (!merged) out.push_back(c);
        }
    }
    return out;
}

struct RefineOptions {
    int max_iter = 80;
    double step_tol = 1e-13;
    double max_t_step = 0.05;
    double cluster_tol = 1e-5;  // relative radius defining the collided eigenvalues at t_j
};

struct DegeneracyRefinement {
    double t_j = 0.0;
    double t_imag = 0.0;
    cplx Lambda;
    int multiplicity = 0;
    int iterations = 0;
    bool critical_point = false;  // converged through (Δ_λ, Δ_t) = 0
    double residual_value = 0.0;  // |Δ|
    double residual_derivative = 0.0;  // |Δ_λ|
};

namespace detail {

/// Number of eigenvalues within tol·(1+|Λ|) of Λ, validated against two
/// radii (half and a quarter of the distance to the nearest other eigenvalue).
inline int cluster_size(const BlochSpectrum& sp, cplx Lambda, double tol) {
    const double scale = 1.0 + std::abs(Lambda);
    std::vector<double> d;
    for (const auto& p : sp.pairs) d.push_back(std::abs(p.lambda - Lambda));
    std::sort(d.begin(), d.end());
    int core = 0;
    while (core < static_cast<int>(d.size()) && d[core] <= tol * scale) ++core;
    if (core == static_cast<int>(d.size())) return core;
    const double r = 0.5 * d[core];
    auto count = [&](double rad) {
        return static_cast<int>(std::upper_bound(d.begin(), d.end(), rad) - d.begin());
    };
    if (count(r) != count(0.5 * r)) throw MultiplicityUnstable("eigenvalue count differs between r and r/2");
    return count(r);
}

inline std::array<cplx, 2> solve2(cplx a, cplx b, cplx c, cplx d, cplx f0, cplx f1) {
    const cplx det = a * d - b * c;
    if (det == cplx{}) throw NoConvergence("singular Newton system");
    return {(d * f0 - b * f1) / det, (a * f1 - c * f0) / det};
}

}  // namespace detail

/// Damped Newton on (Δ, Δ_λ) = 0 over complex (λ, t). A semisimple crossing is
/// a singular root of that system (Δ_t = 0 there too), which shows up as
/// linear convergence; the iteration then switches to (Δ_λ, Δ_t) = 0.
inline DegeneracyRefinement refine_degeneracy(const CharacteristicDeterminant& det, const BlochSolver& solver,
                                              const DegeneracyCandidate& cand, RefineOptions opts = {}) {
    cplx lambda = cand.lambda_star, t = cand.t_star;
    bool critical = false;
    int slow = 0;
    double prev = std::numeric_limits<double>::infinity();
    DegeneracyRefinement out;
    bool converged = false;
    for (int it = 0; it < opts.max_iter; ++it) {
        const DeterminantJet j = det.jet(lambda, t);
        std::array<cplx, 2> step;
        try {
            step = critical ? detail::solve2(j.d_lambda2, j.d_lambda_t, j.d_lambda_t, j.d_t2, j.d_lambda, j.d_t)
                            : detail::solve2(j.d_lambda, j.d_t, j.d_lambda2, j.d_lambda_t, j.value, j.d_lambda);
        } catch (const NoConvergence&) {
            if (critical) throw;
            critical = true;
            continue;
        }
        const double tstep = std::abs(step[1]);
        if (tstep > opts.max_t_step) {
            step[0] *= opts.max_t_step / tstep;
            step[1] *= opts.max_t_step / tstep;
        }
        lambda -= step[0];
        t -= step[1];
        out.iterations = it + 1;
        const double size = std::abs(step[0]) / (1.0 + std::abs(lambda)) + std::abs(step[1]);
        if (size <= opts.step_tol) {
            converged = true;
            break;
        }
        const double ratio = size / prev;
        // halving steps close to a root: the root is singular for (Δ, Δ_λ)
        if (!critical && size < 1e-6 && ratio > 0.3 && ratio < 0.7) {
            if (++slow >= 3) critical = true;
        } else {
            slow = 0;
        }
        prev = size;
    }
    if (!converged) throw NoConvergence("degeneracy refinement did not converge from t* = " + std::to_string(cand.t_star));
    const DeterminantJet fin = det.lambda_jet(lambda, t);
    out.t_j = t.real();
    out.t_imag = t.imag();
    out.Lambda = lambda;
    out.critical_point = critical;
    out.residual_value = std::abs(fin.value);
    out.residual_derivative = std::abs(fin.d_lambda);
    if (critical && out.residual_value > 1e-8 * std::abs(fin.d_lambda2) * (1.0 + std::abs(lambda)))
        throw NoConvergence("critical point of the determinant at t = " + std::to_string(out.t_j) + " is not a root");
    out.multiplicity = detail::cluster_size(solver.solve(out.t_j), lambda, opts.cluster_tol);
    if (out.multiplicity < 2)
        throw NoConvergence("refined point at t = " + std::to_string(out.t_j) + " is not a multiple eigenvalue");
    return out;
}

enum class Verdict { not_ess, ess, indeterminate };
enum class MemberClass { integrable, nonintegrable, indeterminate };

inline const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::not_ess: return "not-ESS";
        case Verdict::ess: return "ESS";
        default: return "indeterminate";
    }
}
inline const char* to_string(MemberClass c) {
    switch (c) {
        case MemberClass::integrable: return "B";
        case MemberClass::nonintegrable: return "S";
        default: return "indeterminate";
    }
}

struct ClusterSample {
    BandLabel label;
    cplx lambda;
    cplx alpha;
};

/// Supplies the cluster members at a quasimomentum; the default sampler solves the fiber.
using AlphaSampler = std::function<std::vector<ClusterSample>(double)>;

struct ClassifyOptions {
    int offsets = 8;
    double gamma_margin = 0.15;
    int multiplicity = 0;        // 0: count at t_j
    double cluster_tol = 1e-5;   // relative, for the count at t_j
    AlphaSampler sampler;        // overrides the fiber solve
};

struct ClusterMember {
    BandLabel label;
    cplx lambda_outer;  // eigenvalue at the outermost right offset
    double gamma = 0.0;
    double gamma_left = 0.0;
    double gamma_right = 0.0;
    MemberClass cls = MemberClass::integrable;
};

struct DegeneracyReport {
    double t_j = 0.0;
    cplx Lambda;
    int multiplicity = 0;
    double window = 0.0;
    std::vector<ClusterMember> members;  // canonical order of lambda_outer
    std::vector<BandLabel> T, B, S, I;    // I: indeterminate, grouped with S downstream
    Verdict verdict = Verdict::not_ess;
};

namespace detail {

inline std::vector<ClusterSample> nearest_members(const BlochSpectrum& sp, cplx Lambda, int p) {
    std::vector<std::pair<double, int>> d;
    for (std::size_t i = 0; i < sp.pairs.size(); ++i) d.push_back({std::abs(sp.pairs[i].lambda - Lambda), int(i)});
    std::sort(d.begin(), d.end());
    if (static_cast<int>(d.size()) > p) {
        const double inner = d[p - 1].first, outer = d[p].first;
        if (outer <= 2.0 * inner)
            throw WindowContaminated("cluster near lambda = " + std::to_string(Lambda.real()) +
                                     " is not isolated at t = " + std::to_string(sp.t.real()));
    }
    std::vector<ClusterSample> out;
    for (int r = 0; r < p; ++r) {
        const BlochPair& pr = sp.pairs[d[r].second];
        out.push_back({pr.label, pr.lambda, pr.alpha});
    }
    return out;
}

inline double spread(const std::vector<ClusterSample>& s) {
    double w = 0.0;
    for (std::size_t a = 0; a < s.size(); ++a)
        for (std::size_t b = a + 1; b < s.size(); ++b) w = std::max(w, std::abs(s[a].lambda - s[b].lambda));
    return w;
}

/// Reorders `next` so member r continues member r of `prev` (nearest eigenvalues).
inline void follow(const std::vector<ClusterSample>& prev, std::vector<ClusterSample>& next) {
    const int p = static_cast<int>(prev.size());
    Eigen::MatrixXd cost(p, p);
    for (int a = 0; a < p; ++a)
        for (int b = 0; b < p; ++b) cost(a, b) = std::abs(prev[a].lambda - next[b].lambda);
    const auto asg = solve_assignment(cost);
    std::vector<ClusterSample> reordered(p);
    for (int a = 0; a < p; ++a) reordered[a] = next[asg[a]];
    next = std::move(reordered);
}

}  // namespace detail

/// Fits |α| ~ |t - t_j|^γ per cluster member on geometric two-sided offsets
/// window·2^{-i} and sorts members into B (γ < 1 - margin), S (γ > 1 + margin)
/// or indeterminate.
inline DegeneracyReport classify_cluster(const BlochSolver* solver, double t_j, cplx Lambda, double window,
                                         ClassifyOptions opts = {}) {
    if (window <= 0.0) throw InvalidArgument("window must be positive");
    if (opts.offsets < 3) throw InvalidArgument("need at least 3 offsets per side");
    AlphaSampler sampler = opts.sampler;
    int p = opts.multiplicity;
    if (!sampler) {
        if (!solver) throw InvalidArgument("classify_cluster needs a solver or a sampler");
        if (p == 0) p = detail::cluster_size(solver->solve(t_j), Lambda, opts.cluster_tol);
        if (p < 2) throw InvalidArgument("no multiple eigenvalue at the given (t_j, Lambda)");
        sampler = [solver, Lambda, p](double t) { return detail::nearest_members(solver->solve(t), Lambda, p); };
    }
    std::vector<double> tau(opts.offsets);
    for (int i = 0; i < opts.offsets; ++i) tau[i] = window * std::ldexp(1.0, -i);

    std::vector<double> nodes;
    for (int side : {1, -1})
        for (double tt : tau) nodes.push_back(t_j + side * tt);
    auto samples = parallel_map(nodes.size(), [&](std::size_t i) { return sampler(nodes[i]); });

    DegeneracyReport rep;
    rep.t_j = t_j;
    rep.Lambda = Lambda;
    rep.window = window;
    std::array<std::vector<std::vector<double>>, 2> log_alpha;  // [side][member][offset]
    std::vector<ClusterSample> outer_right;
    for (int side = 0; side < 2; ++side) {
        auto* s = &samples[side * opts.offsets];
        const int pp = static_cast<int>(s[0].size());
        if (pp < 1) throw InvalidArgument("sampler returned no members");
        if (side == 0) p = pp;
        if (pp != p) throw InvalidArgument("sampler returned inconsistent member counts");
        std::sort(s[0].begin(), s[0].end(),
                  [](const ClusterSample& a, const ClusterSample& b) { return canonical_less(a.lambda, b.lambda); });
        for (int i = 1; i < opts.offsets; ++i) {
            detail::follow(s[i - 1], s[i]);
            if (detail::spread(s[i]) > 1.1 * detail::spread(s[i - 1]) + 1e-12 * (1.0 + std::abs(Lambda)))
                throw WindowContaminated("cluster spread grows toward t_j; another degeneracy lies in the window");
        }
        log_alpha[side].assign(p, std::vector<double>(opts.offsets));
        for (int i = 0; i < opts.offsets; ++i)
            for (int r = 0; r < p; ++r) log_alpha[side][r][i] = std::log(std::max(std::abs(s[i][r].alpha), 1e-300));
        if (side == 0) outer_right = s[0];
    }
    std::vector<double> lt(opts.offsets);
    for (int i = 0; i < opts.offsets; ++i) lt[i] = std::log(tau[i]);
    rep.multiplicity = p;
    for (int r = 0; r < p; ++r) {
        ClusterMember mb;
        mb.label = outer_right[r].label;
        mb.lambda_outer = outer_right[r].lambda;
        mb.gamma_right = std::max(0.0, fit_slope(lt, log_alpha[0][r]));
        mb.gamma_left = std::max(0.0, fit_slope(lt, log_alpha[1][r]));
        mb.gamma = std::max(mb.gamma_left, mb.gamma_right);
        if (mb.gamma < 1.0 - opts.gamma_margin)
            mb.cls = MemberClass::integrable;
        else if (mb.gamma > 1.0 + opts.gamma_margin)
            mb.cls = MemberClass::nonintegrable;
        else
            mb.cls = MemberClass::indeterminate;
        rep.T.push_back(mb.label);
        (mb.cls == MemberClass::integrable ? rep.B : mb.cls == MemberClass::nonintegrable ? rep.S : rep.I)
            .push_back(mb.label);
        rep.members.push_back(mb);
    }
    rep.verdict = !rep.S.empty() ? Verdict::ess : !rep.I.empty() ? Verdict::indeterminate : Verdict::not_ess;
    return rep;
}

inline DegeneracyReport classify_cluster(const BlochSolver& solver, double t_j, cplx Lambda, double window,
                                         ClassifyOptions opts = {}) {
    return classify_cluster(&solver, t_j, Lambda, window, std::move(opts));
}

struct InfinityEntry {
    int k = 0;
    int j = 0;
    double integral = 0.0;
    int nodes_used = 0;
};

struct InfinitySequence {
    int sign = 1;
    int j = 0;
    std::vector<int> k;          // |k| ascending
    std::vector<double> values;  // integrals
    bool growing = false;
};

struct InfinityProbe {
    double window_length = 0.0;
    std::vector<InfinityEntry> entries;
    std::vector<InfinitySequence> sequences;
    bool suspected = false;
};

struct ProbeOptions {
    double growth_factor = 1.5;
    double defect_tol = 1e-8;
    int k_max = 0;  // 0: half the truncation of the table
};

/// Trapezoid ∫ 1/|α_{k,j}| over the table grid for asymptotic labels with |k| ≤ k_max, skipping
/// intervals touching a node where the label is missing, duplicated or defective.
/// Flags growth when, along some (sign k, j) sequence, the upper half in |k| is
/// non-decreasing and rises by at least growth_factor.
inline InfinityProbe probe_ess_at_infinity(const BandTable& table, ProbeOptions opts = {}) {
    InfinityProbe out;
    if (table.nodes() < 2) return out;
    out.window_length = table.grid.back() - table.grid.front();
    const int k_max = opts.k_max > 0 ? opts.k_max : std::max(1, table.spectra.front().K / 2);
    std::map<std::pair<int, int>, std::vector<double>> inv;  // 1/|α| per node, NaN if unusable
    std::map<std::pair<int, int>, std::vector<int>> hits;
    const std::size_t N = table.nodes();
    for (std::size_t i = 0; i < N; ++i)
        for (const auto& p : table.spectra[i].pairs) {
            if (p.label.kind != LabelKind::asymptotic || std::abs(p.label.k) > k_max) continue;
            auto key = std::make_pair(p.label.k, p.label.j);
            auto& v = inv[key];
            auto& h = hits[key];
            if (v.empty()) {
                v.assign(N, std::numeric_limits<double>::quiet_NaN());
                h.assign(N, 0);
            }
            ++h[i];
            if (std::abs(p.alpha) > opts.defect_tol) v[i] = 1.0 / std::abs(p.alpha);
        }
    for (auto& [key, v] : inv) {
        const auto& h = hits[key];
        InfinityEntry e;
        e.k = key.first;
        e.j = key.second;
        for (std::size_t i = 0; i + 1 < N; ++i) {
            if (h[i] != 1 || h[i + 1] != 1 || std::isnan(v[i]) || std::isnan(v[i + 1])) continue;
            e.integral += 0.5 * (v[i] + v[i + 1]) * (table.grid[i + 1] - table.grid[i]);
            ++e.nodes_used;
        }
        out.entries.push_back(e);
    }
    std::map<std::pair<int, int>, InfinitySequence> seq;
    for (const auto& e : out.entries) {
        if (e.k == 0) continue;
        auto& s = seq[{e.k > 0 ? 1 : -1, e.j}];
        s.sign = e.k > 0 ? 1 : -1;
        s.j = e.j;
        s.k.push_back(std::abs(e.k));
        s.values.push_back(e.integral);
    }
    for (auto& [key, s] : seq) {
        std::vector<int> order(s.k.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        std::sort(order.begin(), order.end(), [&](int a, int b) { return s.k[a] < s.k[b]; });
        InfinitySequence sorted{s.sign, s.j, {}, {}, false};
        for (int i : order) {
            sorted.k.push_back(s.k[i]);
            sorted.values.push_back(s.values[i]);
        }
        const std::size_t n = sorted.k.size();
        if (n >= 4) {
            const std::size_t start = n / 2;
            bool mono = true;
            for (std::size_t i = start + 1; i < n; ++i) mono &= sorted.values[i] >= sorted.values[i - 1];
            sorted.growing = mono && sorted.values.back() >= opts.growth_factor * sorted.values[start];
        }
        out.suspected |= sorted.growing;
        out.sequences.push_back(std::move(sorted));
    }
    return out;
}

struct ScanOptions {
    double gap_tol = 1e-2;
    double window = 1e-3;   // classification half-width, shrunk on contamination
    int window_retries = 4;  // each retry divides the window by 4
    double imag_tol = 1e-8;  // refined points with |Im t| above this are not real degeneracies
    RefineOptions refine;
    TrackOptions track{0.5, 0.25, false};
    ProbeOptions probe;
};

struct RejectedCandidate {
    DegeneracyCandidate candidate;
    std::string reason;
};

struct ScanResult {
    BandTable table;
    std::vector<DegeneracyReport> reports;  // ascending t_j
    std::vector<RejectedCandidate> rejected;
    InfinityProbe probe;
};

/// Track, locate, refine and classify over one grid, plus the probe at infinity.
inline ScanResult scan_singularities(const BlochSolver& solver, std::span<const double> grid, ScanOptions opts = {}) {
    ScanResult out;
    out.table = track_bands(solver, grid, opts.track);
    const CharacteristicDeterminant det(solver.spec());
    std::vector<DegeneracyRefinement> found;
    for (const auto& c : find_degeneracies(out.table, opts.gap_tol)) {
        DegeneracyRefinement r;
        try {
            r = refine_degeneracy(det, solver, c, opts.refine);
        } catch (const NoConvergence& e) {
            out.rejected.push_back({c, e.what()});
            continue;
        }
        if (std::abs(r.t_imag) > opts.imag_tol) {
            out.rejected.push_back({c, "degeneracy at complex t"});
            continue;
        }
        bool dup = false;
        for (const auto& f : found)
            dup = dup || (std::abs(f.t_j - r.t_j) <= 1e-8 * (1.0 + std::abs(r.t_j)) &&
                          std::abs(f.Lambda - r.Lambda) <= 1e-6 * (1.0 + std::abs(r.Lambda)));
        if (!dup) found.push_back(r);
    }
    std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.t_j < b.t_j; });
    for (const auto& r : found) {
        double w = opts.window;
        for (int attempt = 0;; ++attempt) {
            try {
                ClassifyOptions co;
                co.multiplicity = r.multiplicity;
                out.reports.push_back(classify_cluster(solver, r.t_j, r.Lambda, w, co));
                break;
            } catch (const WindowContaminated& e) {
                if (attempt >= opts.window_retries) {
                    DegeneracyCandidate c;
                    c.t_star = r.t_j;
                    c.lambda_star = r.Lambda;
                    out.rejected.push_back({c, e.what()});
                    break;
                }
                w /= 4.0;
            }
        }
    }
    out.probe = probe_ess_at_infinity(out.table, opts.probe);
    return out;
}

}  // namespace floquet
