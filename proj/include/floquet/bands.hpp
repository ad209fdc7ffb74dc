#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "floquet/bloch.hpp"
#include "floquet/error.hpp"
#include "floquet/linalg.hpp"
#include "floquet/parallel.hpp"

namespace floquet {

/// Spectra on a real grid with continuation links between consecutive nodes.
struct BandTable {
    std::vector<double> grid;
    std::vector<BlochSpectrum> spectra;
    std::vector<std::vector<int>> links;      // links[i][a] = index at node i+1
    std::vector<std::vector<char>> ambiguous;  // flags, same shape as links

    std::size_t nodes() const { return grid.size(); }

    /// tracks()[r][i] = pair index at node i of the band that starts as pair r at node 0.
    std::vector<std::vector<int>> tracks() const {
        std::vector<std::vector<int>> out;
        if (spectra.empty()) return out;
        const std::size_t N = spectra[0].pairs.size();
        out.assign(N, std::vector<int>(nodes()));
        for (std::size_t r = 0; r < N; ++r) {
            int cur = static_cast<int>(r);
            out[r][0] = cur;
            for (std::size_t i = 0; i + 1 < nodes(); ++i) {
                cur = links[i][cur];
                out[r][i + 1] = cur;
            }
        }
        return out;
    }
};

struct TrackOptions {
    double match_margin = 0.5;    // relative slack under which a swap counts as a near tie
    double overlap_margin = 0.25;  // eigenvector overlap difference that decides a near tie
    bool strict = true;            // throw AmbiguousMatching instead of flagging
};

namespace detail {

/// Slope used for prediction; unreliable near defects, so dropped there.
inline std::vector<cplx> prediction_slopes(const OperatorSpec& spec, const BlochSpectrum& sp) {
    std::vector<cplx> s = eigenvalue_slopes(spec, sp);
    for (std::size_t i = 0; i < s.size(); ++i)
        if (sp.pairs[i].defective || std::abs(sp.pairs[i].alpha) < 1e-3 || !std::isfinite(s[i].real()))
            s[i] = 0.0;
    return s;
}

}  // namespace detail

/// Solves every node (in parallel), then links consecutive nodes by optimal
/// assignment on trapezoid-predicted eigenvalue distance.
inline BandTable track_bands(const BlochSolver& solver, std::span<const double> grid, TrackOptions opts = {}) {
    if (grid.empty()) throw InvalidArgument("empty quasimomentum grid");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) throw InvalidArgument("grid must be strictly increasing");
    BandTable table;
    table.grid.assign(grid.begin(), grid.end());
    struct Node {
        BlochSpectrum sp;
        std::vector<cplx> slope;
    };
    auto solved = parallel_map(grid.size(), [&](std::size_t i) {
        Node nd;
        nd.sp = solver.solve(grid[i]);
        nd.slope = detail::prediction_slopes(solver.spec(), nd.sp);
        return nd;
    });
    for (auto& nd : solved) table.spectra.push_back(std::move(nd.sp));

    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
        const auto& A = table.spectra[i].pairs;
        const auto& B = table.spectra[i + 1].pairs;
        const auto& sa = solved[i].slope;
        const auto& sb = solved[i + 1].slope;
        const double dt = grid[i + 1] - grid[i];
        const int N = static_cast<int>(A.size());
        Eigen::MatrixXd cost(N, N);
        for (int a = 0; a < N; ++a) {
            const cplx fwd = A[a].lambda + 0.5 * dt * sa[a];
            for (int b = 0; b < N; ++b) cost(a, b) = std::abs(fwd - (B[b].lambda - 0.5 * dt * sb[b]));
        }
        std::vector<int> link = solve_assignment(cost);
        std::vector<char> flag(N, 0);

        auto overlap = [&](int a, int b) { return std::abs(A[a].psi.dot(B[b].psi)); };
        for (int a = 0; a < N; ++a)
            for (int b = a + 1; b < N; ++b) {
                const int ta = link[a], tb = link[b];
                const double base = cost(a, ta) + cost(b, tb);
                const double swapped = cost(a, tb) + cost(b, ta);
                const double floor = 1e-12 * (1.0 + std::abs(A[a].lambda));
                if (swapped - base > opts.match_margin * base + floor) continue;
                const double keep = overlap(a, ta) * overlap(b, tb);
                const double swap = overlap(a, tb) * overlap(b, ta);
                if (swap > keep + opts.overlap_margin) {
                    std::swap(link[a], link[b]);
                } else if (!(keep > swap + opts.overlap_margin)) {
                    if (opts.strict)
                        throw AmbiguousMatching("bands near lambda = " + std::to_string(A[a].lambda.real()) +
                                                " between t = " + std::to_string(grid[i]) + " and " +
                                                std::to_string(grid[i + 1]) + "; refine the grid");
                    flag[a] = flag[b] = 1;
                }
            }
        table.links.push_back(std::move(link));
        table.ambiguous.push_back(std::move(flag));
    }
    return table;
}

inline BandTable track_bands(const OperatorSpec& spec, std::span<const double> grid, int K, TrackOptions opts = {}) {
    SolverOptions so;
    so.K = K;
    return track_bands(BlochSolver(spec, so), grid, opts);
}

inline std::vector<double> uniform_grid(double lo, double hi, int nodes) {
    std::vector<double> g(nodes);
    for (int i = 0; i < nodes; ++i) g[i] = nodes == 1 ? lo : lo + (hi - lo) * i / (nodes - 1);
    return g;
}

struct ResidualRecord {
    int node = 0;
    double t = 0.0;
    int k = 0;
    int j = 0;
    double r_lambda = 0.0;
    double r_psi = 0.0;
    double r_x = 0.0;
};

struct SlopeFit {
    int node = 0;
    int j = 0;
    int sign = 1;  // sign of k
    double lambda = 0.0;
    double psi = 0.0;
    double x = 0.0;
};

struct AsymptoticReport {
    std::vector<ResidualRecord> records;
    std::vector<SlopeFit> fits;  // log r against log |k| per (node, j, sign k)
    double max_slope_lambda = -1e300;
    double max_slope_psi = -1e300;
    double max_slope_x = -1e300;
};

/// Residuals of asymptotic pairs against the unperturbed family; slopes fitted over
/// k_min ≤ |k| ≤ k_max. Eigenfunctions are phase-aligned to the reference profile.
inline AsymptoticReport asymptotic_residuals(const BandTable& table, const MeanEigensystem& sys, int k_min,
                                             int k_max) {
    AsymptoticReport rep;
    std::map<std::tuple<int, int, int>, std::vector<const ResidualRecord*>> series;
    for (std::size_t i = 0; i < table.nodes(); ++i) {
        const BlochSpectrum& sp = table.spectra[i];
        const BlochBasis b = sp.basis();
        const double e = quasi_norm_factor(sp.t);
        for (const BlochPair& p : sp.pairs) {
            if (p.label.kind != LabelKind::asymptotic || p.defective) continue;
            const int k = p.label.k, j = p.label.j;
            ResidualRecord r;
            r.node = static_cast<int>(i);
            r.t = table.grid[i];
            r.k = k;
            r.j = j;
            r.r_lambda = std::abs(p.lambda - unperturbed_eigenvalue(sys, k, j, sp.t));
            const cplx proj = sys.v[j].dot(p.psi.segment(b.index(k, 0), sp.m));
            const cplx phase = proj == cplx{} ? cplx{1.0} : std::conj(proj) / std::abs(proj);
            Vector ref_psi = Vector::Zero(p.psi.size());
            Vector ref_x = Vector::Zero(p.psi.size());
            ref_psi.segment(b.index(k, 0), sp.m) = e * sys.v[j];
            ref_x.segment(b.index(k, 0), sp.m) = sys.u[j] / e;
            r.r_psi = (phase * p.psi - ref_psi).norm();
            // (φX, φψ) = 1 for a unit phase φ
            r.r_x = (phase * p.x_left - ref_x).norm();
            rep.records.push_back(r);
        }
    }
    for (const auto& r : rep.records)
        if (std::abs(r.k) >= k_min && std::abs(r.k) <= k_max)
            series[{r.node, r.j, r.k > 0 ? 1 : -1}].push_back(&r);
    for (const auto& [key, recs] : series) {
        if (recs.size() < 3) continue;
        std::vector<double> lk, ll, lp, lx;
        for (const auto* r : recs) {
            lk.push_back(std::log(std::abs(r->k)));
            ll.push_back(std::log(std::max(r->r_lambda, 1e-300)));
            lp.push_back(std::log(std::max(r->r_psi, 1e-300)));
            lx.push_back(std::log(std::max(r->r_x, 1e-300)));
        }
        SlopeFit f;
        std::tie(f.node, f.j, f.sign) = key;
        f.lambda = fit_slope(lk, ll);
        f.psi = fit_slope(lk, lp);
        f.x = fit_slope(lk, lx);
        rep.max_slope_lambda = std::max(rep.max_slope_lambda, f.lambda);
        rep.max_slope_psi = std::max(rep.max_slope_psi, f.psi);
        rep.max_slope_x = std::max(rep.max_slope_x, f.x);
        rep.fits.push_back(f);
    }
    return rep;
}

enum class CensusFamily { zero, pi };

struct DiskCount {
    int k = 0;
    cplx center;
    double radius = 0.0;
    int count = 0;
    int expected = 0;
};

struct CensusReport {
    CensusFamily family = CensusFamily::zero;
    double t = 0.0;
    int N0 = 1;
    std::vector<DiskCount> disks;
    int bounded_count = 0;
    int bounded_expected = 0;
    std::vector<cplx> escaped;    // outside every region, label |k| ≤ K/2
    std::vector<cplx> artifacts;  // outside every region, label |k| > K/2

    bool all_disks_exact() const {
        for (const auto& d : disks)
            if (d.count != d.expected) return false;
        return true;
    }
    bool passes() const { return all_disks_exact() && escaped.empty() && bounded_count == bounded_expected; }
};

/// Counts eigenvalues in the localization disks around (2πki)^n or (2πki + iπ)^n
/// (N0 ≤ k ≤ K/2, radius k^{n-1}) and in the bounded region formed by the disks
/// of radius N0^{n-1} around the centers with 0 ≤ k < N0.
inline CensusReport disk_census(const BlochSolver& solver, double t, int N0, double h) {
    if (N0 < 1) throw InvalidArgument("N0 must be >= 1");
    CensusReport rep;
    rep.t = t;
    rep.N0 = N0;
    const double slack = h * (1.0 + 1e-12);
    if (std::abs(t) <= slack)
        rep.family = CensusFamily::zero;
    else if (std::abs(t - kPi) <= slack)
        rep.family = CensusFamily::pi;
    else
        throw InvalidArgument("census quasimomentum must satisfy |t| <= h or |t - pi| <= h");
    const int n = solver.spec().order, m = solver.spec().dim, K = solver.truncation();
    const double shift = rep.family == CensusFamily::zero ? 0.0 : kPi;
    auto center = [&](int k) { return free_symbol(k, shift, n); };

    for (int k = N0; k <= K / 2; ++k)
        rep.disks.push_back({k, center(k), std::pow(double(k), n - 1), 0, 2 * m});
    const double inner_radius = std::pow(double(N0), n - 1);
    rep.bounded_expected = rep.family == CensusFamily::zero ? (2 * N0 - 1) * m : 2 * N0 * m;

    const BlochSpectrum sp = solver.solve(t);
    for (const BlochPair& p : sp.pairs) {
        bool placed = false;
        for (auto& d : rep.disks)
            if (std::abs(p.lambda - d.center) < d.radius) {
                ++d.count;
                placed = true;
                break;
            }
        if (!placed)
            for (int k = 0; k < N0; ++k)
                if (std::abs(p.lambda - center(k)) < inner_radius) {
                    ++rep.bounded_count;
                    placed = true;
                    break;
                }
        if (!placed) (std::abs(p.label.k) > K / 2 ? rep.artifacts : rep.escaped).push_back(p.lambda);
    }
    return rep;
}

/// Smallest N0 for which every unperturbed eigenvalue μ_{k,j}(t), |t - shift| ≤ h,
/// sits inside its disk with a 10% radius margin for all k ≥ N0 up to K.
inline int census_threshold(const MeanEigensystem& sys, double h, int K, CensusFamily family = CensusFamily::zero) {
    const int n = sys.order;
    const double shift = family == CensusFamily::zero ? 0.0 : kPi;
    auto fits = [&](int k) {
        for (int s : {-1, 1})
            for (double t : {shift - h, shift, shift + h})
                for (int j = 0; j < sys.dim(); ++j) {
                    const int kk = family == CensusFamily::zero ? s * k : (s > 0 ? k : -k - 1);
                    const double d = std::abs(unperturbed_eigenvalue(sys, kk, j, t) - free_symbol(k, shift, n));
                    if (d >= 0.9 * std::pow(double(k), n - 1)) return false;
                }
        return true;
    };
    for (int N0 = 1; N0 <= K; ++N0) {
        bool ok = true;
        for (int k = N0; k <= K && ok; ++k) ok = fits(k);
        if (ok) return N0;
    }
    return K + 1;
}

}  // namespace floquet
