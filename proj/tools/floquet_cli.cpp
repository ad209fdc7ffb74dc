#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "floquet/fixtures.hpp"
#include "floquet/io.hpp"

using namespace floquet;
namespace fs = std::filesystem;

namespace {

struct RunConfig {
    std::string command;
    std::string operator_path;
    std::string function_path;
    std::string bands_path;    // expand: serve spectra from an exported table
    std::string reports_path;  // expand: SQ windows from a singularities document
    std::string export_bands;  // expand: write every spectrum used
    bool scan = false;         // expand: run the singularity scan first
    double t = 0.5;
    double t_min = 0.0;
    double t_max = kTwoPi;
    int t_nodes = 64;
    int K = 16;
    double h = 0.02;
    double epsilon = 2e-3;
    int k_max = 0;
    double p = 2.0;
    int regular_nodes = 200;
    int plot_points = 201;
    double gap_tol = 1e-2;
    double window = 1e-3;
    unsigned threads = 0;
    std::string out = ".";
    std::string format = "json";
};

bool wants_json(const RunConfig& c) { return c.format == "json" || c.format == "both"; }
bool wants_csv(const RunConfig& c) { return c.format == "csv" || c.format == "both"; }

void validate(const RunConfig& c) {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0)) throw InvalidArgument(std::string("--") + name + " must be positive");
    };
    positive(c.K, "K");
    positive(c.h, "h");
    positive(c.epsilon, "epsilon");
    positive(c.p, "p");
    positive(c.t_nodes, "t-nodes");
    positive(c.regular_nodes, "nodes");
    positive(c.gap_tol, "gap-tol");
    positive(c.window, "window");
    if (c.k_max < 0) throw InvalidArgument("--k-max must be >= 0 (0 keeps every label)");
    if (c.plot_points < 0) throw InvalidArgument("--plot-points must be >= 0");
    if (!(c.h < 1.0 / (15.0 * kPi)))
        throw InvalidArgument("--h must satisfy h < 1/(15 pi) = " + std::to_string(1.0 / (15.0 * kPi)));
    if (c.epsilon >= c.h) throw InvalidArgument("--epsilon must be smaller than --h");
    if (!(c.t_max > c.t_min)) throw InvalidArgument("--t-max must exceed --t-min");
    if (c.t_nodes < 2) throw InvalidArgument("--t-nodes must be >= 2");
}

OperatorSpec load_operator(const RunConfig& c) {
    if (c.operator_path.empty()) throw InvalidArgument("--operator is required for '" + c.command + "'");
    return io::read_operator(c.operator_path);
}

BlochSolver make_solver(const RunConfig& c) {
    SolverOptions o;
    o.K = c.K;
    return BlochSolver(load_operator(c), o);
}

struct Output {
    fs::path dir;
    std::vector<std::string> written;

    void json(const std::string& name, const io::json& j) {
        io::write_json((dir / name).string(), j);
        written.push_back(name);
    }
    void text(const std::string& name, const std::string& s) {
        io::write_text((dir / name).string(), s);
        written.push_back(name);
    }
};

int cmd_spectrum(const RunConfig& c, Output& out) {
    auto solver = make_solver(c);
    const BlochSpectrum sp = solver.solve(c.t);
    const auto bio = biorthogonality(sp);
    if (wants_json(c)) {
        auto doc = io::document("floquet-spectrum");
        doc["spectrum"] = io::to_json(sp);
        doc["biorthogonality"] = {{"max_off_diagonal", bio.max_off_diagonal},
                                  {"max_diagonal_error", bio.max_diagonal_error},
                                  {"defective", bio.defective}};
        out.json("spectrum.json", doc);
    }
    if (wants_csv(c)) {
        BandTable one;
        one.grid = {c.t};
        one.spectra = {sp};
        out.text("spectrum.csv", io::bands_csv(one));
    }
    std::cout << sp.pairs.size() << " eigenvalues at t = " << c.t << ", max |(X_i, psi_j)| = " << bio.max_off_diagonal
              << "\n";
    return 0;
}

int cmd_bands(const RunConfig& c, Output& out) {
    auto solver = make_solver(c);
    TrackOptions lax;
    lax.strict = false;
    const auto grid = uniform_grid(c.t_min, c.t_max, c.t_nodes);
    const BandTable table = track_bands(solver, grid, lax);
    const auto asym = asymptotic_residuals(table, solver.reference(), 4, std::max(4, c.K / 2));
    if (wants_json(c)) {
        out.json("bands.json", io::to_json(table));
        out.json("asymptotics.json", io::to_json(asym));
    }
    if (wants_csv(c)) out.text("bands.csv", io::bands_csv(table));
    int flagged = 0;
    for (const auto& row : table.ambiguous)
        for (char a : row) flagged += a != 0;
    std::cout << table.nodes() << " nodes, " << table.spectra.front().pairs.size() << " bands, " << flagged
              << " ambiguous links\n";
    return 0;
}

ScanResult run_scan(const BlochSolver& solver, const RunConfig& c) {
    ScanOptions so;
    so.gap_tol = c.gap_tol;
    so.window = c.window;
    return scan_singularities(solver, uniform_grid(c.t_min, c.t_max, c.t_nodes), so);
}

int cmd_singularities(const RunConfig& c, Output& out) {
    auto solver = make_solver(c);
    const ScanResult scan = run_scan(solver, c);
    if (wants_json(c)) {
        auto doc = io::singularities_document(scan.reports, scan.probe);
        io::json rej = io::json::array();
        for (const auto& r : scan.rejected)
            rej.push_back({{"t_star", r.candidate.t_star},
                           {"lambda_star", io::to_json(r.candidate.lambda_star)},
                           {"reason", r.reason}});
        doc["rejected"] = rej;
        out.json("singularities.json", doc);
    }
    if (wants_csv(c)) out.text("singularities.csv", io::degeneracy_csv(scan.reports));
    int ess = 0;
    for (const auto& r : scan.reports) ess += r.verdict == Verdict::ess;
    std::cout << scan.reports.size() << " degeneracies (" << ess << " ESS), " << scan.rejected.size()
              << " rejected candidates, ESS at infinity " << (scan.probe.suspected ? "suspected" : "not suspected")
              << "\n";
    return 0;
}

int cmd_census(const RunConfig& c, Output& out) {
    auto solver = make_solver(c);
    auto doc = io::document("floquet-census");
    io::json reports = io::json::array();
    bool all = true;
    for (CensusFamily fam : {CensusFamily::zero, CensusFamily::pi}) {
        const double shift = fam == CensusFamily::zero ? 0.0 : kPi;
        const int N0 = census_threshold(solver.reference(), c.h, c.K, fam);
        for (double d : {-c.h, 0.0, c.h}) {
            const auto rep = disk_census(solver, shift + d, N0, c.h);
            all = all && rep.passes();
            reports.push_back(io::to_json(rep));
        }
    }
    doc["h"] = c.h;
    doc["reports"] = reports;
    doc["passes"] = all;
    out.json("census.json", doc);
    std::cout << "disk census " << (all ? "passes" : "FAILS") << "\n";
    return 0;
}

int cmd_expand(const RunConfig& c, Output& out) {
    if (c.function_path.empty()) throw InvalidArgument("--function is required for 'expand'");
    const CellFunction f = io::read_function(c.function_path);

    std::optional<BlochSolver> solver;
    if (c.bands_path.empty() || c.scan) solver.emplace(make_solver(c));

    std::vector<DegeneracyReport> reports;
    if (!c.reports_path.empty()) reports = io::degeneracy_reports_from(io::read_json(c.reports_path));
    if (c.scan) {
        if (!c.reports_path.empty()) throw InvalidArgument("--scan and --reports are exclusive");
        reports = run_scan(*solver, c).reports;
    }

    QuadratureConfig quad;
    quad.regular_nodes = c.regular_nodes;
    const ExpansionPlan plan = plan_expansion(reports, c.h, c.epsilon, quad);

    std::unique_ptr<SpectrumProvider> provider;
    RecordingProvider* recorder = nullptr;
    if (!c.bands_path.empty()) {
        provider = std::make_unique<TableProvider>(io::read_band_table(c.bands_path));
    } else {
        auto rec = std::make_unique<RecordingProvider>(*solver);
        recorder = rec.get();
        provider = std::move(rec);
    }
    if (provider->dim() != f.dim()) throw InvalidArgument("function dimension differs from the operator");

    ExpansionOptions eo;
    eo.k_max = c.k_max;
    eo.plot_points = c.plot_points;
    const ReconstructionResult r = reconstruct(f, plan, *provider, c.p, eo);
    ExpansionOptions plain;
    plain.k_max = c.k_max;
    const ApproximationCheck chk = approximation_check(f, plan, *provider, c.p, plain);

    if (wants_json(c)) out.json("expansion.json", io::expansion_document(plan, r, &chk));
    if (wants_csv(c)) out.text("expansion.csv", io::expansion_csv(r));
    if (recorder && !c.export_bands.empty()) {
        io::write_json(c.export_bands, io::to_json(recorder->table()));
        out.written.push_back(c.export_bands);
    }
    std::cout << "relative L2 error " << r.relative_error() << ", omission error " << chk.measured << " vs 6Mh "
              << chk.bound << " (+" << chk.slack << ")\n";
    return 0;
}

struct Check {
    std::string name;
    double value;
    double tolerance;
};

int cmd_verify(const RunConfig& c, Output& out) {
    std::vector<Check> checks;
    const int K = 8;
    auto solver_for = [&](OperatorSpec s) {
        SolverOptions o;
        o.K = K;
        return BlochSolver(std::move(s), o);
    };
    auto spectrum_error = [&](const BlochSolver& solver, const MeanEigensystem& sys) {
        double worst = 0.0;
        for (double t : {0.3, 1.7, 3.0})
            for (const auto& p : solver.solve(t).pairs) {
                if (std::abs(p.label.k) > K / 2) continue;
                const cplx mu = unperturbed_eigenvalue(sys, p.label.k, p.label.j, t);
                worst = std::max(worst, std::abs(p.lambda - mu) / (1.0 + std::abs(mu)));
            }
        return worst;
    };
    for (int n : {2, 3}) {
        auto free = solver_for(fixtures::free_operator(n, 2));
        checks.push_back({"free operator spectrum, n = " + std::to_string(n), spectrum_error(free, free.reference()),
                          1e-9});
    }
    auto constant = solver_for(fixtures::constant_operator(2, fixtures::nonnormal_mean()));
    checks.push_back({"constant mean spectrum", spectrum_error(constant, constant.reference()), 1e-9});

    auto perturbed = solver_for(fixtures::perturbed_operator(1e-2));
    double bio = 0.0;
    for (double t : {0.2, 1.1, 2.5}) bio = std::max(bio, biorthogonality(perturbed.solve(t)).max_off_diagonal);
    checks.push_back({"biorthogonality", bio, 1e-8});

    const CellFunction g = random_cell_function(11, 2, -3, 6, 4);
    checks.push_back({"Parseval residual", parseval_residual(g).residual, 1e-10});
    checks.push_back({"Gelfand inversion residual", inversion_residual(g), 1e-12});

    const ExpansionPlan plan = plan_expansion({}, 0.02, 2e-3);
    checks.push_back({"plan partition length", std::abs(plan.total_length() - kTwoPi), 1e-12});

    auto free1 = solver_for(fixtures::free_operator(2, 1));
    SolvingProvider provider(free1);
    auto zero = reconstruct(CellFunction::zero(1), plan, provider, 2.0);
    checks.push_back({"zero function reconstructs to zero", zero.f_hat.norm(), 0.0});
    {
        auto a = random_cell_function(5, 1, -1, 2, 2), b = random_cell_function(6, 1, 0, 1, 2);
        const cplx s(0.7, -0.4);
        auto rs = reconstruct({a, b, s * a + b}, plan, provider, 2.0);
        checks.push_back({"reconstruction linearity",
                          (rs[2].f_hat - (s * rs[0].f_hat + rs[1].f_hat)).norm() / (1.0 + rs[2].f_hat.norm()), 1e-10});
    }
    {
        SolverOptions o;
        o.K = 16;
        BlochSolver s16(fixtures::free_operator(2, 1), o);
        SolvingProvider p16(s16);
        checks.push_back({"smooth bump reconstruction",
                          reconstruct(fixtures::smooth_bump(1), plan, p16, 2.0).relative_error(), 1e-2});
    }
    {
        const OperatorSpec spec = fixtures::constant_operator(2, fixtures::diag2(0.0, 1.0));
        auto solver = solver_for(spec);
        DegeneracyCandidate cand;
        cand.t_star = 0.045;
        cand.lambda_star = -38.9;
        const auto r = refine_degeneracy(CharacteristicDeterminant(spec), solver, cand);
        checks.push_back({"crossing at 1/(8 pi)", std::abs(r.t_j - 1.0 / (8 * kPi)), 1e-8});
    }

    bool all = true;
    auto doc = io::document("floquet-verify");
    io::json list = io::json::array();
    for (const auto& ch : checks) {
        const bool ok = ch.value <= ch.tolerance;
        all = all && ok;
        list.push_back({{"name", ch.name}, {"value", ch.value}, {"tolerance", ch.tolerance}, {"passed", ok}});
        std::cout << (ok ? "ok    " : "FAIL  ") << ch.name << "  (" << ch.value << " <= " << ch.tolerance << ")\n";
    }
    doc["checks"] = list;
    doc["passed"] = all;
    if (wants_json(c)) out.json("verify.json", doc);
    return all ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    RunConfig c;
    CLI::App app{"Floquet-Bloch spectral toolkit"};
    app.set_help_flag("--help", "print this help and exit");  // -h would clash with --h
    app.set_version_flag("--version", std::string(kVersion));
    app.set_config("--config", "", "TOML/INI file with option values; command-line flags take precedence");
    app.require_subcommand(1);
    app.fallthrough();

    app.add_option("--operator", c.operator_path, "operator spec (JSON)");
    app.add_option("--function", c.function_path, "cell function (JSON)");
    app.add_option("--t", c.t, "quasimomentum for 'spectrum'");
    app.add_option("--t-min", c.t_min, "start of the t grid");
    app.add_option("--t-max", c.t_max, "end of the t grid");
    app.add_option("--t-nodes", c.t_nodes, "number of t grid nodes");
    app.add_option("--K", c.K, "Galerkin truncation: modes -K..K");
    app.add_option("--h", c.h, "half-width of the windows at 0 and pi, h < 1/(15 pi)");
    app.add_option("--epsilon", c.epsilon, "half-width of the windows around singular quasimomenta");
    app.add_option("--k-max", c.k_max, "largest |k| kept in the expansion (0: all)");
    app.add_option("--p", c.p, "reconstruction on (-p, p)");
    app.add_option("--nodes", c.regular_nodes, "quadrature node budget on the regular intervals");
    app.add_option("--plot-points", c.plot_points, "uniform samples of f and its expansion in the report");
    app.add_option("--gap-tol", c.gap_tol, "band gap below which a crossing candidate is raised");
    app.add_option("--window", c.window, "classification window half-width");
    app.add_option("--bands", c.bands_path, "expand: take spectra from an exported band table");
    app.add_option("--reports", c.reports_path, "expand: singularities document defining the SQ windows");
    app.add_option("--export-bands", c.export_bands, "expand: write the spectra used to this file");
    app.add_flag("--scan", c.scan, "expand: run the singularity scan over the t grid first");
    app.add_option("--threads", c.threads, "worker threads (0: hardware concurrency)");
    app.add_option("--out", c.out, "output directory");
    app.add_option("--format", c.format, "json (structured), csv (tabular) or both")
        ->check(CLI::IsMember({"json", "csv", "both"}));

    const std::vector<std::pair<std::string, std::string>> commands{
        {"spectrum", "eigenpairs of one fiber"},
        {"bands", "band table over the t grid and asymptotic residuals"},
        {"singularities", "degeneracy reports and the probe for ESS at infinity"},
        {"census", "eigenvalue counts in the localization disks near 0 and pi"},
        {"expand", "spectral expansion of a function and the omission bound"},
        {"verify", "invariant checks on built-in fixtures"}};
    for (const auto& [name, help] : commands) app.add_subcommand(name, help)->callback([&c, n = name] { c.command = n; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        validate(c);
        worker_threads() = c.threads;
        Output out{c.out, {}};
        fs::create_directories(out.dir);
        static const std::map<std::string, std::function<int(const RunConfig&, Output&)>> run{
            {"spectrum", cmd_spectrum}, {"bands", cmd_bands},   {"singularities", cmd_singularities},
            {"census", cmd_census},     {"expand", cmd_expand}, {"verify", cmd_verify}};
        const int code = run.at(c.command)(c, out);
        for (const auto& w : out.written) std::cout << "wrote " << w << "\n";
        return code;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
