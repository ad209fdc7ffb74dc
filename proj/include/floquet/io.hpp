#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "floquet/bands.hpp"
#include "floquet/error.hpp"
#include "floquet/expansion.hpp"
#include "floquet/gelfand.hpp"
#include "floquet/operator.hpp"
#include "floquet/singularity.hpp"

// JSON and CSV readers/writers. Complex numbers travel as [re, im]; plain
// numbers are accepted on input. Every document carries "version".

namespace floquet::io {

using json = nlohmann::json;

// ---- scalars, vectors, matrices -------------------------------------------

inline json to_json(cplx z) { return json::array({z.real(), z.imag()}); }

inline cplx complex_from(const json& j) {
    if (j.is_number()) return {j.get<double>(), 0.0};
    if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number())
        return {j[0].get<double>(), j[1].get<double>()};
    throw FormatError("expected a number or [re, im], got " + j.dump());
}

inline json to_json(const Vector& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(to_json(v(i)));
    return a;
}

inline Vector vector_from(const json& j) {
    if (!j.is_array()) throw FormatError("expected an array of complex numbers");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = complex_from(j[i]);
    return v;
}

/// Row-major: a list of rows, each a list of entries.
inline json to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(to_json(Vector(m.row(r).transpose())));
    return rows;
}

inline Matrix matrix_from(const json& j, Eigen::Index rows, Eigen::Index cols) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
        throw FormatError("matrix must have " + std::to_string(rows) + " rows");
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const json& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            throw FormatError("matrix row " + std::to_string(r) + " must have " + std::to_string(cols) + " entries");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = complex_from(row[static_cast<std::size_t>(c)]);
    }
    return m;
}

template <class T>
T field(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw FormatError(std::string("missing field \"") + key + "\"");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("field \"") + key + "\": " + e.what());
    }
}

inline json parse_text(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("not valid JSON: ") + e.what());
    }
}

inline json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_text(ss.str());
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidArgument("cannot write " + path);
    out << text;
}

inline void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline json document(const char* format) { return json{{"format", format}, {"version", kVersion}}; }

inline void expect_format(const json& j, const char* format) {
    if (!j.is_object()) throw FormatError("document must be a JSON object");
    if (j.contains("format") && j["format"] != format)
        throw FormatError("expected format \"" + std::string(format) + "\", got " + j["format"].dump());
}

// ---- operator spec ----------------------------------------------------------

inline json to_json(const OperatorSpec& spec) {
    json j = document("floquet-operator");
    j["order"] = spec.order;
    j["dim"] = spec.dim;
    json coeffs = json::array();
    for (const auto& [nu, s] : spec.coeffs) {
        json modes = json::array();
        for (int q = -s.bandwidth(); q <= s.bandwidth(); ++q)
            if (!s.mode(q).isZero(0.0)) modes.push_back({{"q", q}, {"matrix", to_json(s.mode(q))}});
        coeffs.push_back({{"nu", nu}, {"modes", modes}});
    }
    j["coefficients"] = coeffs;
    return j;
}

/// Shape problems surface as MalformedSpec; syntax problems as FormatError.
inline OperatorSpec operator_from(const json& j) {
    expect_format(j, "floquet-operator");
    OperatorSpec spec;
    spec.order = field<int>(j, "order");
    spec.dim = field<int>(j, "dim");
    if (spec.order < 2) throw MalformedSpec("order n must be >= 2");
    if (spec.dim < 1) throw MalformedSpec("dimension m must be >= 1");
    if (j.contains("coefficients")) {
        if (!j["coefficients"].is_array()) throw FormatError("\"coefficients\" must be an array");
        for (const json& c : j["coefficients"]) {
            const int nu = field<int>(c, "nu");
            if (nu < 2 || nu > spec.order)
                throw MalformedSpec("coefficient index " + std::to_string(nu) + " outside [2, n]");
            auto [it, fresh] = spec.coeffs.try_emplace(nu, spec.dim, 0);
            if (!fresh) throw MalformedSpec("coefficient P_" + std::to_string(nu) + " listed twice");
            if (!c.contains("modes") || !c["modes"].is_array()) throw FormatError("coefficient needs a \"modes\" array");
            for (const json& md : c["modes"]) {
                const int q = field<int>(md, "q");
                if (!md.contains("matrix")) throw FormatError("mode needs a \"matrix\"");
                const json& mj = md["matrix"];
                if (!mj.is_array() || static_cast<int>(mj.size()) != spec.dim)
                    throw MalformedSpec("mode q = " + std::to_string(q) + " of P_" + std::to_string(nu) +
                                        " must be " + std::to_string(spec.dim) + "x" + std::to_string(spec.dim));
                for (const json& row : mj)
                    if (!row.is_array() || static_cast<int>(row.size()) != spec.dim)
                        throw MalformedSpec("mode q = " + std::to_string(q) + " of P_" + std::to_string(nu) +
                                            " has a row of the wrong length");
                it->second.add_mode(q, matrix_from(mj, spec.dim, spec.dim));
            }
        }
    }
    check_structure(spec);
    return spec;
}

inline OperatorSpec read_operator(const std::string& path) { return operator_from(read_json(path)); }

// ---- cell functions -----------------------------------------------------------

inline const char* to_string(CellRepr r) { return r == CellRepr::fourier ? "fourier" : "piecewise_constant"; }

/// Each cell is a dim × columns matrix: sub-cell samples, or modes −R..R.
inline json to_json(const CellFunction& f) {
    json j = document("floquet-function");
    j["dim"] = f.dim();
    j["first_cell"] = f.first();
    j["representation"] = to_string(f.repr());
    j["resolution"] = f.resolution();
    json cells = json::array();
    for (const Matrix& c : f.data()) cells.push_back(to_json(c));
    j["cells"] = cells;
    return j;
}

inline CellFunction cell_function_from(const json& j) {
    expect_format(j, "floquet-function");
    const int dim = field<int>(j, "dim");
    const int first = j.contains("first_cell") ? field<int>(j, "first_cell") : 0;
    const std::string repr = j.contains("representation") ? field<std::string>(j, "representation") : "piecewise_constant";
    const int res = j.contains("resolution") ? field<int>(j, "resolution") : (repr == "fourier" ? 0 : 1);
    if (dim < 1) throw InvalidArgument("function dimension must be >= 1");
    if (!j.contains("cells") || !j["cells"].is_array()) throw FormatError("function needs a \"cells\" array");
    std::vector<Matrix> cells;
    if (repr == "piecewise_constant") {
        if (res < 1) throw InvalidArgument("resolution must be >= 1");
        for (const json& c : j["cells"]) cells.push_back(matrix_from(c, dim, res));
        return CellFunction::piecewise_constant(dim, first, res, std::move(cells));
    }
    if (repr == "fourier") {
        if (res < 0) throw InvalidArgument("mode bound must be >= 0");
        for (const json& c : j["cells"]) cells.push_back(matrix_from(c, dim, 2 * res + 1));
        return CellFunction::fourier(dim, first, res, std::move(cells));
    }
    throw FormatError("unknown representation \"" + repr + "\"");
}

inline CellFunction read_function(const std::string& path) { return cell_function_from(read_json(path)); }

// ---- spectra and band tables --------------------------------------------------------

inline const char* to_string(LabelKind k) { return k == LabelKind::asymptotic ? "asymptotic" : "small"; }

inline json to_json(const BandLabel& l) {
    return {{"k", l.k}, {"j", l.j}, {"kind", to_string(l.kind)}, {"small_index", l.small_index}};
}

inline BandLabel label_from(const json& j) {
    BandLabel l;
    l.k = field<int>(j, "k");
    l.j = field<int>(j, "j");
    const std::string kind = j.contains("kind") ? field<std::string>(j, "kind") : "asymptotic";
    if (kind != "asymptotic" && kind != "small") throw FormatError("unknown label kind \"" + kind + "\"");
    l.kind = kind == "asymptotic" ? LabelKind::asymptotic : LabelKind::small;
    l.small_index = j.contains("small_index") ? field<int>(j, "small_index") : -1;
    return l;
}

/// `vectors` adds ψ and the left vector; without them the record is tabular only.
inline json to_json(const BlochSpectrum& sp, bool vectors = true) {
    json j{{"t", to_json(sp.t)}, {"K", sp.K}, {"m", sp.m}, {"n", sp.n}};
    json pairs = json::array();
    for (const BlochPair& p : sp.pairs) {
        json r = to_json(p.label);
        r["lambda"] = to_json(p.lambda);
        r["alpha"] = to_json(p.alpha);
        r["defective"] = p.defective;
        if (vectors) {
            r["psi"] = to_json(p.psi);
            r["x_left"] = to_json(p.x_left);
        }
        pairs.push_back(std::move(r));
    }
    j["pairs"] = std::move(pairs);
    return j;
}

inline BlochSpectrum spectrum_from(const json& j) {
    BlochSpectrum sp;
    sp.t = complex_from(j.at("t"));
    sp.K = field<int>(j, "K");
    sp.m = field<int>(j, "m");
    sp.n = field<int>(j, "n");
    const Eigen::Index N = static_cast<Eigen::Index>((2 * sp.K + 1) * sp.m);
    for (const json& r : j.at("pairs")) {
        BlochPair p;
        p.label = label_from(r);
        p.lambda = complex_from(r.at("lambda"));
        p.alpha = complex_from(r.at("alpha"));
        p.defective = field<bool>(r, "defective");
        if (!r.contains("psi") || !r.contains("x_left"))
            throw FormatError("spectrum record lacks eigenvectors; export with vectors to re-import");
        p.psi = vector_from(r["psi"]);
        p.x_left = vector_from(r["x_left"]);
        if (p.psi.size() != N || p.x_left.size() != N) throw FormatError("eigenvector length differs from (2K+1)m");
        sp.pairs.push_back(std::move(p));
    }
    return sp;
}

inline json to_json(const BandTable& table, bool vectors = true) {
    json j = document("floquet-bands");
    j["grid"] = table.grid;
    json spectra = json::array();
    for (const auto& sp : table.spectra) spectra.push_back(to_json(sp, vectors));
    j["spectra"] = std::move(spectra);
    j["links"] = table.links;
    json amb = json::array();
    for (const auto& row : table.ambiguous) {
        std::vector<int> r(row.begin(), row.end());
        amb.push_back(r);
    }
    j["ambiguous"] = amb;
    return j;
}

inline BandTable band_table_from(const json& j) {
    expect_format(j, "floquet-bands");
    BandTable t;
    t.grid = field<std::vector<double>>(j, "grid");
    for (const json& s : j.at("spectra")) t.spectra.push_back(spectrum_from(s));
    if (t.spectra.size() != t.grid.size()) throw FormatError("grid and spectra differ in length");
    if (j.contains("links")) t.links = j["links"].get<std::vector<std::vector<int>>>();
    if (j.contains("ambiguous"))
        for (const auto& row : j["ambiguous"].get<std::vector<std::vector<int>>>())
            t.ambiguous.emplace_back(row.begin(), row.end());
    return t;
}

inline BandTable read_band_table(const std::string& path) { return band_table_from(read_json(path)); }

namespace detail {

inline std::string num(double x) {
    std::ostringstream os;
    os << std::setprecision(17) << x;
    return os.str();
}

inline std::string header() { return std::string("# ") + kVersion + "\n"; }

}  // namespace detail

/// Columns: node,t,k,j,kind,small_index,re_lambda,im_lambda,re_alpha,im_alpha,defective
inline std::string bands_csv(const BandTable& table) {
    std::string s = detail::header() + "node,t,k,j,kind,small_index,re_lambda,im_lambda,re_alpha,im_alpha,defective\n";
    for (std::size_t i = 0; i < table.nodes(); ++i)
        for (const BlochPair& p : table.spectra[i].pairs)
            s += std::to_string(i) + "," + detail::num(table.grid[i]) + "," + std::to_string(p.label.k) + "," +
                 std::to_string(p.label.j) + "," + to_string(p.label.kind) + "," +
                 std::to_string(p.label.small_index) + "," + detail::num(p.lambda.real()) + "," +
                 detail::num(p.lambda.imag()) + "," + detail::num(p.alpha.real()) + "," +
                 detail::num(p.alpha.imag()) + "," + (p.defective ? "1" : "0") + "\n";
    return s;
}

inline json to_json(const AsymptoticReport& r) {
    json j = document("floquet-asymptotics");
    json recs = json::array();
    for (const auto& x : r.records)
        recs.push_back({{"node", x.node}, {"t", x.t}, {"k", x.k}, {"j", x.j}, {"r_lambda", x.r_lambda},
                        {"r_psi", x.r_psi}, {"r_x", x.r_x}});
    json fits = json::array();
    for (const auto& f : r.fits)
        fits.push_back({{"node", f.node}, {"j", f.j}, {"sign", f.sign}, {"slope_lambda", f.lambda},
                        {"slope_psi", f.psi}, {"slope_x", f.x}});
    j["records"] = recs;
    j["fits"] = fits;
    if (!r.fits.empty())
        j["max_slopes"] = {{"lambda", r.max_slope_lambda}, {"psi", r.max_slope_psi}, {"x", r.max_slope_x}};
    return j;
}

inline json to_json(const CensusReport& r) {
    json j{{"family", r.family == CensusFamily::zero ? "zero" : "pi"},
           {"t", r.t},
           {"N0", r.N0},
           {"bounded_count", r.bounded_count},
           {"bounded_expected", r.bounded_expected},
           {"passes", r.passes()}};
    json disks = json::array();
    for (const auto& d : r.disks)
        disks.push_back({{"k", d.k}, {"center", to_json(d.center)}, {"radius", d.radius}, {"count", d.count},
                         {"expected", d.expected}});
    j["disks"] = disks;
    json esc = json::array(), art = json::array();
    for (cplx z : r.escaped) esc.push_back(to_json(z));
    for (cplx z : r.artifacts) art.push_back(to_json(z));
    j["escaped"] = esc;
    j["artifacts"] = art;
    return j;
}

// ---- degeneracy reports ------------------------------------------------------------

inline json to_json(const DegeneracyReport& r) {
    json j{{"t_j", r.t_j},
           {"Lambda", to_json(r.Lambda)},
           {"multiplicity", r.multiplicity},
           {"window", r.window},
           {"verdict", to_string(r.verdict)}};
    json members = json::array();
    for (const auto& m : r.members) {
        json x = to_json(m.label);
        x["lambda_outer"] = to_json(m.lambda_outer);
        x["gamma"] = m.gamma;
        x["gamma_left"] = m.gamma_left;
        x["gamma_right"] = m.gamma_right;
        x["class"] = to_string(m.cls);
        members.push_back(std::move(x));
    }
    j["members"] = members;
    auto labels = [](const std::vector<BandLabel>& v) {
        json a = json::array();
        for (const auto& l : v) a.push_back(to_json(l));
        return a;
    };
    j["T"] = labels(r.T);
    j["B"] = labels(r.B);
    j["S"] = labels(r.S);
    j["I"] = labels(r.I);
    return j;
}

inline Verdict verdict_from(const std::string& s) {
    if (s == "not-ESS") return Verdict::not_ess;
    if (s == "ESS") return Verdict::ess;
    if (s == "indeterminate") return Verdict::indeterminate;
    throw FormatError("unknown verdict \"" + s + "\"");
}

inline MemberClass member_class_from(const std::string& s) {
    if (s == "B") return MemberClass::integrable;
    if (s == "S") return MemberClass::nonintegrable;
    if (s == "indeterminate") return MemberClass::indeterminate;
    throw FormatError("unknown member class \"" + s + "\"");
}

inline DegeneracyReport degeneracy_report_from(const json& j) {
    DegeneracyReport r;
    r.t_j = field<double>(j, "t_j");
    r.Lambda = complex_from(j.at("Lambda"));
    r.multiplicity = field<int>(j, "multiplicity");
    r.window = j.contains("window") ? field<double>(j, "window") : 0.0;
    r.verdict = verdict_from(field<std::string>(j, "verdict"));
    if (j.contains("members"))
        for (const json& x : j["members"]) {
            ClusterMember m;
            m.label = label_from(x);
            m.lambda_outer = complex_from(x.at("lambda_outer"));
            m.gamma = field<double>(x, "gamma");
            m.gamma_left = x.contains("gamma_left") ? field<double>(x, "gamma_left") : m.gamma;
            m.gamma_right = x.contains("gamma_right") ? field<double>(x, "gamma_right") : m.gamma;
            m.cls = member_class_from(field<std::string>(x, "class"));
            r.members.push_back(m);
        }
    auto labels = [&](const char* key, std::vector<BandLabel>& out) {
        if (j.contains(key))
            for (const json& l : j[key]) out.push_back(label_from(l));
    };
    labels("T", r.T);
    labels("B", r.B);
    labels("S", r.S);
    labels("I", r.I);
    return r;
}

inline json to_json(const InfinityProbe& p) {
    json j{{"window_length", p.window_length}, {"suspected", p.suspected}};
    json entries = json::array();
    for (const auto& e : p.entries)
        entries.push_back({{"k", e.k}, {"j", e.j}, {"integral", e.integral}, {"nodes_used", e.nodes_used}});
    json seqs = json::array();
    for (const auto& s : p.sequences)
        seqs.push_back({{"sign", s.sign}, {"j", s.j}, {"k", s.k}, {"values", s.values}, {"growing", s.growing}});
    j["entries"] = entries;
    j["sequences"] = seqs;
    return j;
}

inline json singularities_document(const std::vector<DegeneracyReport>& reports, const InfinityProbe& probe) {
    json j = document("floquet-singularities");
    json rs = json::array();
    for (const auto& r : reports) rs.push_back(to_json(r));
    j["reports"] = rs;
    j["infinity_probe"] = to_json(probe);
    return j;
}

inline std::vector<DegeneracyReport> degeneracy_reports_from(const json& j) {
    expect_format(j, "floquet-singularities");
    std::vector<DegeneracyReport> out;
    for (const json& r : j.at("reports")) out.push_back(degeneracy_report_from(r));
    return out;
}

/// Columns: t_j,re_Lambda,im_Lambda,multiplicity,k,j,gamma,class,verdict (one row per member)
inline std::string degeneracy_csv(const std::vector<DegeneracyReport>& reports) {
    std::string s = detail::header() + "t_j,re_Lambda,im_Lambda,multiplicity,k,j,gamma,class,verdict\n";
    for (const auto& r : reports)
        for (const auto& m : r.members)
            s += detail::num(r.t_j) + "," + detail::num(r.Lambda.real()) + "," + detail::num(r.Lambda.imag()) + "," +
                 std::to_string(r.multiplicity) + "," + std::to_string(m.label.k) + "," + std::to_string(m.label.j) +
                 "," + detail::num(m.gamma) + "," + to_string(m.cls) + "," + to_string(r.verdict) + "\n";
    return s;
}

// ---- expansion -------------------------------------------------------------------------

inline json to_json(const Interval& i) { return json::array({i.a, i.b}); }

inline json to_json(const SqWindow& w) {
    json b = json::array(), s = json::array();
    for (const auto& l : w.B) b.push_back(to_json(l));
    for (const auto& l : w.S) s.push_back(to_json(l));
    return {{"t_j", w.t_j}, {"epsilon", w.epsilon}, {"Lambda", to_json(w.Lambda)}, {"multiplicity", w.multiplicity},
            {"B", b}, {"gamma_B", w.gamma_B}, {"S", s}};
}

inline json to_json(const CenterWindow& c) {
    json subs = json::array(), pieces = json::array();
    for (const auto& w : c.sub_windows) subs.push_back(to_json(w));
    for (const auto& p : c.pieces) pieces.push_back(to_json(p));
    return {{"center", c.center}, {"h", c.h}, {"sub_windows", subs}, {"pieces", pieces}};
}

inline json to_json(const ExpansionPlan& plan) {
    json reg = json::array(), sq = json::array();
    for (const auto& r : plan.regular) reg.push_back(to_json(r));
    for (const auto& w : plan.sq) sq.push_back(to_json(w));
    const auto& q = plan.quad;
    return {{"h", plan.h},
            {"epsilon", plan.epsilon},
            {"regular", reg},
            {"sq", sq},
            {"zero", to_json(plan.zero)},
            {"pi", to_json(plan.pi)},
            {"total_length", plan.total_length()},
            {"quadrature",
             {{"regular_nodes", q.regular_nodes},
              {"regular_order", q.regular_order},
              {"window_order", q.window_order},
              {"stage_order", q.stage_order},
              {"stages", q.stages},
              {"richardson_terms", q.richardson_terms},
              {"pv_tol", q.pv_tol},
              {"defect_shift", q.defect_shift}}}};
}

inline json to_json(const ApproximationCheck& c) {
    return {{"measured", c.measured}, {"bound", c.bound}, {"slack", c.slack}, {"M", c.M}, {"passes", c.passes}};
}

/// Zero-weight grid points are the uniform plot samples.
inline json plot_samples(const ReconstructionResult& r) {
    json xs = json::array(), f = json::array(), fh = json::array();
    const SampleGrid& g = *r.grid;
    for (int i = 0; i < g.points(); ++i) {
        if (g.w[i] != 0.0) continue;
        xs.push_back(g.x[i]);
        f.push_back(to_json(Vector(r.f.segment(i * g.m, g.m))));
        fh.push_back(to_json(Vector(r.f_hat.segment(i * g.m, g.m))));
    }
    return {{"x", xs}, {"f", f}, {"f_hat", fh}};
}

inline json to_json(const ReconstructionResult& r) {
    json contrib = json::array();
    for (const auto& c : r.contributions) contrib.push_back({{"name", c.name}, {"norm", c.norm}});
    json brackets = json::array();
    for (const auto& b : r.brackets)
        brackets.push_back({{"change", b.change}, {"scale", b.scale}, {"cauchy", b.cauchy}});
    return {{"K", r.K},
            {"k_max", r.k_max},
            {"p", r.grid ? r.grid->p : 0.0},
            {"t_nodes", r.t_nodes},
            {"norm_f", r.norm_f},
            {"error_l2", r.error_l2},
            {"relative_error", r.relative_error()},
            {"contributions", contrib},
            {"brackets", brackets},
            {"samples", plot_samples(r)}};
}

inline json expansion_document(const ExpansionPlan& plan, const ReconstructionResult& r,
                               const ApproximationCheck* check) {
    json j = document("floquet-expansion");
    j["plan"] = to_json(plan);
    j["reconstruction"] = to_json(r);
    if (check) j["approximation_check"] = to_json(*check);
    return j;
}

/// Columns: x,s,re_f,im_f,re_f_hat,im_f_hat at the plot samples.
inline std::string expansion_csv(const ReconstructionResult& r) {
    std::string s = detail::header() + "x,s,re_f,im_f,re_f_hat,im_f_hat\n";
    const SampleGrid& g = *r.grid;
    for (int i = 0; i < g.points(); ++i) {
        if (g.w[i] != 0.0) continue;
        for (int c = 0; c < g.m; ++c) {
            const cplx a = r.f(i * g.m + c), b = r.f_hat(i * g.m + c);
            s += detail::num(g.x[i]) + "," + std::to_string(c) + "," + detail::num(a.real()) + "," +
                 detail::num(a.imag()) + "," + detail::num(b.real()) + "," + detail::num(b.imag()) + "\n";
        }
    }
    return s;
}

}  // namespace floquet::io
