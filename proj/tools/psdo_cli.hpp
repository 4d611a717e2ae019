#pragma once

#include "psdo/config.hpp"
#include "psdo/verify.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <openssl/evp.h>

#include <ctime>
#include <iomanip>
#include <iostream>

namespace psdo::cli {

using json = nlohmann::ordered_json;

inline constexpr const char* tool_name = "psdo";
inline constexpr const char* tool_version = "1.0.0";

enum Exit : int {
    exit_ok = 0,
    exit_compat = 2,
    exit_ellipticity = 3,
    exit_indeterminate = 4,
    exit_inconsistent = 5,
    exit_config = 64,
    exit_parse = 65,
    exit_io = 74,
};

struct Options {
    std::string command;
    std::optional<std::string> config;
    std::uint64_t seed = 0;
    std::optional<std::string> only;
    std::optional<std::string> out;
    std::string format = "report";
};

/// A DSL source from the config failed to parse; carries the config field it came from.
class SourceError : public Error {
public:
    SourceError(std::string field, const ParseError& e)
        : Error(e.what()), field_(std::move(field)), line_(e.line()), column_(e.column()) {}
    const std::string& field() const { return field_; }
    int line() const { return line_; }
    int column() const { return column_; }

private:
    std::string field_;
    int line_, column_;
};

/// Result of one command before it is written out.
struct Outcome {
    int code = exit_ok;
    std::string status;
    json sections = json::object();
    std::vector<std::vector<std::string>> table;  ///< CSV rows, header first
    std::string timings_csv;                      ///< verify only
};

namespace detail {

inline std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("SHA-256 digest failed");
    std::ostringstream ss;
    for (unsigned int i = 0; i < len; ++i) ss << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return ss.str();
}

inline std::string utc_timestamp() {
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline std::string fmt(double v) {
    std::ostringstream ss;
    ss << std::setprecision(17) << v;
    return ss.str();
}

inline Expr parse_field(const std::string& field, const std::string& src, int q) {
    try {
        return parse(src, q);
    } catch (const ParseError& e) {
        throw SourceError(field, e);
    }
}

inline ConeSymbolFamily config_family(const RunConfig& c) {
    if (!c.family) throw ConfigError("symbols.family is required for cone and edge geometries");
    const auto& G = c.geometry;
    return ConeSymbolFamily(parse_field("symbols.family", *c.family, G.q), G.q, G.base);
}

inline SymbolTuple config_tuple(const RunConfig& c) {
    SymbolTuple t = extract_tuple(config_family(c), c.tuple_kind());
    if (c.interior) t.sigma0 = InteriorSymbol(parse_field("symbols.interior", *c.interior, c.geometry.q), c.geometry.q);
    t.tolerance = c.compat;
    return t;
}

inline InteriorSymbol config_interior(const RunConfig& c) {
    if (!c.interior) throw ConfigError("symbols.interior is required");
    return InteriorSymbol(parse_field("symbols.interior", *c.interior, c.geometry.q), c.geometry.q);
}

inline std::function<Complex(double)> config_toeplitz(const RunConfig& c) {
    Expr f = parse_field("symbols.toeplitz", *c.toeplitz, 1);
    if (f.shape() != 1) throw ConfigError("symbols.toeplitz must be a scalar function of x");
    for (Var v : {Var::r, Var::xi, Var::v, Var::w, Var::eta, Var::p})
        if (f.uses(v)) throw ConfigError("symbols.toeplitz may depend on x only");
    return [f](double x) { return eval_scalar(f, Bindings().set(Var::x, x)); };
}

/// Unit cosphere directions: (+-1, 0) for a symbol without parameter, a circle of (xi, v) otherwise.
inline std::vector<std::pair<double, double>> cosphere(const InteriorSymbol& a, int n = 32) {
    if (!a.a.uses(Var::v)) return {{1.0, 0.0}, {-1.0, 0.0}};
    std::vector<std::pair<double, double>> d;
    for (int k = 0; k < n; ++k) {
        double th = 2.0 * pi * (k + 0.5) / n;
        d.push_back({std::cos(th), std::sin(th)});
    }
    return d;
}

inline std::vector<std::string> section_header() {
    return {"N (nodes)", "kernel (dim)", "cokernel (dim)", "index", "s_min", "s_regular", "gap_ratio"};
}

inline void section_rows(const FredholmReport& r, std::vector<std::vector<std::string>>& table) {
    table.push_back(section_header());
    for (const auto& s : r.sections)
        table.push_back({std::to_string(s.size), std::to_string(s.kernel), std::to_string(s.cokernel), std::to_string(s.index),
                         fmt(s.smallest), fmt(s.smallest_regular), fmt(s.gap_ratio)});
}

inline json section_json(const FredholmReport& r) {
    json j = verify::fredholm_json(r);
    j["columns"] = section_header();
    return j;
}

}  // namespace detail

// ---- commands ----

/// Compatibility and ellipticity of the configured symbols.
inline Outcome cmd_check(const RunConfig& c) {
    Outcome o;
    const auto& G = c.geometry;
    if (G.kind == Geometry::Kind::circle) {
        json ell;
        double floor_min = std::numeric_limits<double>::infinity();
        if (c.toeplitz) {
            auto f = detail::config_toeplitz(c);
            for (int k = 0; k < 1024; ++k) floor_min = std::min(floor_min, std::abs(f(2.0 * pi * k / 1024)));
            ell["symbol"] = "toeplitz";
        } else {
            auto a = detail::config_interior(c);
            auto hom = check_homogeneity(a);
            ell["homogeneity"] = {{"max_violation", hom.max_violation}, {"pass", hom.pass}};
            for (int i = 0; i < 64; ++i)
                for (auto [xi, v] : detail::cosphere(a))
                    floor_min = std::min(floor_min, smallest_singular_value(interior_principal(a, 2.0 * pi * i / 64, 0.0, xi, v)));
            ell["symbol"] = "interior";
        }
        ell["interior_min"] = floor_min;
        ell["threshold"] = c.ellipticity;
        ell["elliptic"] = floor_min >= c.ellipticity;
        o.sections["ellipticity"] = ell;
        o.code = floor_min >= c.ellipticity ? exit_ok : exit_ellipticity;
        o.table = {{"quantity", "value"}, {"interior_min (singular value)", detail::fmt(floor_min)}};
    } else {
        SymbolTuple t = detail::config_tuple(c);
        json compat;
        bool compatible = true;
        if (t.P.base() == BaseKind::point) {
            auto cr = compat_check(t);
            compat = {{"max_mismatch", cr.max_mismatch}, {"tolerance", cr.tolerance}, {"pass", cr.pass}};
            compatible = cr.pass;
        } else {
            compat = {{"applicable", false}, {"reason", "circle-base families are compatible by construction"}};
        }
        o.sections["compatibility"] = compat;
        EllipticityOptions opt;
        opt.threshold = c.ellipticity;
        opt.p_max = c.p_max;
        opt.p_points = c.p_points;
        opt.n_omega = G.base == BaseKind::circle ? G.n_omega : 1;
        auto e = check_elliptic(t, opt);
        o.sections["ellipticity"] = {{"interior_min", e.interior_min},       {"conormal_min", e.conormal_min},
                                     {"conormal_argmin", e.conormal_argmin}, {"large_p_min", e.large_p_min},
                                     {"large_p_mismatch", e.large_p_mismatch}, {"threshold", c.ellipticity},
                                     {"elliptic", e.elliptic}};
        o.code = !compatible ? exit_compat : e.elliptic ? exit_ok : exit_ellipticity;
        o.table = {{"quantity", "value"},
                   {"compat_mismatch", compat.contains("max_mismatch") ? detail::fmt(compat["max_mismatch"].get<double>()) : "n/a"},
                   {"interior_min (singular value)", detail::fmt(e.interior_min)},
                   {"conormal_min (singular value)", detail::fmt(e.conormal_min)},
                   {"conormal_argmin (p)", detail::fmt(e.conormal_argmin)},
                   {"large_p_min (singular value)", detail::fmt(e.large_p_min)}};
    }
    o.status = o.code == exit_ok ? "elliptic" : o.code == exit_compat ? "incompatible" : "not elliptic";
    return o;
}

/// Quantizes the configured symbols, writes the container and checks the round trips.
inline Outcome cmd_quantize(const RunConfig& c, const std::filesystem::path& out_dir) {
    Outcome o;
    const auto& G = c.geometry;
    Geometry g = G.build();
    DiscretizedOperator A{g, c.v, Matrix{}};
    json extraction;
    bool extract_ok = true;
    if (G.kind == Geometry::Kind::circle) {
        if (c.toeplitz) {
            A.matrix = toeplitz_operator(g, detail::config_toeplitz(c));
            extraction = {{"applicable", false}, {"reason", "Toeplitz operators are not Kohn-Nirenberg quantizations of a smooth symbol"}};
        } else {
            auto a = detail::config_interior(c);
            A = op_circle(a, g, c.v);
            if (g.q() == 1) {
                Matrix table = local_symbol(A);
                double err = 0.0, scale = 1.0;
                for (int j = 0; j < g.n_x(); ++j)
                    for (int m = 0; m < g.n_x(); ++m) {
                        Complex want = a(g.x(j), 0.0, signed_mode(m, g.n_x()), c.v)(0, 0);
                        err = std::max(err, std::abs(table(j, m) - want));
                        scale = std::max(scale, std::abs(want));
                    }
                const double tol = std::max(c.compat, 1e-12 * scale);
                extract_ok = err <= tol;
                extraction = {{"max_error", err}, {"tolerance", tol}, {"pass", extract_ok}};
            } else {
                extraction = {{"applicable", false}, {"reason", "symbol tables are extracted for scalar operators"}};
            }
        }
    } else {
        SymbolTuple t = detail::config_tuple(c);
        auto qt = quantize_tuple(t, g, c.v);
        A = qt.op;
        extract_ok = qt.conormal_mismatch <= 1e-12;
        extraction = {{"conormal_mismatch", qt.conormal_mismatch}, {"tolerance", 1e-12}, {"pass", extract_ok}};
    }
    const auto path = out_dir / "operator.psdo";
    write_container(path, A);
    DiscretizedOperator back = read_container(path);
    const bool exact = back.matrix.rows() == A.matrix.rows() && back.matrix.cols() == A.matrix.cols() &&
                       std::memcmp(back.matrix.data(), A.matrix.data(), sizeof(Complex) * A.matrix.size()) == 0;
    const double norm = A.norm();
    o.sections["operator"] = {{"file", "operator.psdo"},
                              {"rows", A.matrix.rows()},
                              {"cols", A.matrix.cols()},
                              {"v", A.v},
                              {"norm_operator", norm},
                              {"norm_frobenius", A.matrix.norm()},
                              {"container_roundtrip_exact", exact}};
    o.sections["extraction"] = extraction;
    o.table = {{"quantity", "value"},
               {"rows", std::to_string(A.matrix.rows())},
               {"operator_norm", detail::fmt(norm)},
               {"container_roundtrip_exact", exact ? "true" : "false"}};
    if (!exact) throw IoError("container re-read does not reproduce the operator");
    o.code = extract_ok ? exit_ok : exit_inconsistent;
    o.status = extract_ok ? "quantized" : "extraction mismatch";
    return o;
}

/// Finite-section index table with the winding-number cross-check.
inline Outcome cmd_index(const RunConfig& c) {
    Outcome o;
    const auto& G = c.geometry;
    std::function<SectionInput(int)> build;
    std::vector<int> sizes = c.sizes;
    std::optional<int> expected;
    json oracle;
    auto winding_failed = [&](const WindingError& e) { oracle = {{"available", false}, {"reason", e.what()}}; };

    if (G.kind == Geometry::Kind::circle) {
        if (sizes.empty()) sizes = {G.n_x, 2 * G.n_x};
        if (c.toeplitz) {
            auto f = detail::config_toeplitz(c);
            build = [f](int n) {
                Geometry g = Geometry::circle(n);
                return SectionInput{toeplitz_operator(g, f), frequency_layer(g)};
            };
            try {
                auto w = circle_winding(f);
                expected = -w.winding;
                oracle = {{"available", true}, {"winding", w.winding}, {"winding_raw", w.raw}, {"rule", "index = -winding(f)"}};
            } catch (const WindingError& e) {
                winding_failed(e);
            }
        } else {
            auto a = detail::config_interior(c);
            const double v = c.v;
            const int q = G.q;
            build = [a, v, q](int n) {
                Geometry g = Geometry::circle(n, q);
                return SectionInput{op_circle(a, g, v).matrix, frequency_layer(g)};
            };
            try {
                auto side = [&](double xi) {
                    return circle_winding([&](double x) { return interior_principal(a, x, 0.0, xi, 0.0).determinant(); });
                };
                auto wp = side(1.0), wm = side(-1.0);
                expected = wm.winding - wp.winding;
                oracle = {{"available", true},
                          {"winding_plus", wp.winding},
                          {"winding_minus", wm.winding},
                          {"rule", "index = winding(det sigma(x, -1)) - winding(det sigma(x, +1))"}};
            } catch (const WindingError& e) {
                winding_failed(e);
            }
        }
    } else {
        if (G.kind != Geometry::Kind::cone) throw ConfigError("index supports circle and cone geometries");
        if (G.mode != BoundaryMode::interval) throw ConfigError("index needs an interval-mode cone (geometry.mode = \"interval\")");
        if (c.tuple_kind() != TupleKind::vertex) throw ConfigError("cone index needs a vertex tuple");
        if (sizes.empty()) sizes = {G.n_t, 2 * G.n_t};
        SymbolTuple t = detail::config_tuple(c);
        if (t.P.base() == BaseKind::point && !compat_check(t).pass) throw CompatibilityError("tuple fails compatibility");
        const GeometryConfig gc = G;
        const double v = c.v;
        build = [t, gc, v](int n) {
            Geometry g = gc.build(n);
            return SectionInput{quantize_tuple(t, g, v).op.matrix, end_layer(g)};
        };
        try {
            auto w = winding_oracle(conormal(t.P), G.base == BaseKind::circle ? G.n_omega : 1);
            expected = w.winding;
            oracle = {{"available", true}, {"winding", w.winding}, {"winding_raw", w.raw}, {"rule", "index = winding(det conormal(p)), p increasing"}};
        } catch (const WindingError& e) {
            winding_failed(e);
        }
    }

    auto rep = finite_section(build, sizes, c.rank_tolerance, c.gap);
    o.sections["fredholm"] = detail::section_json(rep);
    o.sections["winding"] = oracle;
    detail::section_rows(rep, o.table);
    if (!rep.determinate) {
        o.code = exit_indeterminate;
        o.status = "indeterminate";
    } else if (!expected || *expected != rep.index) {
        o.code = exit_inconsistent;
        o.status = "inconsistent";
    } else {
        o.code = exit_ok;
        o.status = "index " + std::to_string(rep.index);
    }
    o.sections["consistent"] = rep.determinate && expected && *expected == rep.index;
    return o;
}

/// The invariant battery (or one suite of it).
inline Outcome cmd_verify(std::uint64_t seed, const std::optional<std::string>& only) {
    Outcome o;
    std::vector<const verify::Suite*> run;
    if (only) {
        try {
            run.push_back(&verify::find_suite(*only));
        } catch (const DomainError& e) {
            throw ConfigError(e.what());
        }
    } else {
        for (const auto& s : verify::suites()) run.push_back(&s);
    }
    bool all = true;
    std::ostringstream timings;
    timings << "suite,seconds\n";
    o.table.push_back({"suite", "pass"});
    for (const auto* s : run) {
        auto r = verify::run_suite(*s, seed);
        o.sections["suites"][r.name] = {{"description", s->description}, {"pass", r.pass}, {"metrics", r.metrics}};
        o.table.push_back({r.name, r.pass ? "true" : "false"});
        timings << r.name << ',' << detail::fmt(r.seconds) << '\n';
        all = all && r.pass;
    }
    o.timings_csv = timings.str();
    o.code = all ? exit_ok : exit_inconsistent;
    o.status = all ? "all suites pass" : "suite failures";
    return o;
}

// ---- driver ----

inline std::string csv(const std::vector<std::vector<std::string>>& rows) {
    std::ostringstream ss;
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) {
            const bool quote = r[i].find_first_of(",\"") != std::string::npos;
            if (i) ss << ',';
            if (quote) {
                ss << '"';
                for (char ch : r[i]) ss << (ch == '"' ? "\"\"" : std::string(1, ch));
                ss << '"';
            } else {
                ss << r[i];
            }
        }
        ss << '\n';
    }
    return ss.str();
}

/// Runs one command: loads the config, executes, writes report.json (and tables) atomically into
/// the output directory, prints a summary or CSV to `out`. Returns the exit code.
inline int run(const Options& opt, std::ostream& out, std::ostream& err) {
    try {
        std::optional<RunConfig> cfg;
        if (opt.config)
            cfg = load_config(*opt.config);
        else if (opt.command != "verify")
            throw ConfigError("--config is required for '" + opt.command + "'");
        if (opt.format != "report" && opt.format != "csv") throw ConfigError("--format must be 'report' or 'csv'");

        std::filesystem::path dir = opt.out ? *opt.out : (cfg && cfg->out_dir) ? *cfg->out_dir : "psdo-out";

        Outcome o;
        try {
            if (opt.command == "check")
                o = cmd_check(*cfg);
            else if (opt.command == "quantize")
                o = cmd_quantize(*cfg, dir);
            else if (opt.command == "index")
                o = cmd_index(*cfg);
            else if (opt.command == "verify")
                o = cmd_verify(opt.seed, opt.only);
            else
                throw ConfigError("unknown command '" + opt.command + "'");
        } catch (const CompatibilityError& e) {
            o.code = exit_compat;
            o.status = "incompatible";
            o.sections["compatibility"] = {{"pass", false}, {"error", e.what()}};
        }

        json report;
        report["tool"] = tool_name;
        report["version"] = tool_version;
        report["command"] = opt.command;
        report["config_hash"] = detail::sha256_hex(cfg ? cfg->source.dump() : std::string("null"));
        report["seed"] = opt.seed;
        report["timestamp"] = detail::utc_timestamp();
        report["sections"] = o.sections;
        report["verdict"] = {{"exit_code", o.code}, {"status", o.status}};
        write_atomic(dir / "report.json", report.dump(2) + "\n");
        if (!o.table.empty() && opt.command == "index") write_atomic(dir / "index.csv", csv(o.table));
        if (!o.timings_csv.empty()) write_atomic(dir / "timings.csv", o.timings_csv);

        if (opt.format == "csv")
            out << csv(o.table);
        else
            out << opt.command << ": " << o.status << " (exit " << o.code << "), report " << (dir / "report.json").string() << '\n';
        return o.code;
    } catch (const SourceError& e) {
        err << "error: DSL parse error in " << e.field() << ": " << e.what() << '\n';
        return exit_parse;
    } catch (const ConfigError& e) {
        err << "error: invalid config: " << e.what() << '\n';
        return exit_config;
    } catch (const IoError& e) {
        err << "error: I/O: " << e.what() << '\n';
        return exit_io;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: I/O: " << e.what() << '\n';
        return exit_io;
    } catch (const Error& e) {
        // remaining library errors (shape, domain, evaluation) stem from config contents
        err << "error: invalid config: " << e.what() << '\n';
        return exit_config;
    }
}

/// Parses argv and dispatches to run().
inline int main(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Numerical calculus of parameter-dependent pseudodifferential operators on circles, cones and edges"};
    app.require_subcommand(1);
    Options opt;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opt.config, "run configuration (JSON)");
        sub->add_option("--seed", opt.seed, "seed for randomized instances")->capture_default_str();
        sub->add_option("--out", opt.out, "output directory (overrides output.dir)");
        sub->add_option("--format", opt.format, "stdout format: report or csv")->check(CLI::IsMember({"report", "csv"}))->capture_default_str();
    };
    auto* check = app.add_subcommand("check", "compatibility and ellipticity of the configured symbols");
    auto* quant = app.add_subcommand("quantize", "quantize and write the operator container");
    auto* index = app.add_subcommand("index", "finite-section index with winding cross-check");
    auto* ver = app.add_subcommand("verify", "run the invariant battery");
    for (auto* s : {check, quant, index, ver}) add_common(s);
    ver->add_option("--only", opt.only, "run a single suite");
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return exit_config;
    }
    opt.command = app.get_subcommands().front()->get_name();
    return run(opt, out, err);
}

}  // namespace psdo::cli
