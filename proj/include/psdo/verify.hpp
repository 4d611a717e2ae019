#pragma once

#include "psdo/stock.hpp"

#include "json.hpp"

#include <chrono>
#include <cstdint>
#include <random>

namespace psdo::verify {

using json = nlohmann::ordered_json;

/// Outcome of one invariant suite. `metrics` is deterministic for a fixed seed; wall-clock time is
/// kept separately so that reports can be compared byte for byte.
struct SuiteResult {
    std::string name;
    bool pass = false;
    json metrics = json::object();
    double seconds = 0.0;
};

struct Suite {
    std::string name;
    std::string description;
    std::function<SuiteResult(std::uint64_t seed)> run;
};

namespace detail {

inline double elapsed(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline json section_table(const FredholmReport& r) {
    json rows = json::array();
    for (const auto& s : r.sections)
        rows.push_back({{"N", s.size}, {"kernel", s.kernel}, {"cokernel", s.cokernel}, {"index", s.index}, {"s_min", s.smallest},
                        {"s_regular", s.smallest_regular}, {"gap_ratio", s.gap_ratio}});
    return rows;
}

}  // namespace detail

inline json fredholm_json(const FredholmReport& r) {
    return {{"determinate", r.determinate}, {"stable", r.stable},       {"gaps_ok", r.gaps_ok},
            {"degenerate", r.degenerate},   {"kernel", r.kernel},       {"cokernel", r.cokernel},
            {"index", r.index},             {"rank_tolerance", r.rank_tolerance}, {"sections", detail::section_table(r)}};
}

/// Twisted homogeneity of the stock edge symbols for lambda = e^{k h_t}, k = 1..8, at N_t = 64.
inline SuiteResult twisted_homogeneity_suite(std::uint64_t) {
    SuiteResult out{"twisted-homogeneity"};
    const std::vector<std::pair<double, double>> samples{{0.6, 0.8}, {-1.0, 0.3}, {2.0, -1.0}};
    double worst = 0.0;
    for (const auto& inst : stock::edge_symbols()) {
        Geometry g = Geometry::cone({inst.base, inst.n_omega, 6.0, 64}, inst.q);
        auto rep = twisted_homogeneity(inst.family(), g, 0.3, samples, 8);
        out.metrics["symbols"].push_back({{"name", inst.name}, {"max_violation", rep.max_violation}, {"checks", rep.checks}});
        worst = std::max(worst, rep.max_violation);
    }
    out.metrics["max_violation"] = worst;
    out.metrics["tolerance"] = 1e-10;
    out.pass = worst <= 1e-10;
    return out;
}

/// Composition remainders for H1 = e^{ix}, H2 = chi(xi): the literal order composes exactly; the
/// reversed order carries the full series and its remainders must decay with slope <= -(N - 1/2).
inline SuiteResult composition_suite(std::uint64_t) {
    SuiteResult out{"composition"};
    out.pass = true;
    const Expr e = parse("exp((0,1)*x)"), chi = parse("chi(xi)");
    for (int N : {1, 2, 3}) {
        auto lit = compose_symbols(e, chi, N, 256);
        auto rev = compose_symbols(chi, e, N, 256);
        double lit_max = *std::max_element(lit.remainders.begin(), lit.remainders.end());
        bool ok = lit.exact && !rev.exact && rev.slope <= -(N - 0.5);
        out.metrics["orders"].push_back({{"N", N},
                                         {"literal_exact", lit.exact},
                                         {"literal_max_remainder", lit_max},
                                         {"xi", rev.xis},
                                         {"reversed_remainders", rev.remainders},
                                         {"reversed_slope", rev.slope},
                                         {"required_slope", -(N - 0.5)},
                                         {"pass", ok}});
        out.pass = out.pass && ok;
    }
    return out;
}

/// Quantize/extract round trip: exact for x-independent symbols at N = 64; for x-dependent symbols the
/// Kohn-Nirenberg table is recovered exactly and the product symbol error halves from N = 64 to 128.
inline SuiteResult roundtrip_suite(std::uint64_t) {
    SuiteResult out{"roundtrip"};
    auto g64 = Geometry::circle(64);
    auto sym = extract_symbol(op_circle(InteriorSymbol(parse("chi(xi) + (0,1)*xi/(1+xi^2) + 0.3*chi(xi)^3"), 1), g64));
    double flat = 0.0;
    for (std::size_t m = 0; m < sym.blocks.size(); ++m) {
        double k = sym.modes[m], c = k / std::sqrt(1 + k * k);
        flat = std::max(flat, std::abs(sym.blocks[m](0, 0) - (c + I * k / (1 + k * k) + 0.3 * c * c * c)));
    }
    auto table_error = [](int n) {
        auto g = Geometry::circle(n);
        Matrix s = local_symbol(op_circle(InteriorSymbol(parse("(2 + cos(x))*chi(xi) + sin(2*x)"), 1), g));
        double worst = 0.0;
        for (int j = 0; j < n; ++j)
            for (int m = 0; m < n; ++m) {
                double k = signed_mode(m, n), x = g.x(j);
                worst = std::max(worst, std::abs(s(j, m) - ((2 + std::cos(x)) * k / std::sqrt(1 + k * k) + std::sin(2 * x))));
            }
        return worst;
    };
    auto product_error = [](int n) {
        auto g = Geometry::circle(n);
        Matrix a = op_circle(InteriorSymbol(parse("chi(xi) + 0.5*chi(xi)^2"), 1), g).matrix;
        Matrix b = op_circle(InteriorSymbol(parse("2 + cos(x) + (0,1)*sin(x)*chi(xi)"), 1), g).matrix;
        Matrix s = local_symbol(DiscretizedOperator{g, 0.0, a * b});
        double worst = 0.0;
        for (int j = 0; j < n; ++j)
            for (int m = 0; m < n; ++m) {
                int k = std::abs(signed_mode(m, n));
                if (k < n / 4 || k > 3 * n / 8) continue;
                double kk = signed_mode(m, n), x = g.x(j), c = kk / std::sqrt(1 + kk * kk);
                worst = std::max(worst, std::abs(s(j, m) - (c + 0.5 * c * c) * (2 + std::cos(x) + I * std::sin(x) * c)));
            }
        return worst;
    };
    double t64 = table_error(64), t128 = table_error(128);
    double p64 = product_error(64), p128 = product_error(128);
    out.metrics = {{"x_independent_error_N64", flat},
                   {"x_dependent_table_error", {{"N64", t64}, {"N128", t128}}},
                   {"product_band_error", {{"N64", p64}, {"N128", p128}, {"ratio", p64 / p128}}},
                   {"tolerance", 1e-12},
                   {"required_ratio", 1.6}};
    out.pass = flat <= 1e-12 && t64 <= 1e-12 && t128 <= 1e-12 && p64 / p128 >= 1.6;
    return out;
}

/// Finite sections of the stock elliptic vertex tuples are determinate at N in {128, 256}; the
/// conormal-degenerate tuples have s_min decreasing below 1e-3 at N = 256.
inline SuiteResult finiteness_suite(std::uint64_t) {
    SuiteResult out{"finiteness"};
    out.pass = true;
    for (const auto& inst : stock::elliptic_vertex()) {
        auto t = stock::vertex_tuple(inst);
        auto ell = check_elliptic(t);
        auto rep = finite_section(stock::vertex_sections(t, stock::section_step), {128, 256});
        bool ok = ell.elliptic && rep.determinate;
        out.metrics["elliptic"].push_back({{"name", inst.name}, {"elliptic", ell.elliptic}, {"fredholm", fredholm_json(rep)}, {"pass", ok}});
        out.pass = out.pass && ok;
    }
    for (const auto& inst : stock::degenerate_vertex()) {
        auto t = stock::vertex_tuple(inst);
        auto ell = check_elliptic(t);
        auto rep = finite_section(stock::vertex_sections(t, stock::section_step), {128, 256});
        double s0 = rep.sections.front().smallest, s1 = rep.sections.back().smallest;
        bool ok = !ell.elliptic && s1 < s0 && s1 < 1e-3;
        out.metrics["degenerate"].push_back({{"name", inst.name},
                                             {"elliptic", ell.elliptic},
                                             {"conormal_min", ell.conormal_min},
                                             {"s_min", {{"N128", s0}, {"N256", s1}}},
                                             {"fredholm", fredholm_json(rep)},
                                             {"pass", ok}});
        out.pass = out.pass && ok;
    }
    return out;
}

/// Toeplitz operator with symbol e^{ix}: index -1 at every N in {64, 128, 256}, equal to minus the
/// circle winding number.
inline SuiteResult toeplitz_suite(std::uint64_t) {
    SuiteResult out{"toeplitz"};
    auto rep = finite_section(stock::toeplitz_sections(1), {64, 128, 256});
    auto w = circle_winding([](double x) { return std::exp(I * x); });
    bool every = true;
    for (const auto& s : rep.sections) every = every && s.index == -1;
    out.metrics = {{"fredholm", fredholm_json(rep)}, {"winding", w.winding}, {"expected_index", -w.winding}};
    out.pass = rep.determinate && every && rep.index == -w.winding;
    return out;
}

/// Interval-mode cone instances with |winding| in {1, 1, 2}: finite-section index equals the winding
/// number of the conormal symbol (p increasing along the real line).
inline SuiteResult cone_index_suite(std::uint64_t) {
    SuiteResult out{"cone-index"};
    out.pass = true;
    out.metrics["orientation"] = WindingResult::orientation;
    for (const auto& inst : stock::index_vertex()) {
        auto t = stock::vertex_tuple(inst);
        auto rep = finite_section(stock::vertex_sections(t, stock::index_step), {256, 512});
        auto w = winding_oracle(conormal(t.P));
        bool ok = rep.determinate && rep.index == w.winding;
        out.metrics["instances"].push_back(
            {{"name", inst.name}, {"winding", w.winding}, {"winding_raw", w.raw}, {"fredholm", fredholm_json(rep)}, {"pass", ok}});
        out.pass = out.pass && ok;
    }
    return out;
}

/// Partition bound on 100 seeded random instances.
inline SuiteResult partition_bound_suite(std::uint64_t seed) {
    SuiteResult out{"partition-bound"};
    int violations = 0;
    double min_rel_slack = std::numeric_limits<double>::infinity(), worst_excess = 0.0;
    for (std::uint64_t k = 0; k < 100; ++k) {
        auto in = random_partition_instance(seed * 1000 + k);
        auto rep = partition_bound_check(in.geometry, in.f, in.A);
        if (rep.violated) ++violations;
        min_rel_slack = std::min(min_rel_slack, rep.slack / rep.rhs);
        worst_excess = std::max(worst_excess, rep.lhs - rep.rhs);
    }
    out.metrics = {{"instances", 100}, {"violations", violations}, {"min_relative_slack", min_rel_slack}, {"max_excess", worst_excess}};
    out.pass = violations == 0;
    return out;
}

/// Gluing a frozen-coefficient local family at eps in {0.5, 0.25, 0.125}.
inline SuiteResult gluing_suite(std::uint64_t) {
    SuiteResult out{"gluing"};
    auto g = Geometry::circle(128);
    auto F = frozen_circle_family(InteriorSymbol(parse("1 + 0.5*sin(x)*chi(xi)"), 1), g, 4);
    const std::vector<double> eps{0.5, 0.25, 0.125};
    auto cont = continuity_check(F, eps);
    out.metrics["centers"] = F.centers.size();
    for (const auto& lv : cont.levels)
        out.metrics["continuity"].push_back(
            {{"eps", lv.eps}, {"radius", lv.radii.front()}, {"max_overlap_norm", lv.max_overlap_norm}, {"covered", lv.covered}, {"pass", lv.pass}});
    if (!cont.pass) return out;
    auto rep = gluing_check(F, eps, dyadic_scales(0.6, 3));
    for (const auto& lv : rep.levels) out.metrics["reproduction"].push_back({{"eps", lv.eps}, {"worst", lv.worst}, {"bound", 2.0 * lv.eps}, {"pass", lv.pass}});
    out.metrics["cauchy_worst_ratio"] = rep.cauchy_worst_ratio;
    out.pass = rep.pass;
    return out;
}

/// Elliptic-with-parameter multiplier: s_min(v) at |v| in {8, 16, 32, 64} bounded below by 0.5 and non-decreasing.
inline SuiteResult large_parameter_suite(std::uint64_t) {
    SuiteResult out{"large-parameter"};
    InteriorSymbol a(parse(stock::parameter_elliptic), 1);
    auto g = Geometry::circle(64);
    auto F = sample_family({8.0, 16.0, 32.0, 64.0}, [&](double v) { return op_circle(a, g, v); });
    auto rep = large_parameter_scan(F, 0.5);
    out.metrics = {{"v", rep.params}, {"s_min", rep.smin}, {"bound", rep.bound}, {"bounded", rep.bounded}, {"non_decreasing", rep.non_decreasing}};
    out.pass = rep.pass;
    return out;
}

/// Infinitesimal operators on the stock circle, vertex and edge instances.
inline SuiteResult infinitesimal_suite(std::uint64_t) {
    SuiteResult out{"infinitesimal"};
    out.pass = true;
    auto record = [&](const std::string& name, const InfinitesimalOperator& io, bool require_convergence) {
        double comm = stratum_commutator(io);
        double nf = operator_norm(io.frozen), na = operator_norm(io.original);
        bool ok = comm <= 1e-10 && nf <= na * (1 + 1e-12) && (!require_convergence || io.converged);
        out.metrics["instances"].push_back({{"name", name},
                                            {"scales", io.scales},
                                            {"diagnostics", io.right},
                                            {"left_diagnostics", io.left},
                                            {"monotone", io.monotone},
                                            {"final", io.final_value()},
                                            {"convergence_required", require_convergence},
                                            {"commutator", comm},
                                            {"frozen_norm", nf},
                                            {"norm", na},
                                            {"pass", ok}});
        out.pass = out.pass && ok;
    };
    {
        auto g = Geometry::circle(256);
        CutoffFamily ladder(g, {stock::circle_point, 0.0}, dyadic_scales(1.2, 5));
        record("circle", infinitesimal(InteriorSymbol(parse(stock::circle_infinitesimal), 1), g, stock::circle_point, ladder), true);
    }
    {
        auto g = Geometry::cone({BaseKind::point, 1, 10.0, 128, BoundaryMode::interval});
        CutoffFamily ladder(g, {0.0, 0.0}, dyadic_scales(0.5, 8));
        record("vertex", infinitesimal(ConeSymbolFamily::parse(stock::vertex_infinitesimal), g, 0.0, ladder), true);
    }
    {
        auto g = Geometry::edge(16, {BaseKind::point, 1, 4.0, 32});
        CutoffFamily ladder(g, {0.5, 0.0}, {2.0});
        record("edge", infinitesimal(ConeSymbolFamily::parse(stock::edge_infinitesimal), g, 0.5, ladder), false);
    }
    return out;
}

/// Negligible-family classification: a smoothing rank-one family e^{-|v|} a b^* (random a, b) is
/// accepted at N in {1, 2, 4}, the identity family is rejected, and verdicts agree across seeds.
inline SuiteResult negligible_suite(std::uint64_t seed) {
    SuiteResult out{"negligible"};
    auto g = Geometry::circle(16);
    auto params = dyadic_ladder(6);
    auto ident = sample_family(params, [&](double v) { return DiscretizedOperator{g, v, Matrix::Identity(16, 16)}; });
    out.pass = true;
    std::vector<std::vector<bool>> verdicts;
    for (std::uint64_t s : {seed, seed + 1, seed + 2}) {
        std::mt19937_64 rng(s);
        std::normal_distribution<double> n;
        Vector a(16), b(16);
        for (int i = 0; i < 16; ++i) a(i) = {n(rng), n(rng)}, b(i) = {n(rng), n(rng)};
        a.normalize();
        b.normalize();
        auto smooth = sample_family(params, [&](double v) { return DiscretizedOperator{g, v, std::exp(-std::abs(v)) * (a * b.adjoint())}; });
        std::vector<bool> row;
        for (int N : {1, 2, 4}) {
            auto sv = negligible_test(smooth, N), iv = negligible_test(ident, N);
            row.push_back(sv.negligible);
            row.push_back(iv.negligible);
            if (s == seed)
                out.metrics["orders"].push_back({{"N", N},
                                                 {"smoothing_accepted", sv.negligible},
                                                 {"smoothing_constant", sv.fitted_constant},
                                                 {"identity_accepted", iv.negligible},
                                                 {"identity_constant", iv.fitted_constant}});
            out.pass = out.pass && sv.negligible && !iv.negligible;
        }
        verdicts.push_back(row);
    }
    bool stable = std::all_of(verdicts.begin(), verdicts.end(), [&](const auto& r) { return r == verdicts.front(); });
    out.metrics["seeds_compared"] = 3;
    out.metrics["stable_under_seed_change"] = stable;
    out.pass = out.pass && stable;
    return out;
}

/// Symbol-level invariants: homogeneity of chi, compatibility of extracted stock tuples, ellipticity verdicts.
inline SuiteResult symbols_suite(std::uint64_t) {
    SuiteResult out{"symbols"};
    auto h = check_homogeneity(InteriorSymbol(parse("chi(xi)"), 1, 1e3));
    out.metrics["chi_homogeneity_violation"] = h.max_violation;
    out.pass = h.max_violation <= 1e-6;
    for (const auto& inst : stock::edge_symbols()) {
        if (inst.base != BaseKind::point) continue;
        auto rep = compat_check(extract_tuple(inst.family(), TupleKind::edge));
        out.metrics["edge_compat"].push_back({{"name", inst.name}, {"max_mismatch", rep.max_mismatch}, {"pass", rep.pass}});
        out.pass = out.pass && rep.pass;
    }
    for (const auto& inst : stock::elliptic_vertex()) {
        auto rep = check_elliptic(stock::vertex_tuple(inst));
        out.metrics["vertex_elliptic"].push_back({{"name", inst.name}, {"conormal_min", rep.conormal_min}, {"elliptic", rep.elliptic}});
        out.pass = out.pass && rep.elliptic && rep.compatible;
    }
    return out;
}

inline const std::vector<Suite>& suites() {
    static const std::vector<Suite> all{
        {"symbols", "homogeneity, compatibility and ellipticity of the stock symbols", symbols_suite},
        {"twisted-homogeneity", "sigma(lambda xi, lambda v) = kappa sigma kappa^-1 on stock edge symbols", twisted_homogeneity_suite},
        {"composition", "composition remainder decay", composition_suite},
        {"roundtrip", "quantize/extract round trip", roundtrip_suite},
        {"finiteness", "finite sections of elliptic and degenerate vertex tuples", finiteness_suite},
        {"toeplitz", "Toeplitz index against the circle winding number", toeplitz_suite},
        {"cone-index", "cone index against the conormal winding number", cone_index_suite},
        {"partition-bound", "partition-of-unity norm bound on random instances", partition_bound_suite},
        {"gluing", "gluing local families by partitions of unity", gluing_suite},
        {"large-parameter", "invertibility for large parameter", large_parameter_suite},
        {"infinitesimal", "infinitesimal-operator diagnostics, commutation and norm", infinitesimal_suite},
        {"negligible", "classification of negligible families", negligible_suite},
    };
    return all;
}

inline const Suite& find_suite(const std::string& name) {
    for (const auto& s : suites())
        if (s.name == name) return s;
    throw DomainError("unknown suite '" + name + "'");
}

/// Runs one suite, timing it and converting library errors into a failed result.
inline SuiteResult run_suite(const Suite& s, std::uint64_t seed) {
    auto t0 = std::chrono::steady_clock::now();
    SuiteResult r;
    try {
        r = s.run(seed);
    } catch (const std::exception& e) {
        r = SuiteResult{s.name};
        r.metrics["error"] = e.what();
    }
    r.name = s.name;
    r.seconds = detail::elapsed(t0);
    return r;
}

}  // namespace psdo::verify
