#pragma once

#include "psdo/container.hpp"
#include "psdo/fredholm.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <set>

namespace psdo {

/// The run configuration is malformed (syntax, unknown keys, wrong types or out-of-range values).
class ConfigError : public Error {
public:
    using Error::Error;
};

struct GeometryConfig {
    Geometry::Kind kind = Geometry::Kind::circle;
    int n_x = 64;
    int n_t = 64;
    std::optional<double> half_length;
    std::optional<double> step;
    BoundaryMode mode = BoundaryMode::periodic;
    BaseKind base = BaseKind::point;
    int n_omega = 1;
    int q = 1;

    /// Cone grid step: explicit, or 2 T / N_t.
    double cone_step() const { return step ? *step : 2.0 * half_length.value_or(6.0) / n_t; }

    Geometry build() const { return build(n_t); }

    /// Geometry with the cone axis resized to n nodes at the configured step.
    Geometry build(int n) const {
        ConeParams cp{base, base == BaseKind::circle ? n_omega : 1, 0.5 * n * cone_step(), n, mode};
        switch (kind) {
            case Geometry::Kind::circle: return Geometry::circle(n_x, q);
            case Geometry::Kind::cone: return Geometry::cone(cp, q);
            case Geometry::Kind::edge: return Geometry::edge(n_x, cp, q);
        }
        throw ConfigError("unknown geometry kind");
    }
};

struct RunConfig {
    std::string name;
    GeometryConfig geometry;
    std::optional<std::string> family;    ///< cone/edge symbol family P
    std::optional<TupleKind> tuple;       ///< how the interior symbol is read off P
    std::optional<std::string> interior;  ///< explicit interior symbol
    std::optional<std::string> toeplitz;  ///< circle: symbol f(x) of the Toeplitz operator
    double rank_tolerance = 1e-6;
    double gap = 100.0;
    double ellipticity = 1e-6;
    double compat = 1e-8;
    double v = 0.0;
    std::vector<double> ladder;
    double p_max = 64.0;
    int p_points = 512;
    std::vector<int> sizes;
    std::optional<std::string> out_dir;
    nlohmann::json source;  ///< the parsed document (keys sorted), used for hashing

    TupleKind tuple_kind() const {
        if (tuple) return *tuple;
        return geometry.kind == Geometry::Kind::edge ? TupleKind::edge : TupleKind::vertex;
    }
};

namespace detail {

using json = nlohmann::json;

inline void only_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ConfigError(where + " must be an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : obj.items())
        if (!ok.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

inline std::string get_string(const json& obj, const char* key, const std::string& where) {
    const auto& v = obj.at(key);
    if (!v.is_string()) throw ConfigError(where + "." + key + " must be a string");
    return v.get<std::string>();
}

inline double get_positive(const json& obj, const char* key, const std::string& where) {
    const auto& v = obj.at(key);
    if (!v.is_number() || !(v.get<double>() > 0.0)) throw ConfigError(where + "." + key + " must be a positive number");
    return v.get<double>();
}

inline int get_int(const json& obj, const char* key, const std::string& where, int lo) {
    const auto& v = obj.at(key);
    if (!v.is_number_integer() || v.get<long long>() < lo || v.get<long long>() > 1 << 16)
        throw ConfigError(where + "." + key + " must be an integer >= " + std::to_string(lo));
    return v.get<int>();
}

/// Grid sizes are even and at least 8.
inline int get_grid(const json& obj, const char* key, const std::string& where) {
    int n = get_int(obj, key, where, 8);
    if (n % 2 != 0) throw ConfigError(where + "." + key + " must be even");
    return n;
}

template <class E>
E get_enum(const json& obj, const char* key, const std::string& where, std::initializer_list<std::pair<const char*, E>> values) {
    std::string s = get_string(obj, key, where);
    for (const auto& [name, e] : values)
        if (s == name) return e;
    throw ConfigError(where + "." + key + " has invalid value '" + s + "'");
}

}  // namespace detail

/// Validates and reads a configuration document (layout published in schema/config.schema.json).
inline RunConfig parse_config(const nlohmann::json& doc) {
    using detail::get_int;
    using detail::get_positive;
    using detail::get_string;
    detail::only_keys(doc, "config", {"name", "geometry", "symbols", "tolerances", "parameter", "scan", "output"});
    RunConfig c;
    c.source = doc;
    if (doc.contains("name")) c.name = get_string(doc, "name", "config");
    if (!doc.contains("geometry")) throw ConfigError("config.geometry is required");

    const auto& g = doc.at("geometry");
    detail::only_keys(g, "geometry", {"kind", "n_x", "n_t", "half_length", "step", "mode", "base", "n_omega", "q"});
    if (!g.contains("kind")) throw ConfigError("geometry.kind is required");
    auto& G = c.geometry;
    G.kind = detail::get_enum<Geometry::Kind>(g, "kind", "geometry",
                                              {{"circle", Geometry::Kind::circle}, {"cone", Geometry::Kind::cone}, {"edge", Geometry::Kind::edge}});
    if (g.contains("n_x")) G.n_x = detail::get_grid(g, "n_x", "geometry");
    if (g.contains("n_t")) G.n_t = detail::get_grid(g, "n_t", "geometry");
    if (g.contains("half_length")) G.half_length = get_positive(g, "half_length", "geometry");
    if (g.contains("step")) G.step = get_positive(g, "step", "geometry");
    if (G.half_length && G.step) throw ConfigError("geometry.half_length and geometry.step are mutually exclusive");
    if (g.contains("mode"))
        G.mode = detail::get_enum<BoundaryMode>(g, "mode", "geometry", {{"periodic", BoundaryMode::periodic}, {"interval", BoundaryMode::interval}});
    if (g.contains("base")) G.base = detail::get_enum<BaseKind>(g, "base", "geometry", {{"point", BaseKind::point}, {"circle", BaseKind::circle}});
    if (g.contains("n_omega")) G.n_omega = detail::get_grid(g, "n_omega", "geometry");
    if (g.contains("q")) G.q = get_int(g, "q", "geometry", 1);
    if (G.kind != Geometry::Kind::circle && !G.half_length && !G.step) G.half_length = 6.0;

    if (doc.contains("symbols")) {
        const auto& s = doc.at("symbols");
        detail::only_keys(s, "symbols", {"family", "tuple", "interior", "toeplitz"});
        if (s.contains("family")) c.family = get_string(s, "family", "symbols");
        if (s.contains("tuple")) c.tuple = detail::get_enum<TupleKind>(s, "tuple", "symbols", {{"vertex", TupleKind::vertex}, {"edge", TupleKind::edge}});
        if (s.contains("interior")) c.interior = get_string(s, "interior", "symbols");
        if (s.contains("toeplitz")) c.toeplitz = get_string(s, "toeplitz", "symbols");
    }
    const bool cone_like = G.kind != Geometry::Kind::circle;
    if (cone_like && c.toeplitz) throw ConfigError("symbols.toeplitz needs a circle geometry");
    if (!cone_like && c.family) throw ConfigError("symbols.family needs a cone or edge geometry");
    if (c.interior && c.toeplitz) throw ConfigError("symbols.interior and symbols.toeplitz are mutually exclusive");

    if (doc.contains("tolerances")) {
        const auto& t = doc.at("tolerances");
        detail::only_keys(t, "tolerances", {"rank", "gap", "ellipticity", "compat"});
        if (t.contains("rank")) c.rank_tolerance = get_positive(t, "rank", "tolerances");
        if (t.contains("gap")) c.gap = get_positive(t, "gap", "tolerances");
        if (t.contains("ellipticity")) c.ellipticity = get_positive(t, "ellipticity", "tolerances");
        if (t.contains("compat")) c.compat = get_positive(t, "compat", "tolerances");
    }
    if (doc.contains("parameter")) {
        const auto& p = doc.at("parameter");
        detail::only_keys(p, "parameter", {"v", "ladder"});
        if (p.contains("v")) {
            if (!p.at("v").is_number()) throw ConfigError("parameter.v must be a number");
            c.v = p.at("v").get<double>();
        }
        if (p.contains("ladder")) {
            if (!p.at("ladder").is_array()) throw ConfigError("parameter.ladder must be an array of numbers");
            for (const auto& x : p.at("ladder")) {
                if (!x.is_number()) throw ConfigError("parameter.ladder must be an array of numbers");
                c.ladder.push_back(x.get<double>());
            }
        }
    }
    if (doc.contains("scan")) {
        const auto& s = doc.at("scan");
        detail::only_keys(s, "scan", {"p_max", "p_points", "sizes"});
        if (s.contains("p_max")) c.p_max = get_positive(s, "p_max", "scan");
        if (s.contains("p_points")) c.p_points = get_int(s, "p_points", "scan", 16);
        if (s.contains("sizes")) {
            if (!s.at("sizes").is_array()) throw ConfigError("scan.sizes must be an array of integers");
            for (const auto& x : s.at("sizes")) {
                if (!x.is_number_integer() || x.get<long long>() < 8 || x.get<long long>() > 4096 || x.get<long long>() % 2 != 0)
                    throw ConfigError("scan.sizes entries must be even integers in [8, 4096]");
                c.sizes.push_back(x.get<int>());
            }
            if (c.sizes.size() < 2 || !std::is_sorted(c.sizes.begin(), c.sizes.end()) ||
                std::adjacent_find(c.sizes.begin(), c.sizes.end()) != c.sizes.end())
                throw ConfigError("scan.sizes must list at least two strictly increasing sizes");
        }
    }
    if (doc.contains("output")) {
        const auto& o = doc.at("output");
        detail::only_keys(o, "output", {"dir"});
        if (o.contains("dir")) c.out_dir = get_string(o, "dir", "output");
    }
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const IoError& e) {
        throw ConfigError(std::string("cannot read config: ") + e.what());
    }
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(doc);
}

}  // namespace psdo
