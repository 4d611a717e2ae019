#pragma once

#include "psdo/localization.hpp"

namespace psdo::stock {

/// A named symbol family in DSL form.
struct Instance {
    std::string name;
    std::string source;
    BaseKind base = BaseKind::point;
    int q = 1;
    int n_omega = 1;

    ConeSymbolFamily family() const { return ConeSymbolFamily::parse(source, q, base); }
};

/// Conormal symbol g(p) at the vertex blended into 1 away from it: (1 - theta) g + theta,
/// theta = r^2 / (1 + r^2).
inline std::string blended(const std::string& g) { return "(1 - r^2/(1+r^2))*(" + g + ") + r^2/(1+r^2)"; }

inline const std::string cayley = "(p-(0,1))/(p+(0,1))";

/// Edge symbols whose dependence on (w, eta) is invariant under the dilation orbit up to terms
/// that vanish at both ends of the log axis, so twisted homogeneity holds exactly on a periodic grid.
inline std::vector<Instance> edge_symbols() {
    const std::string bump = "exp(-(log(w^2+eta^2))^2)";
    return {
        {"cayley-bump", cayley + "*(1 + 0.5*" + bump + "*chi(eta))"},
        {"direction", "1 + 0.5*eta/sqrt(w^2+eta^2) + 0.2*chi(p)"},
        {"x-dependent", "2 + cos(x)*" + bump + " + chi(p)"},
        {"matrix", "[[1, " + bump + "], [0, 2 + chi(p)]]", BaseKind::point, 2},
        {"circle-base", "1 + 0.5*chi(xi)*" + bump + " + 0.2*(p-(0,1)*xi)/(p+(0,1)*(1+xi^2))", BaseKind::circle, 1, 8},
    };
}

/// Elliptic vertex families (conormal symbol invertible on the real line).
inline std::vector<Instance> elliptic_vertex() {
    return {
        {"gaussian-perturbation", "1 + 0.5*r/(1+r)*exp(-p^2/4)"},
        {"cayley", blended(cayley)},
        {"cayley-conjugate", blended("(p+(0,1))/(p-(0,1))")},
        {"same-side-poles", blended("(p-(0,1))/(p-(0,2))")},
        {"chi-ramp", blended("1 + 0.5*chi(p)")},
    };
}

/// Vertex families for the index comparison (|winding| = 1, 1, 2).
inline std::vector<Instance> index_vertex() {
    return {
        {"cayley", blended(cayley)},
        {"cayley-conjugate", blended("(p+(0,1))/(p-(0,1))")},
        {"cayley-squared", blended("(" + cayley + ")^2")},
    };
}

/// Families whose conormal symbol vanishes at p = 0 (condition (ii) fails).
inline std::vector<Instance> degenerate_vertex() {
    return {
        {"cubic-zero", blended("(p/(p+(0,1)))^3")},
        {"cubic-zero-wide", blended("(p/(p+(0,2)))^3")},
        {"quartic-zero", blended("p^4/(p^2+1)^2")},
    };
}

/// Cone grid step used by the finite-section ladders (refinement grows the interval).
inline constexpr double section_step = 0.25;
/// Finer step for the index comparison, where winding 2 needs a smaller Nyquist jump.
inline constexpr double index_step = 0.25;

/// Vertex tuple read off a stock family.
inline SymbolTuple vertex_tuple(const Instance& inst) { return extract_tuple(inst.family(), TupleKind::vertex); }

/// Finite-section builder for a vertex tuple on interval cone grids with fixed step.
inline std::function<SectionInput(int)> vertex_sections(const SymbolTuple& t, double h) {
    return [t, h](int n) {
        Geometry g = interval_cone(n, h);
        return SectionInput{quantize_tuple(t, g).op.matrix, end_layer(g)};
    };
}

/// Finite-section builder for the projector-built Toeplitz operator with symbol e^{ikx}.
inline std::function<SectionInput(int)> toeplitz_sections(int winding) {
    return [winding](int n) {
        Geometry g = Geometry::circle(n);
        return SectionInput{toeplitz_operator(g, winding), frequency_layer(g)};
    };
}

/// Interior symbol used for the circle infinitesimal-operator contract.
inline const char* circle_infinitesimal = "1 + 0.5*chi(xi) + 0.5*sin((x-1)/2)^2";
inline constexpr double circle_point = 1.0;

/// Vertex family for the infinitesimal-operator contract (r-dependence r/(1+r)).
inline const char* vertex_infinitesimal = "1 + 0.5*r/(1+r)*exp(-p^2/4)";

/// Edge family for the infinitesimal-operator commutation and norm checks.
inline const char* edge_infinitesimal = "1 + 0.3*cos(x)*r/(1+r) + 0.2*chi(eta)";

/// Elliptic-with-parameter multiplier on the circle.
inline const char* parameter_elliptic = "(xi^2 + v^2 + 1)/(xi^2 + v^2 + 2)";

}  // namespace psdo::stock
