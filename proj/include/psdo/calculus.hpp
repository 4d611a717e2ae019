#pragma once

#include "psdo/quantize.hpp"

#include <optional>

namespace psdo {

// ---- composition ----

struct CompositionResult {
    int order = 0;
    Expr H;
    std::vector<double> xis;
    std::vector<double> remainders;
    double slope = 0.0;  ///< log-log slope of the remainders; NaN when the expansion is exact
    bool exact = false;  ///< all remainders at round-off level
};

/// Truncated expansion H = sum_{g < N} ((-i)^g / g!) d_xi^g H1 * d_x^g H2 (one edge dimension).
inline Expr composition_expansion(const Expr& H1, const Expr& H2, int N) {
    if (N < 1 || N > 6) throw DomainError("composition order must be in 1..6");
    Expr H = constant(0.0);
    Complex factor = 1.0;
    for (int g = 0; g < N; ++g) {
        if (g > 0) factor *= -I / double(g);
        H = H + constant(factor) * (diff(H1, Var::xi, g) * diff(H2, Var::x, g));
    }
    return H;
}

/// Unit vector whose Fourier coefficients are a Gaussian of the given width around mode k0.
inline Vector frequency_probe(const Geometry& g, double k0, double width) {
    const int n = g.n_x();
    Vector c(n);
    for (int m = 0; m < n; ++m) {
        double d = signed_mode(m, n) - k0;
        c(m) = std::exp(-d * d / (2 * width * width));
    }
    Vector u = dft(c, g, Direction::inverse, Axis::x);
    return u / u.norm();
}

/// Composition remainders ||(op(H1) op(H2) - op(H)) u_k|| on probes localized at xi_k.
inline CompositionResult compose_symbols(const Expr& H1, const Expr& H2, int N, int n_x = 256,
                                         std::vector<double> xis = {8, 16, 32, 64}, double width = 2.0) {
    CompositionResult res;
    res.order = N;
    res.H = composition_expansion(H1, H2, N);
    res.xis = xis;
    auto g = Geometry::circle(n_x);
    Matrix a1 = op_circle(InteriorSymbol(H1, 1), g).matrix;
    Matrix a2 = op_circle(InteriorSymbol(H2, 1), g).matrix;
    Matrix ah = op_circle(InteriorSymbol(res.H, 1), g).matrix;
    Matrix diffop = a1 * a2 - ah;
    double scale = 0.0;
    for (double k : xis) {
        Vector u = frequency_probe(g, k, width);
        res.remainders.push_back((diffop * u).norm());
        scale = std::max(scale, (a1 * (a2 * u)).norm());
    }
    double rmax = *std::max_element(res.remainders.begin(), res.remainders.end());
    res.exact = rmax <= 1e-13 * std::max(1.0, scale);
    res.slope = res.exact ? std::numeric_limits<double>::quiet_NaN() : loglog_slope(xis, res.remainders);
    return res;
}

// ---- symbols of translation-invariant operators ----

class NotTranslationInvariant : public Error {
public:
    explicit NotTranslationInvariant(double off) : Error("operator is not translation invariant: off-diagonal block norm " + std::to_string(off)), off_(off) {}
    double off_diagonal() const { return off_; }

private:
    double off_;
};

struct SymbolBlocks {
    Axis axis = Axis::x;
    std::vector<int> modes;      ///< signed mode of each block
    std::vector<Matrix> blocks;  ///< B(xi_k)
    double max_off_diagonal = 0.0;
    double sup_block_norm = 0.0;
    double operator_norm = 0.0;
};

/// Diagonalizes A by the DFT along its translation axis (x for circle/edge, t for a periodic cone).
inline SymbolBlocks extract_symbol(const DiscretizedOperator& A, std::optional<Axis> axis = std::nullopt, double tol = 1e-8) {
    const Geometry& g = A.geometry;
    Axis ax = axis.value_or(default_axis(g));
    if (ax == Axis::t && g.kind() != Geometry::Kind::cone) throw DomainError("t-axis symbols are extracted on cone geometries");
    Matrix u = axis_dft_operator(g, ax);
    Matrix b = u * A.matrix * u.adjoint();
    const int n = ax == Axis::x ? g.n_x() : g.n_t();
    const int f = g.dim() / n;
    SymbolBlocks out;
    out.axis = ax;
    out.operator_norm = operator_norm(A.matrix);
    for (int m = 0; m < n; ++m)
        for (int l = 0; l < n; ++l)
            if (m != l) out.max_off_diagonal = std::max(out.max_off_diagonal, b.block(m * f, l * f, f, f).norm());
    if (out.max_off_diagonal > tol * std::max(out.operator_norm, 1e-300)) throw NotTranslationInvariant(out.max_off_diagonal);
    for (int m = 0; m < n; ++m) {
        out.modes.push_back(signed_mode(m, n));
        out.blocks.push_back(b.block(m * f, m * f, f, f));
        out.sup_block_norm = std::max(out.sup_block_norm, psdo::operator_norm(out.blocks.back()));
    }
    return out;
}

/// Exact Kohn-Nirenberg symbol table of a circle operator: entry (j, m) is a(x_j, k_m) (q = 1).
inline Matrix local_symbol(const DiscretizedOperator& A) {
    const Geometry& g = A.geometry;
    if (g.kind() != Geometry::Kind::circle || g.q() != 1) throw DomainError("local_symbol needs a scalar circle operator");
    const int n = g.n_x();
    Matrix e(n, n);
    for (int l = 0; l < n; ++l)
        for (int m = 0; m < n; ++m) e(l, m) = std::exp(I * (signed_mode(m, n) * g.x(l)));
    Matrix s = A.matrix * e;
    for (int j = 0; j < n; ++j)
        for (int m = 0; m < n; ++m) s(j, m) *= std::exp(-I * (signed_mode(m, n) * g.x(j)));
    return s;
}

// ---- infinitesimal operators ----

/// Frozen representative i_z(A) with the operator-level convergence diagnostics
/// d_s = ||(A - i_z(A)) phi_s|| (right placement) and ||phi_s (A - i_z(A))|| (left placement).
struct InfinitesimalOperator {
    InfinitesimalOperator(Geometry g, Center c, Matrix a, Matrix f)
        : geometry(std::move(g)), z(c), original(std::move(a)), frozen(std::move(f)) {}

    Geometry geometry;
    Center z;
    Matrix original;
    Matrix frozen;
    std::vector<double> scales;
    std::vector<double> right;
    std::vector<double> left;
    double tolerance = 1e-3;
    bool monotone = false;
    bool converged = false;
    double final_value() const { return right.empty() ? 0.0 : right.back(); }
};

inline void fill_diagnostics(InfinitesimalOperator& io, const CutoffFamily& ladder, double tol) {
    io.scales = ladder.scales();
    io.tolerance = tol;
    Matrix d = io.original - io.frozen;
    for (const auto& phi : ladder.bumps()) {
        Vector ph = GridFunction::expand(io.geometry, phi);
        io.right.push_back(operator_norm(d * ph.asDiagonal()));
        io.left.push_back(operator_norm(ph.asDiagonal() * d));
    }
    io.monotone = true;
    for (std::size_t i = 1; i < io.right.size(); ++i)
        if (io.right[i] > 1.1 * io.right[i - 1] + 1e-14) io.monotone = false;
    io.converged = io.monotone && io.final_value() <= tol;
}

/// Interior point of a circle: a(x, xi, v) -> a(z, xi, v).
inline InfinitesimalOperator infinitesimal(const InteriorSymbol& a, const Geometry& g, double z, const CutoffFamily& ladder,
                                           double v = 0.0, double tol = 1e-3) {
    if (!a.charts.empty()) throw DomainError("freeze the symbol before applying coordinate changes");
    InteriorSymbol frozen(substitute(a.a, Var::x, constant(z)), a.q, a.R0);
    InfinitesimalOperator io{g, {z, 0.0}, op_circle(a, g, v).matrix, op_circle(frozen, g, v).matrix};
    fill_diagnostics(io, ladder, tol);
    return io;
}

/// Cone vertex (cone geometry) or edge point z (edge geometry): P(x, r, ...) -> P(z, 0, ...).
inline InfinitesimalOperator infinitesimal(const ConeSymbolFamily& P, const Geometry& g, double z, const CutoffFamily& ladder,
                                           double v = 0.0, double tol = 1e-3) {
    InfinitesimalOperator io{g, {z, 0.0}, Matrix{}, Matrix{}};
    if (g.kind() == Geometry::Kind::cone) {
        io.original = op_mellin(P, g, v).matrix;
        io.frozen = op_mellin(P.frozen(std::nullopt, 0.0, std::nullopt, std::nullopt), g, v).matrix;
    } else if (g.kind() == Geometry::Kind::edge) {
        io.original = op_edge(P, g, v).matrix;
        io.frozen = op_edge(P.frozen(z, 0.0, std::nullopt, std::nullopt), g, v).matrix;
    } else {
        throw DomainError("cone families live on cone or edge geometries");
    }
    fill_diagnostics(io, ladder, tol);
    return io;
}

/// Commutator of the frozen operator with the stratum group: translations by h_x along an
/// edge or circle, one-step dilations at a cone vertex. On an interval cone grid the dilation
/// is a shift of the finite section, so the check compares the section with its shifted copy.
/// Relative norm.
inline double stratum_commutator(const InfinitesimalOperator& io) {
    const Geometry& g = io.geometry;
    double scale = std::max(operator_norm(io.frozen), 1e-300);
    if (!g.has_x_axis() && g.mode() == BoundaryMode::interval) {
        const int f = g.n_omega() * g.q(), m = g.dim() - f;
        return operator_norm(io.frozen.block(f, f, m, m) - io.frozen.block(0, 0, m, m)) / scale;
    }
    Matrix t = g.has_x_axis() ? translation(g.h_x(), g) : kappa_steps(1, g);
    return operator_norm(io.frozen * t - t * io.frozen) / scale;
}

struct ConsistencyReport {
    bool frozen_identical = false;
    double final_a = 0.0, final_b = 0.0;
    bool pass = false;
};

/// Two cutoff ladders induce the same frozen operator and diagnostics with a common limit.
template <class Spec>
ConsistencyReport consistency_check(const Spec& spec, const Geometry& g, double z, const CutoffFamily& a, const CutoffFamily& b,
                                    double v = 0.0, double tol = 1e-3) {
    auto ia = infinitesimal(spec, g, z, a, v, tol);
    auto ib = infinitesimal(spec, g, z, b, v, tol);
    ConsistencyReport rep;
    rep.frozen_identical = (ia.frozen - ib.frozen).norm() == 0.0;
    rep.final_a = ia.final_value();
    rep.final_b = ib.final_value();
    rep.pass = rep.frozen_identical && std::max(rep.final_a, rep.final_b) <= 2 * tol;
    return rep;
}

/// Adjoint in the weighted inner product (the flat frame makes it the conjugate transpose).
inline DiscretizedOperator adjoint(const DiscretizedOperator& A) { return {A.geometry, A.v, A.matrix.adjoint()}; }

}  // namespace psdo
