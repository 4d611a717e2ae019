#pragma once

#include "psdo/symbols.hpp"

#include <random>

namespace psdo {

/// Dense operator on a geometry (flat frame), for parameter value v.
struct DiscretizedOperator {
    Geometry geometry;
    double v = 0.0;
    Matrix matrix;

    double norm() const { return operator_norm(matrix); }
};

/// Parameter-indexed family A(v_i).
struct OperatorFamily {
    std::vector<double> params;
    std::vector<DiscretizedOperator> members;

    double norm() const {
        double n = 0.0;
        for (const auto& m : members) n = std::max(n, m.norm());
        return n;
    }
};

/// {0, +-1, +-2, ..., +-2^K} in increasing order.
inline std::vector<double> dyadic_ladder(int K = 6) {
    std::vector<double> out;
    for (int k = K; k >= 0; --k) out.push_back(-std::ldexp(1.0, k));
    out.push_back(0.0);
    for (int k = 0; k <= K; ++k) out.push_back(std::ldexp(1.0, k));
    return out;
}

template <class Build>
OperatorFamily sample_family(const std::vector<double>& params, Build&& build) {
    OperatorFamily f;
    f.params = params;
    for (double v : params) f.members.push_back(build(v));
    for (const auto& m : f.members)
        if (!m.geometry.same_layout(f.members.front().geometry)) throw DomainError("family members live on different geometries");
    return f;
}

/// Kohn-Nirenberg assembly on an n-point periodic axis with fiber blocks of size f:
/// A[(j,a),(l,b)] = (1/n) sum_m e^{2 pi i m (j - l)/n} S(j, m)[a, b], m FFT-ordered.
/// S(j, m) is called once per (j, m), or once per m when `row_dependent` is false.
inline Matrix kn_assemble(int n, int f, const std::function<Matrix(int, int)>& symbol, bool row_dependent) {
    Matrix out(n * f, n * f);
    std::vector<Matrix> shared;
    if (!row_dependent) {
        shared.resize(n);
        parallel_for(n, [&](int m) { shared[m] = symbol(0, m); });
    }
    parallel_for(n, [&](int j) {
        Eigen::FFT<double> fft;
        std::vector<Matrix> local;
        if (row_dependent) {
            local.resize(n);
            for (int m = 0; m < n; ++m) local[m] = symbol(j, m);
        }
        const std::vector<Matrix>& s = row_dependent ? local : shared;
        std::vector<Complex> d(n), row(n);
        for (int a = 0; a < f; ++a)
            for (int b = 0; b < f; ++b) {
                for (int m = 0; m < n; ++m) d[m] = s[m](a, b) * std::polar(1.0 / n, 2.0 * pi * double((long(m) * j) % n) / n);
                fft.fwd(row, d);
                for (int l = 0; l < n; ++l) out(j * f + a, l * f + b) = row[l];
            }
    });
    return out;
}

/// Kohn-Nirenberg quantization on the circle: (Au)(x_j) = sum_k e^{i k x_j} a(x_j, k, v) u_hat(k).
inline DiscretizedOperator op_circle(const InteriorSymbol& a, const Geometry& g, double v = 0.0) {
    if (g.kind() != Geometry::Kind::circle) throw DomainError("op_circle needs a circle geometry");
    if (a.q != g.q()) throw ShapeError("symbol fiber dimension differs from geometry");
    const int n = g.n_x();
    Matrix m = kn_assemble(
        n, g.q(), [&](int j, int mi) { return a(g.x(j), 0.0, double(signed_mode(mi, n)), v); }, a.depends_on_x());
    return {g, v, std::move(m)};
}

/// Evaluation context of the Mellin quantization: frozen edge point x0 and edge covariable xi0,
/// and whether the r slot of P is frozen to 0 (edge symbol) instead of following r = e^{-t}.
struct MellinContext {
    double x0 = 0.0;
    double xi0 = 0.0;
    bool freeze_r = false;
    double support_tolerance = 1e-4;
};

class SupportPolicyError : public DomainError {
public:
    using DomainError::DomainError;
};

namespace detail {

inline Matrix mellin_periodic(const ConeSymbolFamily& P, const Geometry& g, double v, const MellinContext& ctx) {
    const int n = g.n_t(), nw = g.n_omega();
    const int f = nw * g.q();
    return kn_assemble(
        n, f,
        [&](int j, int m) {
            ConeArgs a;
            double r = g.r(j);
            a.x = ctx.x0;
            a.r = ctx.freeze_r ? 0.0 : r;
            a.w = v * r;
            a.eta = ctx.xi0 * r;
            a.p = g.p(signed_mode(m, n));
            return P.fiber(a, nw);
        },
        true);
}

inline double t_variation(const ConeSymbolFamily& P, const Geometry& g, double v, const MellinContext& ctx, double t0,
                          double t1) {
    double worst = 0.0;
    for (double p : {-3.0, -1.0, 0.0, 0.5, 2.0}) {
        auto at = [&](double t) {
            ConeArgs a;
            double r = std::exp(-t);
            a.x = ctx.x0;
            a.r = ctx.freeze_r ? 0.0 : r;
            a.w = v * r;
            a.eta = ctx.xi0 * r;
            a.p = p;
            return P.fiber(a, g.n_omega());
        };
        Matrix m0 = at(t0);
        worst = std::max(worst, (at(t1) - m0).norm() / std::max(1.0, m0.norm()));
    }
    return worst;
}

}  // namespace detail

/// Mellin quantization on the weight line Im p = -(n+1)/2: in t = -log r and the flat frame this is
/// Kohn-Nirenberg with F(t, p) = P(x0, e^{-t}, v e^{-t}, xi0 e^{-t}, p), p_k = pi k / T.
/// Interval mode assembles on a doubled periodic grid with the same step and keeps the
/// original nodes (finite section).
inline DiscretizedOperator op_mellin(const ConeSymbolFamily& P, const Geometry& g, double v = 0.0,
                                     const MellinContext& ctx = {}) {
    if (g.kind() != Geometry::Kind::cone) throw DomainError("op_mellin needs a cone geometry");
    if (P.q() != g.q()) throw ShapeError("symbol fiber dimension differs from geometry");
    if (P.base() != g.base()) throw DomainError("symbol base and cone base differ");
    if (g.mode() == BoundaryMode::periodic) return {g, v, detail::mellin_periodic(P, g, v, ctx)};

    const double h = g.h_t(), T = g.half_length();
    double low = detail::t_variation(P, g, v, ctx, -T, -T + h);
    double high = detail::t_variation(P, g, v, ctx, T - 2 * h, T - h);
    if (low > ctx.support_tolerance && high > ctx.support_tolerance)
        throw SupportPolicyError("symbol is not constant in t near either end of the interval");

    ConeParams padded = g.cone_params();
    padded.n_t = 2 * g.n_t();
    padded.half_length = 2 * T;
    padded.mode = BoundaryMode::periodic;
    Geometry pg = Geometry::cone(padded, g.q());
    Matrix full = detail::mellin_periodic(P, pg, v, ctx);
    const int block = g.n_omega() * g.q();
    const int offset = (g.n_t() / 2) * block;
    return {g, v, full.block(offset, offset, g.dim(), g.dim())};
}

/// Operator-valued edge symbol sigma(x, xi, v) = P(x, 0, r v, r xi, i r d/dr + i(n+1)/2) on the cone.
inline Matrix edge_symbol(const ConeSymbolFamily& P, double x, double xi, double v, const Geometry& cone) {
    MellinContext ctx;
    ctx.x0 = x;
    ctx.xi0 = xi;
    ctx.freeze_r = true;
    return op_mellin(P, cone, v, ctx).matrix;
}

struct TwistedHomogeneityReport {
    double max_violation = 0.0;  ///< max relative Frobenius violation over samples and steps
    int checks = 0;
};

/// Twisted homogeneity sigma(lambda xi, lambda v) = kappa_lambda sigma(xi, v) kappa_lambda^{-1} for the grid-admissible
/// lambda = e^{k h_t}, k = 1..max_steps, at the given (xi, v) samples. kappa is a permutation, so the
/// conjugation is applied by reindexing.
inline TwistedHomogeneityReport twisted_homogeneity(const ConeSymbolFamily& P, const Geometry& cone, double x,
                                                    const std::vector<std::pair<double, double>>& samples, int max_steps = 8) {
    TwistedHomogeneityReport rep;
    const int n = cone.dim();
    for (auto [xi, v] : samples) {
        Matrix base = edge_symbol(P, x, xi, v, cone);
        for (int k = 1; k <= max_steps; ++k) {
            Matrix kap = kappa_steps(k, cone);
            std::vector<int> to(n);
            for (int i = 0; i < n; ++i) kap.row(i).cwiseAbs().maxCoeff(&to[i]);
            // (kappa B kappa^*)_{ij} = B_{to(i), to(j)}
            Matrix conj(n, n);
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < n; ++i) conj(i, j) = base(to[i], to[j]);
            const double lam = std::exp(k * cone.h_t());
            Matrix moved = edge_symbol(P, x, lam * xi, lam * v, cone);
            rep.max_violation = std::max(rep.max_violation, (moved - conj).norm() / base.norm());
            ++rep.checks;
        }
    }
    return rep;
}

/// The cone factor of an edge geometry as a standalone cone geometry.
inline Geometry cone_factor(const Geometry& edge) { return Geometry::cone(edge.cone_params(), edge.q()); }

/// Edge quantization: fiber operators op_mellin(P; x_i, eta = r xi_m, w = r v) mixed over x by
/// Kohn-Nirenberg in the edge variable.
inline DiscretizedOperator op_edge(const ConeSymbolFamily& P, const Geometry& g, double v = 0.0, bool freeze_r = false) {
    if (g.kind() != Geometry::Kind::edge) throw DomainError("op_edge needs an edge geometry");
    Geometry cone = cone_factor(g);
    const int n = g.n_x();
    Matrix m = kn_assemble(
        n, cone.dim(),
        [&](int i, int mi) {
            MellinContext ctx;
            ctx.x0 = g.x(i);
            ctx.xi0 = double(signed_mode(mi, n));
            ctx.freeze_r = freeze_r;
            return op_mellin(P, cone, v, ctx).matrix;
        },
        P.x_dependent());
    return {g, v, std::move(m)};
}

struct NegligibleVerdict {
    int order = 0;
    double tau = 0.0;
    bool negligible = false;
    double fitted_constant = 0.0;   ///< sup ||D(v)|| (1 + |v|)^N
    double derivative_constant = 0.0;  ///< sup of difference quotients times (1 + min|v|)^N
    double decay_exponent = 0.0;    ///< log-log slope of ||D(v)|| against 1 + |v| (positive v)
    std::vector<double> params;
    std::vector<double> norms;
    int tail_rank = 0;              ///< singular values above 1e-8 max, at the sample of largest norm
};

/// J-infinity test: sup ||D(v)|| (1+|v|)^N <= tau, with the same bound on difference quotients.
inline NegligibleVerdict negligible_test(const OperatorFamily& F, int N, double tau = 20.0) {
    if (F.members.size() < 3) throw DomainError("negligible test needs at least three parameter samples");
    NegligibleVerdict out;
    out.order = N;
    out.tau = tau;
    out.params = F.params;
    std::vector<std::size_t> idx(F.params.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return F.params[a] < F.params[b]; });
    for (const auto& m : F.members) out.norms.push_back(m.norm());
    for (std::size_t i = 0; i < F.params.size(); ++i)
        out.fitted_constant = std::max(out.fitted_constant, out.norms[i] * std::pow(1.0 + std::abs(F.params[i]), N));
    for (std::size_t k = 1; k < idx.size(); ++k) {
        std::size_t a = idx[k - 1], b = idx[k];
        double dv = F.params[b] - F.params[a];
        if (dv <= 0) continue;
        double dq = operator_norm(F.members[b].matrix - F.members[a].matrix) / dv;
        double vmin = std::min(std::abs(F.params[a]), std::abs(F.params[b]));
        out.derivative_constant = std::max(out.derivative_constant, dq * std::pow(1.0 + vmin, N));
    }
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < F.params.size(); ++i)
        if (F.params[i] > 0 && out.norms[i] > 0) {
            xs.push_back(1.0 + F.params[i]);
            ys.push_back(out.norms[i]);
        }
    if (xs.size() >= 2) out.decay_exponent = loglog_slope(xs, ys);
    std::size_t peak = static_cast<std::size_t>(std::max_element(out.norms.begin(), out.norms.end()) - out.norms.begin());
    RealVector s = singular_values(F.members[peak].matrix);
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > 1e-8 * out.norms[peak]) ++out.tail_rank;
    out.negligible = out.fitted_constant <= tau && out.derivative_constant <= tau;
    return out;
}

}  // namespace psdo
