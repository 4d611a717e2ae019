#pragma once

#include "psdo/calculus.hpp"

namespace psdo {

// ---- ellipticity ----

struct EllipticityReport {
    double interior_min = 0.0;      ///< min smallest singular value of sigma0 on (x, r, unit (xi, v))
    double conormal_min = 0.0;      ///< min smallest singular value of the conormal symbol on the p grid
    double conormal_argmin = 0.0;   ///< p where conormal_min is attained
    double large_p_min = 0.0;       ///< smallest singular value of the conormal limits at p -> +-inf
    double large_p_mismatch = 0.0;  ///< vertex tuples: distance of those limits from sigma0(+-1)
    bool compatible = true;
    bool interior_pass = false;
    bool conormal_pass = false;
    bool large_p_pass = false;
    bool elliptic = false;
};

struct EllipticityOptions {
    double threshold = 1e-6;
    double p_max = 64.0;
    int p_points = 512;
    int x_points = 64;
    int sphere_points = 32;
    int n_omega = 8;  ///< base grid for circle-base conormal symbols
    std::vector<double> radii = {0.0, 0.25, 1.0, 4.0};
};

/// Interior symbol invertible on the cosphere and conormal symbol invertible on the real line.
inline EllipticityReport check_elliptic(const SymbolTuple& t, const EllipticityOptions& opt = {}) {
    EllipticityReport rep;
    if (t.P.base() == BaseKind::point) rep.compatible = compat_check(t).pass;

    rep.interior_min = std::numeric_limits<double>::infinity();
    const int nx = t.kind == TupleKind::vertex ? 1 : opt.x_points;
    for (int i = 0; i < nx; ++i) {
        double x = 2.0 * pi * i / nx;
        for (double r : opt.radii)
            for (int d = 0; d < opt.sphere_points; ++d) {
                double th = 2.0 * pi * (d + 0.5) / opt.sphere_points;
                Matrix s = interior_principal(t.sigma0, x, r, std::cos(th), std::sin(th));
                rep.interior_min = std::min(rep.interior_min, smallest_singular_value(s));
            }
    }
    rep.interior_pass = rep.interior_min >= opt.threshold;

    ConormalSymbol c = conormal(t.P);
    const int nw = t.P.base() == BaseKind::circle ? opt.n_omega : 1;
    rep.conormal_min = std::numeric_limits<double>::infinity();
    for (int k = 0; k < opt.p_points; ++k) {
        double p = -opt.p_max + 2.0 * opt.p_max * k / (opt.p_points - 1);
        double s = smallest_singular_value(c(p, nw));
        if (s < rep.conormal_min) {
            rep.conormal_min = s;
            rep.conormal_argmin = p;
        }
    }
    // the grid can straddle an isolated zero: refine around the grid minimum by golden-section search
    {
        const double dp = 2.0 * opt.p_max / (opt.p_points - 1);
        const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
        auto f = [&](double p) { return smallest_singular_value(c(p, nw)); };
        double a = rep.conormal_argmin - dp, b = rep.conormal_argmin + dp;
        double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
        double f1 = f(x1), f2 = f(x2);
        for (int it = 0; it < 80 && b - a > 1e-15 * std::max(1.0, std::abs(a)); ++it) {
            if (f1 < f2) {
                b = x2, x2 = x1, f2 = f1;
                x1 = b - gr * (b - a), f1 = f(x1);
            } else {
                a = x1, x1 = x2, f1 = f2;
                x2 = a + gr * (b - a), f2 = f(x2);
            }
        }
        for (auto [p, s] : {std::pair{x1, f1}, std::pair{x2, f2}})
            if (s < rep.conormal_min) rep.conormal_min = s, rep.conormal_argmin = p;
    }
    rep.conormal_pass = rep.conormal_min >= opt.threshold;

    rep.large_p_min = std::numeric_limits<double>::infinity();
    for (double sign : {-1.0, 1.0}) {
        Matrix lim = richardson_limit([&](double L) { return c(sign * L, nw); });
        rep.large_p_min = std::min(rep.large_p_min, smallest_singular_value(lim));
        if (t.kind == TupleKind::vertex && nw == 1)
            rep.large_p_mismatch = std::max(rep.large_p_mismatch, (lim - interior_principal(t.sigma0, 0.0, 0.0, sign, 0.0)).norm());
    }
    rep.large_p_pass = rep.large_p_min >= opt.threshold;
    rep.elliptic = rep.interior_pass && rep.conormal_pass && rep.large_p_pass;
    return rep;
}

// ---- winding oracle ----

class WindingError : public DomainError {
public:
    using DomainError::DomainError;
};

struct WindingResult {
    int winding = 0;
    double raw = 0.0;       ///< accumulated argument / 2 pi before rounding
    double residual = 0.0;  ///< |raw - winding|
    double min_modulus = 0.0;
    /// Orientation: p runs from -p_max to +p_max along the real line, closed through infinity.
    static constexpr const char* orientation = "p increasing from -inf to +inf; counterclockwise positive";
};

struct WindingOptions {
    double p_max = 64.0;
    int uniform_points = 512;
    double tail_end = 1e6;
    int tail_points = 64;
    double min_modulus = 1e-6;
    double closing_tolerance = 1e-3;
    double residual_tolerance = 0.1;
};

/// Winding number of a scalar (or determinant of a matrix) symbol along the real p line.
inline WindingResult winding_oracle(const std::function<Complex(double)>& g, const WindingOptions& opt = {}) {
    std::vector<double> ps;
    for (int k = opt.tail_points; k >= 1; --k) ps.push_back(-opt.p_max * std::pow(opt.tail_end / opt.p_max, double(k) / opt.tail_points));
    for (int k = 0; k < opt.uniform_points; ++k) ps.push_back(-opt.p_max + 2.0 * opt.p_max * k / (opt.uniform_points - 1));
    for (int k = 1; k <= opt.tail_points; ++k) ps.push_back(opt.p_max * std::pow(opt.tail_end / opt.p_max, double(k) / opt.tail_points));

    WindingResult res;
    res.min_modulus = std::numeric_limits<double>::infinity();
    auto value = [&](double p) {
        Complex z = g(p);
        res.min_modulus = std::min(res.min_modulus, std::abs(z));
        if (!(std::abs(z) >= opt.min_modulus)) throw WindingError("symbol vanishes near p = " + std::to_string(p));
        return z;
    };
    // argument increment between two samples, bisecting until each step turns by less than 1 rad
    std::function<double(double, Complex, double, Complex, int)> step = [&](double a, Complex za, double b, Complex zb, int depth) {
        double d = std::arg(zb / za);
        if (std::abs(d) < 1.0 || depth > 30) return d;
        double m = 0.5 * (a + b);
        Complex zm = value(m);
        return step(a, za, m, zm, depth + 1) + step(m, zm, b, zb, depth + 1);
    };
    double total = 0.0;
    Complex prev = value(ps.front());
    const Complex first = prev;
    for (std::size_t i = 1; i < ps.size(); ++i) {
        Complex z = value(ps[i]);
        total += step(ps[i - 1], prev, ps[i], z, 0);
        prev = z;
    }
    if (std::abs(prev - first) > opt.closing_tolerance * std::max(1.0, std::abs(first)))
        throw WindingError("symbol limits at -inf and +inf differ: contour does not close");
    total += std::arg(first / prev);
    res.raw = total / (2.0 * pi);
    res.winding = static_cast<int>(std::lround(res.raw));
    res.residual = std::abs(res.raw - res.winding);
    if (res.residual > opt.residual_tolerance) throw WindingError("winding number is not close to an integer");
    return res;
}

inline WindingResult winding_oracle(const ConormalSymbol& c, int n_omega = 1, const WindingOptions& opt = {}) {
    return winding_oracle([&](double p) { return c(p, n_omega).determinant(); }, opt);
}

/// Winding number of a nonvanishing function on the circle, x running from 0 to 2 pi.
inline WindingResult circle_winding(const std::function<Complex(double)>& f, int samples = 1024, double min_modulus = 1e-6) {
    WindingResult res;
    res.min_modulus = std::numeric_limits<double>::infinity();
    double total = 0.0;
    Complex prev = f(0.0);
    const Complex first = prev;
    for (int k = 1; k <= samples; ++k) {
        Complex z = k == samples ? first : f(2.0 * pi * k / samples);
        res.min_modulus = std::min(res.min_modulus, std::abs(z));
        if (!(std::abs(z) >= min_modulus)) throw WindingError("function vanishes on the circle");
        double d = std::arg(z / prev);
        if (std::abs(d) > 1.0) throw WindingError("circle sampling too coarse for the winding number");
        total += d;
        prev = z;
    }
    res.raw = total / (2.0 * pi);
    res.winding = static_cast<int>(std::lround(res.raw));
    res.residual = std::abs(res.raw - res.winding);
    return res;
}

// ---- finite sections ----

/// One finite section: the matrix and the orthogonal projector onto its boundary layer (the
/// degrees of freedom that only exist because the section was truncated).
struct SectionInput {
    Matrix matrix;
    Matrix layer;
};

struct SectionResult {
    int size = 0;
    RealVector singular_values;
    double threshold = 0.0;
    int small_count = 0;        ///< singular values <= threshold
    int kernel = 0;             ///< small right singular vectors that are not boundary artifacts
    int cokernel = 0;           ///< same for left singular vectors
    int index = 0;
    double smallest = 0.0;      ///< s_min
    double smallest_regular = 0.0;  ///< smallest singular value above the threshold
    double gap_ratio = 0.0;
    bool gap_ok = false;
};

struct FredholmReport {
    std::vector<SectionResult> sections;
    double rank_tolerance = 1e-6;
    double required_gap = 100.0;
    bool stable = false;      ///< kernel and cokernel counts agree across the ladder
    bool gaps_ok = false;
    bool degenerate = false;  ///< smallest regular singular value collapses under refinement
    bool determinate = false;
    int kernel = 0, cokernel = 0, index = 0;
};

/// Number of vectors in the span of `v` that live mostly outside the layer projector.
inline int genuine_count(const Matrix& v, const Matrix& layer) {
    if (v.cols() == 0) return 0;
    Matrix m = v.adjoint() * layer * v;
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.adjoint()));
    int n = 0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
        if (es.eigenvalues()(i) < 0.5) ++n;
    return n;
}

inline SectionResult analyse_section(const SectionInput& in, double tau = 1e-6, double gap = 100.0) {
    const Matrix& a = in.matrix;
    if (a.rows() != a.cols() || in.layer.rows() != a.rows()) throw ShapeError("finite section must be square with a matching layer");
    Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
    SectionResult r;
    r.size = static_cast<int>(a.rows());
    r.singular_values = svd.singularValues();
    const auto& s = r.singular_values;
    const int n = static_cast<int>(s.size());
    r.threshold = tau * s(0);
    while (r.small_count < n && s(n - 1 - r.small_count) <= r.threshold) ++r.small_count;
    const int k = r.small_count;
    r.kernel = genuine_count(svd.matrixV().rightCols(k), in.layer);
    r.cokernel = genuine_count(svd.matrixU().rightCols(k), in.layer);
    r.index = r.kernel - r.cokernel;
    r.smallest = s(n - 1);
    r.smallest_regular = k < n ? s(n - 1 - k) : 0.0;
    r.gap_ratio = k == 0 ? r.smallest / r.threshold : r.smallest_regular / std::max(s(n - k), 1e-300);
    r.gap_ok = r.gap_ratio >= gap;
    return r;
}

/// Kernel/cokernel/index from finite sections on a refinement ladder; indeterminate unless the
/// counts stabilize with a clear spectral gap.
inline FredholmReport finite_section(const std::function<SectionInput(int)>& build, const std::vector<int>& sizes,
                                     double tau = 1e-6, double gap = 100.0) {
    if (sizes.size() < 2) throw DomainError("finite-section ladder needs at least two sizes");
    FredholmReport rep;
    rep.rank_tolerance = tau;
    rep.required_gap = gap;
    for (int n : sizes) rep.sections.push_back(analyse_section(build(n), tau, gap));
    rep.stable = true;
    rep.gaps_ok = true;
    for (std::size_t i = 0; i < rep.sections.size(); ++i) {
        const auto& s = rep.sections[i];
        rep.gaps_ok = rep.gaps_ok && s.gap_ok;
        if (i == 0) continue;
        const auto& p = rep.sections[i - 1];
        if (s.kernel != p.kernel || s.cokernel != p.cokernel) rep.stable = false;
        if (s.smallest_regular < p.smallest_regular / 1.5) rep.degenerate = true;
    }
    rep.kernel = rep.sections.back().kernel;
    rep.cokernel = rep.sections.back().cokernel;
    rep.index = rep.kernel - rep.cokernel;
    rep.determinate = rep.stable && rep.gaps_ok && !rep.degenerate;
    return rep;
}

/// Projector onto the Fourier band |k| >= N/4 of a circle grid.
inline Matrix frequency_layer(const Geometry& g) {
    const int n = g.n_x();
    Vector d(n);
    for (int m = 0; m < n; ++m) d(m) = std::abs(signed_mode(m, n)) >= n / 4 ? 1.0 : 0.0;
    Matrix u = kron(unitary_dft(n), Matrix::Identity(g.q(), g.q()));
    Vector dq(n * g.q());
    for (int i = 0; i < n * g.q(); ++i) dq(i) = d(i / g.q());
    return u.adjoint() * dq.asDiagonal() * u;
}

/// Projector onto the nodes within `fraction` of the t-axis length from either end.
inline Matrix end_layer(const Geometry& g, double fraction = 0.15) {
    const int n = g.n_t();
    const int w = std::max(1, static_cast<int>(std::ceil(fraction * n)));
    RealVector d(g.node_count());
    for (int nd = 0; nd < g.node_count(); ++nd) {
        int j = g.t_index(nd);
        d(nd) = (j < w || j >= n - w) ? 1.0 : 0.0;
    }
    return GridFunction::expand(g, d).asDiagonal();
}

/// Toeplitz-type operator M_f P_+ + P_- on the circle (P_+ projects onto modes >= 0).
inline Matrix toeplitz_operator(const Geometry& g, const std::function<Complex(double)>& f) {
    const int n = g.n_x();
    Matrix u = unitary_dft(n);
    Vector pplus(n);
    for (int m = 0; m < n; ++m) pplus(m) = signed_mode(m, n) >= 0 ? 1.0 : 0.0;
    Matrix pp = u.adjoint() * pplus.asDiagonal() * u;
    Matrix id = Matrix::Identity(n, n);
    Vector e(n);
    for (int j = 0; j < n; ++j) e(j) = f(g.x(j));
    return e.asDiagonal() * pp + (id - pp);
}

/// Toeplitz-type operator with symbol e^{i k x}.
inline Matrix toeplitz_operator(const Geometry& g, int winding) {
    return toeplitz_operator(g, [winding](double x) { return std::exp(I * (double(winding) * x)); });
}

/// Interval cone grid with n_t nodes at fixed step h (refinement grows the interval).
inline Geometry interval_cone(int n_t, double h, BaseKind base = BaseKind::point, int n_omega = 1, int q = 1) {
    return Geometry::cone({base, base == BaseKind::circle ? n_omega : 1, 0.5 * n_t * h, n_t, BoundaryMode::interval}, q);
}

// ---- tuple quantization ----

/// Cutoff near the singular stratum, smooth on the log axis: 1 for r <= 1, 0 for r >= e^3.
/// The transition spans three units of t so that it is resolved on coarse cone grids.
inline double edge_cutoff(double r) { return r <= 0.0 ? 1.0 : plateau_bump(std::log(r) + 3.0, 6.0); }

/// Smooth representative of the degree-0 interior symbol near the zero section. At a vertex the
/// covariable is p and the two directions are joined by chi(p); along an edge, points inside the
/// unit ball are pushed radially onto it (the origin takes the mean of the +-xi directions).
inline Matrix interior_representative(const SymbolTuple& t, double x, double r, double xi, double v) {
    if (t.kind == TupleKind::vertex) {
        const double c = xi / std::sqrt(1.0 + xi * xi);
        return 0.5 * (1.0 + c) * t.sigma0(0.0, r, 1.0, 0.0) + 0.5 * (1.0 - c) * t.sigma0(0.0, r, -1.0, 0.0);
    }
    const double rho = std::hypot(xi, v);
    if (rho >= 1.0) return t.sigma0(x, r, xi, v);
    if (rho == 0.0) return 0.5 * (t.sigma0(x, r, 1.0, 0.0) + t.sigma0(x, r, -1.0, 0.0));
    return t.sigma0(x, r, xi / rho, v / rho);
}

/// Family whose quantization realizes the tuple: phi^2 P + (1 - phi^2) sigma0 with
/// sigma0 read in edge variables (xi = eta / r, v = w / r) or, at a vertex, with xi = p.
inline ConeSymbolFamily tuple_family(const SymbolTuple& t) {
    if (t.sigma0.q != t.P.q()) throw ShapeError("tuple symbols have different fiber dimensions");
    auto fn = [t](const ConeArgs& a) -> Matrix {
        const double phi = edge_cutoff(a.r);
        const double c = phi * phi;
        Matrix out = c > 0.0 ? Matrix(c * t.P(a)) : Matrix::Zero(t.P.q(), t.P.q());
        if (c < 1.0) {
            Matrix inner = t.kind == TupleKind::vertex ? interior_representative(t, 0.0, a.r, a.p, 0.0)
                                                       : interior_representative(t, a.x, a.r, a.eta / a.r, a.w / a.r);
            out += (1.0 - c) * inner;
        }
        return out;
    };
    return ConeSymbolFamily(fn, t.P.q(), t.P.x_dependent() || (t.kind == TupleKind::edge && t.sigma0.depends_on_x()), t.P.base());
}

struct QuantizedTuple {
    DiscretizedOperator op;
    ConeSymbolFamily family;
    CompatReport compat;
    double conormal_mismatch = 0.0;  ///< family's conormal symbol vs the tuple's, sampled
};

class CompatibilityError : public DomainError {
public:
    using DomainError::DomainError;
};

/// Operator realizing a compatible tuple on a cone (vertex) or edge geometry.
inline QuantizedTuple quantize_tuple(const SymbolTuple& t, const Geometry& g, double v = 0.0) {
    QuantizedTuple out{DiscretizedOperator{g, v, Matrix{}}, tuple_family(t), {}};
    if (t.P.base() == BaseKind::point) {
        out.compat = compat_check(t);
        if (!out.compat.pass) throw CompatibilityError("tuple fails compatibility: mismatch " + std::to_string(out.compat.max_mismatch));
    }
    if (g.kind() == Geometry::Kind::cone)
        out.op = op_mellin(out.family, g, v);
    else if (g.kind() == Geometry::Kind::edge)
        out.op = op_edge(out.family, g, v);
    else
        throw DomainError("tuples are quantized on cone or edge geometries");
    auto c0 = conormal(t.P), c1 = conormal(out.family);
    const int nw = g.n_omega();
    for (double p : {-10.0, -1.0, 0.0, 0.5, 3.0, 40.0}) out.conormal_mismatch = std::max(out.conormal_mismatch, (c0(p, nw) - c1(p, nw)).norm());
    return out;
}

// ---- large parameter ----

struct LargeParameterReport {
    std::vector<double> params;
    std::vector<double> smin;
    double bound = 0.5;
    bool bounded = false;
    bool non_decreasing = false;
    bool pass = false;
};

/// s_min(v) along |v| ladder: bounded below and non-decreasing within 10% jitter.
inline LargeParameterReport large_parameter_scan(const OperatorFamily& F, double bound = 0.5) {
    LargeParameterReport rep;
    rep.bound = bound;
    std::vector<std::size_t> idx(F.params.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return std::abs(F.params[a]) < std::abs(F.params[b]); });
    for (auto i : idx) {
        rep.params.push_back(F.params[i]);
        rep.smin.push_back(smallest_singular_value(F.members[i].matrix));
    }
    rep.bounded = !rep.smin.empty() && *std::min_element(rep.smin.begin(), rep.smin.end()) >= bound;
    rep.non_decreasing = true;
    for (std::size_t i = 1; i < rep.smin.size(); ++i)
        if (rep.smin[i] < 0.9 * rep.smin[i - 1]) rep.non_decreasing = false;
    rep.pass = rep.bounded && rep.non_decreasing;
    return rep;
}

}  // namespace psdo
