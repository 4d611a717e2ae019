#pragma once

#include "psdo/dsl.hpp"
#include "psdo/geometry.hpp"

#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>

namespace psdo {

/// Orientation-preserving circle diffeomorphism x -> f(x) given by a DSL lift in the variable x
/// (f(x + 2 pi) = f(x) + 2 pi); `inverted` selects f^{-1}, computed by Newton iteration.
class CircleDiffeo {
public:
    explicit CircleDiffeo(Expr lift, bool inverted = false)
        : f_(std::move(lift)), df_(diff(f_, Var::x)), inverted_(inverted) {
        for (int j = 0; j < 512; ++j) {
            double x = 2.0 * pi * j / 512;
            if (!(forward_derivative(x) > 1e-12)) throw DomainError("diffeomorphism derivative vanishes or changes sign");
        }
        double wrap = forward(2.0 * pi) - forward(0.0);
        if (std::abs(wrap - 2.0 * pi) > 1e-9) throw DomainError("map is not a degree-one circle diffeomorphism");
    }

    static CircleDiffeo parse(std::string_view lift) { return CircleDiffeo(psdo::parse(lift)); }

    CircleDiffeo inverse() const { return CircleDiffeo(f_, df_, !inverted_); }
    bool inverted() const { return inverted_; }
    const Expr& lift() const { return f_; }

    double map(double x) const { return inverted_ ? backward(x) : forward(x); }
    double derivative(double x) const {
        return inverted_ ? 1.0 / forward_derivative(backward(x)) : forward_derivative(x);
    }

private:
    CircleDiffeo(Expr f, Expr df, bool inverted) : f_(std::move(f)), df_(std::move(df)), inverted_(inverted) {}

    double forward(double x) const { return eval_scalar(f_, Bindings().set(Var::x, x)).real(); }
    double forward_derivative(double x) const { return eval_scalar(df_, Bindings().set(Var::x, x)).real(); }
    double backward(double y) const {
        double x = y;
        for (int it = 0; it < 100; ++it) {
            double step = (forward(x) - y) / forward_derivative(x);
            x -= step;
            if (std::abs(step) < 1e-15 * (1.0 + std::abs(x))) break;
        }
        return x;
    }

    Expr f_, df_;
    bool inverted_;
};

/// Principal symbol a(x, r, xi, v) of the main stratum, degree-0 homogeneous in (xi, v) for
/// |(xi, v)| >= R0. Pushforwards are kept as a chain of coordinate changes applied at evaluation.
struct InteriorSymbol {
    Expr a = constant(1.0);
    int q = 1;
    double R0 = 1.0;
    std::vector<CircleDiffeo> charts;

    InteriorSymbol() = default;
    InteriorSymbol(Expr e, int q_, double r0 = 1.0) : a(std::move(e)), q(q_), R0(r0) {
        if (a.shape() != 1 && a.shape() != q) throw ShapeError("interior symbol shape does not match q");
    }

    Matrix operator()(double x, double r, double xi, double v) const {
        for (auto it = charts.rbegin(); it != charts.rend(); ++it) {
            double src = it->inverse().map(x);
            xi *= it->derivative(src);
            x = src;
        }
        Bindings b;
        b.set(Var::x, x).set(Var::r, r).set(Var::xi, xi).set(Var::v, v);
        return eval(a, b, q);
    }

    bool depends_on_x() const { return !charts.empty() || a.uses(Var::x); }
    bool depends_on_r() const { return a.uses(Var::r); }
};

/// Arguments of a cone symbol family P(x, r, w, eta, p); `mode` is the Fourier index of the base
/// circle (bound to the DSL variable xi) and 0 for a point base.
struct ConeArgs {
    double x = 0.0;
    double r = 0.0;
    double w = 0.0;
    double eta = 0.0;
    double p = 0.0;
    int mode = 0;
};

/// Operator-valued family P(x, r, w, eta, p) on the base fiber. For a circle base the family
/// acts diagonally in the base Fourier basis, optionally conjugated by a pullback matrix.
class ConeSymbolFamily {
public:
    using Fn = std::function<Matrix(const ConeArgs&)>;

    ConeSymbolFamily() : ConeSymbolFamily(constant(1.0), 1) {}

    ConeSymbolFamily(Expr e, int q, BaseKind base = BaseKind::point) : q_(q), base_(base), source_(e) {
        if (e.shape() != 1 && e.shape() != q) throw ShapeError("cone symbol shape does not match q");
        fn_ = [e, q](const ConeArgs& a) {
            Bindings b;
            b.set(Var::x, a.x).set(Var::r, a.r).set(Var::w, a.w).set(Var::eta, a.eta).set(Var::p, a.p);
            b.set(Var::xi, double(a.mode)).set(Var::v, 0.0);
            return eval(e, b, q);
        };
        x_dependent_ = e.uses(Var::x);
    }

    /// Family defined by a callable (used for constructed corrections and interpolations).
    ConeSymbolFamily(Fn fn, int q, bool x_dependent, BaseKind base = BaseKind::point)
        : q_(q), base_(base), fn_(std::move(fn)), x_dependent_(x_dependent) {}

    static ConeSymbolFamily parse(std::string_view src, int q = 1, BaseKind base = BaseKind::point) {
        return ConeSymbolFamily(psdo::parse(src, q), q, base);
    }

    int q() const { return q_; }
    BaseKind base() const { return base_; }
    bool x_dependent() const { return x_dependent_; }
    const std::optional<Expr>& source() const { return source_; }
    const std::optional<CircleDiffeo>& base_map() const { return base_map_; }

    Matrix operator()(const ConeArgs& a) const { return fn_(a); }
    const Fn& function() const { return fn_; }

    /// Value on the base fiber in nodal form: q x q for a point base, (n_omega q)^2 for a circle base.
    /// A base map g acts as (g*)^{-1} P g* compressed to the n_omega grid modes, with the
    /// intermediate modes taken on an oversampled band.
    Matrix fiber(const ConeArgs& a, int n_omega) const {
        if (base_ == BaseKind::point) return fn_(a);
        const int n = base_map_ ? pullback_oversampling * n_omega : n_omega;
        Matrix diag = Matrix::Zero(n * q_, n * q_);
        ConeArgs am = a;
        for (int m = 0; m < n; ++m) {
            am.mode = signed_mode(m, n);
            diag.block(m * q_, m * q_, q_, q_) = fn_(am);
        }
        Matrix u = kron(unitary_dft(n_omega), Matrix::Identity(q_, q_));
        if (!base_map_) return u.adjoint() * diag * u;
        const auto& [forward, backward] = pullbacks_->get(*base_map_, n_omega, q_);
        return u.adjoint() * (backward * diag * forward) * u;
    }

    static constexpr int pullback_oversampling = 4;

    /// Fourier-Galerkin matrix of the unitary pullback u -> sqrt(g') u(g) from n_in to n_out modes
    /// (both in FFT order), by quadrature on a fine grid.
    static Matrix pullback_matrix(const CircleDiffeo& g, int n_out, int n_in) {
        const int fine = 8 * std::max(n_out, n_in);
        Matrix out = Matrix::Zero(n_out, n_in);
        std::vector<double> y(fine), jac(fine);
        for (int j = 0; j < fine; ++j) {
            double w = 2.0 * pi * j / fine;
            y[j] = g.map(w);
            jac[j] = std::sqrt(g.derivative(w));
        }
        Eigen::FFT<double> fft;
        std::vector<Complex> f(fine), c(fine);
        for (int m = 0; m < n_in; ++m) {
            const double km = signed_mode(m, n_in);
            for (int j = 0; j < fine; ++j) f[j] = jac[j] * std::exp(I * (km * y[j]));
            fft.fwd(c, f);
            for (int k = 0; k < n_out; ++k) out(k, m) = c[mode_index(signed_mode(k, n_out), fine)] / double(fine);
        }
        return out;
    }

    ConeSymbolFamily with_base_map(CircleDiffeo g) const {
        if (base_ != BaseKind::circle) throw DomainError("base diffeomorphisms need a circle base");
        ConeSymbolFamily out = *this;
        if (out.base_map_) throw DomainError("family already carries a base diffeomorphism");
        out.base_map_ = std::move(g);
        out.pullbacks_ = std::make_shared<PullbackCache>();
        return out;
    }

    /// Family with some arguments replaced by constants (used for freezing).
    ConeSymbolFamily frozen(std::optional<double> x, std::optional<double> r, std::optional<double> w,
                            std::optional<double> eta) const {
        ConeSymbolFamily out = *this;
        if (source_) {
            Substitution s;
            if (x) s[Var::x] = constant(*x);
            if (w) s[Var::w] = constant(*w);
            if (eta) s[Var::eta] = constant(*eta);
            if (r) {
                s[Var::r] = constant(*r);
                s[Var::t] = constant(*r == 0.0 ? std::numeric_limits<double>::infinity() : -std::log(*r));
            }
            out = ConeSymbolFamily(substitute(*source_, s), q_, base_);
            out.base_map_ = base_map_;
            return out;
        }
        auto fn = fn_;
        out.fn_ = [fn, x, r, w, eta](const ConeArgs& a) {
            ConeArgs b = a;
            if (x) b.x = *x;
            if (r) b.r = *r;
            if (w) b.w = *w;
            if (eta) b.eta = *eta;
            return fn(b);
        };
        if (x) out.x_dependent_ = false;
        return out;
    }

private:
    int q_ = 1;
    BaseKind base_ = BaseKind::point;
    Fn fn_;
    bool x_dependent_ = false;
    std::optional<Expr> source_;
    std::optional<CircleDiffeo> base_map_;

    /// Galerkin pullback pairs per grid size, shared between copies and threads.
    struct PullbackCache {
        std::mutex lock;
        std::map<std::pair<int, int>, std::pair<Matrix, Matrix>> entries;

        const std::pair<Matrix, Matrix>& get(const CircleDiffeo& g, int n_omega, int q) {
            std::lock_guard<std::mutex> guard(lock);
            auto key = std::make_pair(n_omega, q);
            auto it = entries.find(key);
            if (it == entries.end()) {
                const int n = pullback_oversampling * n_omega;
                Matrix id = Matrix::Identity(q, q);
                Matrix fwd = kron(pullback_matrix(g, n, n_omega), id);
                Matrix bwd = kron(pullback_matrix(g.inverse(), n_omega, n), id);
                it = entries.emplace(key, std::make_pair(std::move(fwd), std::move(bwd))).first;
            }
            return it->second;
        }
    };
    std::shared_ptr<PullbackCache> pullbacks_ = std::make_shared<PullbackCache>();
};

/// Conormal symbol p -> P(0, 0, 0, 0, p) on the base fiber.
class ConormalSymbol {
public:
    explicit ConormalSymbol(ConeSymbolFamily frozen) : family_(std::move(frozen)) {}
    Matrix operator()(double p, int n_omega = 1) const {
        ConeArgs a;
        a.p = p;
        return family_.fiber(a, n_omega);
    }
    Complex scalar(double p) const {
        Matrix m = (*this)(p);
        if (m.rows() != 1) throw ShapeError("scalar conormal value requested for a matrix family");
        return m(0, 0);
    }
    const ConeSymbolFamily& family() const { return family_; }

private:
    ConeSymbolFamily family_;
};

inline ConormalSymbol conormal(const ConeSymbolFamily& P) { return ConormalSymbol(P.frozen(0.0, 0.0, 0.0, 0.0)); }

/// Three-point Richardson limit f(inf) ~ (8 f(4L) - 6 f(2L) + f(L)) / 3, exact through O(L^-2).
template <class F>
auto richardson_limit(F&& f, double lambda = 1e4) {
    return ((8.0 * f(4.0 * lambda) - 6.0 * f(2.0 * lambda) + f(lambda)) / 3.0).eval();
}

/// The stratum where the two symbols of a tuple meet: an edge x in S^1 (r = 0), or a cone vertex.
/// For a vertex tuple the interior symbol is sigma0(r, xi) with xi the covariable of t.
enum class TupleKind { edge, vertex };

struct SymbolTuple {
    InteriorSymbol sigma0;
    ConeSymbolFamily P;
    TupleKind kind = TupleKind::edge;
    double tolerance = 1e-8;
};

/// Principal value of the interior symbol in direction (xi, v).
inline Matrix interior_principal(const InteriorSymbol& a, double x, double r, double xi, double v) {
    return richardson_limit([&](double L) { return a(x, r, L * xi, L * v); });
}

/// Principal symbol of the generating family where it meets the singular stratum.
inline Matrix family_principal(const ConeSymbolFamily& P, TupleKind kind, double x, double xi, double v) {
    return richardson_limit([&](double L) {
        ConeArgs a;
        a.x = x;
        if (kind == TupleKind::edge) {
            a.w = L * v;
            a.eta = L * xi;
        } else {
            a.p = L * xi;
        }
        return P(a);
    });
}

struct HomogeneityReport {
    double max_violation = 0.0;
    bool pass = false;
    int samples = 0;
};

/// Samples a(x, lambda xi, lambda v) = a(x, xi, v) on |(xi, v)| in {R0, 2R0, 4R0}, lambda in {2, 4}.
/// A symbol without parameter dependence is homogeneous in xi alone and sampled at xi = +-R.
inline HomogeneityReport check_homogeneity(const InteriorSymbol& a, double tol = 1e-9, int n_x = 8, int n_dir = 16) {
    HomogeneityReport rep;
    const bool parametric = a.a.uses(Var::v);
    if (!parametric) n_dir = 2;
    for (int i = 0; i < n_x; ++i) {
        double x = 2.0 * pi * i / n_x;
        for (double R : {a.R0, 2 * a.R0, 4 * a.R0})
            for (int d = 0; d < n_dir; ++d) {
                double th = parametric ? 2.0 * pi * (d + 0.5) / n_dir : pi * d;
                double xi = R * std::cos(th), v = R * std::sin(th);
                Matrix base = a(x, 0.0, xi, v);
                double scale = std::max(base.norm(), 1e-300);
                for (double lam : {2.0, 4.0}) {
                    double viol = (a(x, 0.0, lam * xi, lam * v) - base).norm() / scale;
                    rep.max_violation = std::max(rep.max_violation, viol);
                    ++rep.samples;
                }
            }
    }
    rep.pass = rep.max_violation <= tol;
    return rep;
}

struct CompatReport {
    double max_mismatch = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

/// Compatibility of a tuple: the interior symbol restricted to the singular stratum equals the
/// principal symbol of the generating family there.
inline CompatReport compat_check(const SymbolTuple& t, int n_x = 16, int n_dir = 16) {
    if (t.sigma0.q != t.P.q()) throw ShapeError("tuple symbols have different fiber dimensions");
    if (t.P.base() != BaseKind::point) throw DomainError("compatibility is checked for point-base families");
    CompatReport rep;
    rep.tolerance = t.tolerance;
    auto compare = [&](double x, double xi, double v) {
        Matrix s0 = interior_principal(t.sigma0, x, 0.0, xi, v);
        Matrix s1 = family_principal(t.P, t.kind, x, xi, v);
        rep.max_mismatch = std::max(rep.max_mismatch, (s0 - s1).norm());
    };
    if (t.kind == TupleKind::vertex) {
        compare(0.0, 1.0, 0.0);
        compare(0.0, -1.0, 0.0);
    } else {
        for (int i = 0; i < n_x; ++i)
            for (int d = 0; d < n_dir; ++d) {
                double th = 2.0 * pi * (d + 0.5) / n_dir;
                compare(2.0 * pi * i / n_x, std::cos(th), std::sin(th));
            }
    }
    rep.pass = rep.max_mismatch <= t.tolerance;
    return rep;
}

/// Tuple read off a single generating family: the interior symbol is the principal limit of P.
inline SymbolTuple extract_tuple(const ConeSymbolFamily& P, TupleKind kind) {
    if (!P.source()) throw DomainError("tuple extraction needs a DSL-defined family");
    const Expr& src = *P.source();
    auto at_scale = [&](double L) {
        Substitution s;
        if (kind == TupleKind::edge) {
            s[Var::w] = constant(L) * var(Var::v);
            s[Var::eta] = constant(L) * var(Var::xi);
            s[Var::p] = constant(0.0);
        } else {
            s[Var::x] = constant(0.0);
            s[Var::w] = constant(0.0);
            s[Var::eta] = constant(0.0);
            s[Var::p] = constant(L) * var(Var::xi);
        }
        return substitute(src, s);
    };
    const double L = 1e4;
    Expr sigma = (constant(8.0) * at_scale(4 * L) - constant(6.0) * at_scale(2 * L) + at_scale(L)) / constant(3.0);
    SymbolTuple t;
    t.sigma0 = InteriorSymbol(sigma, P.q(), 1.0);
    t.P = P;
    t.kind = kind;
    return t;
}

/// Pushforward under x' = f(x), xi' = xi / f'(x).
inline InteriorSymbol pushforward_interior(const InteriorSymbol& a, const CircleDiffeo& f) {
    InteriorSymbol out = a;
    out.charts.push_back(f);
    return out;
}

/// Conjugation of the family on the base circle by the pullback of g.
inline ConeSymbolFamily pushforward_edge(const ConeSymbolFamily& P, const CircleDiffeo& g) { return P.with_base_map(g); }

}  // namespace psdo
