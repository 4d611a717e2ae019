#pragma once

#include "psdo/core.hpp"

#include <unsupported/Eigen/FFT>

#include <memory>
#include <numeric>
#include <optional>
#include <string>

namespace psdo {

enum class BaseKind { point, circle };
enum class BoundaryMode { periodic, interval };

inline const char* to_string(BoundaryMode m) { return m == BoundaryMode::periodic ? "periodic" : "interval"; }
inline const char* to_string(BaseKind b) { return b == BaseKind::point ? "point" : "circle"; }

/// Parameters of a model cone K_Omega in log coordinates t = -log r on [-T, T).
struct ConeParams {
    BaseKind base = BaseKind::point;
    int n_omega = 1;  ///< base circle nodes; forced to 1 for a point base
    double half_length = 6.0;
    int n_t = 64;
    BoundaryMode mode = BoundaryMode::periodic;
};

/// Discretized model space: a circle, a cone over a point or circle, or an edge
/// (circle times cone). Values are laid out node-major with the q fiber components
/// innermost; nodes are ordered (x, t, omega) with omega fastest.
///
/// Operators built on a geometry act in the flat frame: cone values are carried to
/// the cylinder by the isometry (Wu)(t, omega) = e^{-(n+1)t/2} u(e^{-t}, omega), where the
/// inner product has uniform weights. Matrix adjoints and spectral norms are then the
/// weighted-L2 ones.
class Geometry {
public:
    enum class Kind { circle, cone, edge };

    static Geometry circle(int n_x, int q = 1) {
        check_grid(n_x, "circle");
        Geometry g;
        g.kind_ = Kind::circle;
        g.n_x_ = n_x;
        g.q_ = check_fiber(q);
        return g;
    }

    static Geometry cone(ConeParams cone, int q = 1) {
        Geometry g;
        g.kind_ = Kind::cone;
        g.set_cone(cone);
        g.q_ = check_fiber(q);
        return g;
    }

    static Geometry edge(int n_x, ConeParams cone, int q = 1) {
        check_grid(n_x, "edge circle");
        Geometry g;
        g.kind_ = Kind::edge;
        g.n_x_ = n_x;
        g.set_cone(cone);
        g.q_ = check_fiber(q);
        return g;
    }

    Kind kind() const { return kind_; }
    bool has_x_axis() const { return kind_ != Kind::cone; }
    bool has_cone() const { return kind_ != Kind::circle; }

    int q() const { return q_; }
    int n_x() const { return has_x_axis() ? n_x_ : 1; }
    int n_t() const { return has_cone() ? cone_.n_t : 1; }
    int n_omega() const { return has_cone() ? cone_.n_omega : 1; }
    double half_length() const { return cone_.half_length; }
    BaseKind base() const { return cone_.base; }
    BoundaryMode mode() const { return cone_.mode; }
    const ConeParams& cone_params() const { return cone_; }

    /// Dimension of the cone base Omega.
    int base_dim() const { return has_cone() && cone_.base == BaseKind::circle ? 1 : 0; }
    /// Exponent (n+1)/2 of the weighted dilation group; Im p = -(n+1)/2 is the weight line.
    double weight_exponent() const { return 0.5 * (base_dim() + 1); }

    double h_x() const { return 2.0 * pi / n_x(); }
    double h_t() const { return 2.0 * cone_.half_length / cone_.n_t; }
    double h_omega() const { return cone_.base == BaseKind::circle ? 2.0 * pi / cone_.n_omega : 1.0; }

    double x(int i) const { return i * h_x(); }
    double t(int j) const { return -cone_.half_length + j * h_t(); }
    double r(int j) const { return std::exp(-t(j)); }
    double omega(int l) const { return l * h_omega(); }
    /// Dual variable of the t axis for signed mode k: p_k = pi k / T.
    double p(int k) const { return pi * k / cone_.half_length; }

    int fiber_nodes() const { return n_t() * n_omega(); }
    int node_count() const { return n_x() * fiber_nodes(); }
    int dim() const { return node_count() * q_; }

    int node(int ix, int jt, int lw = 0) const { return (ix * n_t() + jt) * n_omega() + lw; }
    int x_index(int node) const { return node / fiber_nodes(); }
    int t_index(int node) const { return (node / n_omega()) % n_t(); }
    int omega_index(int node) const { return node % n_omega(); }

    /// Quadrature weights of the native measure (dx, r^n dr dvol_Omega, or their product).
    RealVector weights() const {
        RealVector w(node_count());
        for (int nd = 0; nd < node_count(); ++nd) {
            double val = 1.0;
            if (has_x_axis()) val *= h_x();
            if (has_cone()) val *= h_t() * std::exp(-2.0 * weight_exponent() * t(t_index(nd))) * h_omega();
            w(nd) = val;
        }
        return w;
    }

    /// Uniform weights of the flat (cylinder) frame.
    double flat_weight() const {
        double val = 1.0;
        if (has_x_axis()) val *= h_x();
        if (has_cone()) val *= h_t() * h_omega();
        return val;
    }

    /// Diagonal of the isometry W per node (1 on the circle).
    RealVector isometry_factors() const {
        RealVector f = RealVector::Ones(node_count());
        if (!has_cone()) return f;
        for (int nd = 0; nd < node_count(); ++nd) f(nd) = std::exp(-weight_exponent() * t(t_index(nd)));
        return f;
    }

    std::string describe() const {
        std::string s;
        switch (kind_) {
            case Kind::circle: s = "circle(" + std::to_string(n_x_) + ")"; break;
            case Kind::cone: s = "cone(" + cone_string() + ")"; break;
            case Kind::edge: s = "edge(" + std::to_string(n_x_) + ", " + cone_string() + ")"; break;
        }
        return s + ", q=" + std::to_string(q_);
    }

    bool same_layout(const Geometry& o) const {
        return kind_ == o.kind_ && n_x() == o.n_x() && n_t() == o.n_t() && n_omega() == o.n_omega() && q_ == o.q_ &&
               (!has_cone() || (cone_.half_length == o.cone_.half_length && cone_.mode == o.cone_.mode &&
                                cone_.base == o.cone_.base));
    }

private:
    Geometry() = default;

    static void check_grid(int n, const char* what) {
        if (n < 8 || n % 2 != 0)
            throw DomainError(std::string(what) + " grid size must be even and >= 8, got " + std::to_string(n));
    }
    static int check_fiber(int q) {
        if (q < 1) throw DomainError("fiber dimension q must be >= 1");
        return q;
    }

    void set_cone(ConeParams c) {
        check_grid(c.n_t, "cone axis");
        if (!(c.half_length > 0.0)) throw DomainError("cone half-length T must be positive");
        if (c.base == BaseKind::circle)
            check_grid(c.n_omega, "cone base circle");
        else
            c.n_omega = 1;
        cone_ = c;
    }

    std::string cone_string() const {
        std::string b = cone_.base == BaseKind::point ? "point" : "circle(" + std::to_string(cone_.n_omega) + ")";
        return b + ", T=" + std::to_string(cone_.half_length) + ", N_t=" + std::to_string(cone_.n_t) + ", " +
               to_string(cone_.mode);
    }

    Kind kind_ = Kind::circle;
    int n_x_ = 0;
    ConeParams cone_{};
    int q_ = 1;
};

/// Coefficient vector on a geometry, in native (cone-frame) values.
class GridFunction {
public:
    GridFunction(Geometry g, Vector values) : geometry_(std::move(g)), values_(std::move(values)) {
        if (values_.size() != geometry_.dim()) throw DomainError("grid function length does not match geometry");
    }

    static GridFunction from_flat(const Geometry& g, const Vector& flat) {
        return GridFunction(g, expand(g, g.isometry_factors().cwiseInverse()).cwiseProduct(flat));
    }

    const Geometry& geometry() const { return geometry_; }
    const Vector& values() const { return values_; }

    /// W u: values in the flat cylinder frame.
    Vector to_flat() const { return expand(geometry_, geometry_.isometry_factors()).cwiseProduct(values_); }

    double norm() const {
        RealVector w = expand_real(geometry_, geometry_.weights());
        return std::sqrt((w.array() * values_.array().abs2()).sum());
    }

    /// Node function repeated over the q fiber components.
    static Vector expand(const Geometry& g, const RealVector& per_node) {
        return expand_real(g, per_node).cast<Complex>();
    }
    static RealVector expand_real(const Geometry& g, const RealVector& per_node) {
        RealVector out(g.dim());
        for (int nd = 0; nd < g.node_count(); ++nd) out.segment(nd * g.q(), g.q()).setConstant(per_node(nd));
        return out;
    }

private:
    Geometry geometry_;
    Vector values_;
};

/// Multiplication operator by a node function.
inline Matrix multiplication(const Geometry& g, const RealVector& per_node) {
    return GridFunction::expand(g, per_node).asDiagonal();
}

enum class Axis { x, t };
enum class Direction { forward, inverse };

namespace detail {

/// Applies a 1-D transform along one axis of a (outer, n, inner) strided layout.
template <class Fn>
Vector along_axis(const Vector& u, int outer, int n, int inner, Fn&& transform) {
    Vector out(u.size());
    std::vector<Complex> line(n), res(n);
    for (int o = 0; o < outer; ++o)
        for (int in = 0; in < inner; ++in) {
            for (int j = 0; j < n; ++j) line[j] = u((o * n + j) * inner + in);
            transform(line, res);
            for (int j = 0; j < n; ++j) out((o * n + j) * inner + in) = res[j];
        }
    return out;
}

struct AxisLayout {
    int outer, n, inner;
    double origin;  // coordinate of node 0
    double dual;    // frequency of unit mode
};

inline AxisLayout layout(const Geometry& g, Axis axis) {
    if (axis == Axis::x) {
        if (!g.has_x_axis()) throw DomainError("geometry has no edge/circle axis");
        return {1, g.n_x(), g.fiber_nodes() * g.q(), 0.0, 1.0};
    }
    if (!g.has_cone()) throw DomainError("geometry has no cone axis");
    if (g.mode() != BoundaryMode::periodic) throw DomainError("the t axis is periodic only in periodic mode");
    return {g.n_x(), g.n_t(), g.n_omega() * g.q(), -g.half_length(), pi / g.half_length()};
}

}  // namespace detail

inline Axis default_axis(const Geometry& g) { return g.has_x_axis() ? Axis::x : Axis::t; }

/// Discrete Fourier transform along a periodic axis: u_hat(k) = (1/N) sum_j u_j e^{-i k x_j}
/// with FFT-ordered signed modes k; the inverse is u_j = sum_k u_hat(k) e^{i k x_j}.
/// On the t axis x_j, k are replaced by t_j and p_k.
inline Vector dft(const Vector& u, const Geometry& g, Direction dir, Axis axis) {
    if (u.size() != g.dim()) throw DomainError("dft: vector length does not match geometry");
    auto lay = detail::layout(g, axis);
    Eigen::FFT<double> fft;
    const int n = lay.n;
    return detail::along_axis(u, lay.outer, n, lay.inner, [&](std::vector<Complex>& in, std::vector<Complex>& out) {
        if (dir == Direction::forward) {
            fft.fwd(out, in);
            for (int m = 0; m < n; ++m)
                out[m] *= std::exp(-I * (lay.dual * signed_mode(m, n) * lay.origin)) / static_cast<double>(n);
        } else {
            std::vector<Complex> scaled(n);
            for (int m = 0; m < n; ++m)
                scaled[m] = in[m] * std::exp(I * (lay.dual * signed_mode(m, n) * lay.origin)) * static_cast<double>(n);
            fft.inv(out, scaled);
        }
    });
}

inline Vector dft(const GridFunction& u, Direction dir) {
    return dft(u.values(), u.geometry(), dir, default_axis(u.geometry()));
}

/// Unitary DFT matrix (FFT-ordered rows): F[m, j] = e^{-2 pi i m j / n} / sqrt(n).
inline Matrix unitary_dft(int n) {
    Matrix f(n, n);
    for (int m = 0; m < n; ++m)
        for (int j = 0; j < n; ++j) f(m, j) = std::polar(1.0 / std::sqrt(double(n)), -2.0 * pi * double(m) * j / n);
    return f;
}

/// Kronecker product a (x) b.
inline Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

/// Unitary DFT along an axis, identity elsewhere.
inline Matrix axis_dft_operator(const Geometry& g, Axis axis) {
    auto lay = detail::layout(g, axis);
    return kron(kron(Matrix::Identity(lay.outer, lay.outer), unitary_dft(lay.n)), Matrix::Identity(lay.inner, lay.inner));
}

/// Permutation matrix on an axis: (P u)_j = u_{perm(j)}.
template <class Map>
Matrix axis_permutation(const Geometry& g, Axis axis, Map&& source_of) {
    auto lay = axis == Axis::x ? detail::AxisLayout{1, g.n_x(), g.fiber_nodes() * g.q(), 0, 1}
                               : detail::AxisLayout{g.n_x(), g.n_t(), g.n_omega() * g.q(), 0, 1};
    Matrix p = Matrix::Zero(g.dim(), g.dim());
    for (int o = 0; o < lay.outer; ++o)
        for (int j = 0; j < lay.n; ++j) {
            int src = source_of(j);
            for (int in = 0; in < lay.inner; ++in) p((o * lay.n + j) * lay.inner + in, (o * lay.n + src) * lay.inner + in) = 1.0;
        }
    return p;
}

inline int positive_mod(long a, long n) { return static_cast<int>(((a % n) + n) % n); }

/// Translation [T_tau u](x) = u(x + tau) along the edge/circle axis; tau must be a grid multiple.
inline Matrix translation(double tau, const Geometry& g) {
    if (!g.has_x_axis()) throw DomainError("translation needs an edge/circle axis");
    double steps = tau / g.h_x();
    long s = std::lround(steps);
    if (std::abs(steps - double(s)) > 1e-9) throw DomainError("translation shift is not a multiple of the grid step");
    const int n = g.n_x();
    return axis_permutation(g, Axis::x, [&](int j) { return positive_mod(j + s, n); });
}

/// Grid steps k with lambda = e^{k h_t}; throws when lambda is not admissible.
inline int admissible_steps(double lambda, const Geometry& g) {
    if (!g.has_cone()) throw DomainError("dilations need a cone axis");
    if (g.mode() != BoundaryMode::periodic) throw DomainError("exact dilations need a periodic cone axis");
    if (!(lambda > 0.0)) throw DomainError("dilation scale must be positive");
    double k = std::log(lambda) / g.h_t();
    long ki = std::lround(k);
    if (std::abs(k - double(ki)) > 1e-9) throw DomainError("scale is not grid-admissible: log(lambda)/h_t is not an integer");
    return static_cast<int>(ki);
}

/// [kappa_lambda u](r, omega) = lambda^{(n+1)/2} u(lambda r, omega), lambda = e^{k h_t}.
/// In the flat frame this is the cyclic shift (kappa f)_j = f_{j-k}.
inline Matrix kappa_steps(int k, const Geometry& g) {
    if (!g.has_cone()) throw DomainError("dilations need a cone axis");
    if (g.mode() != BoundaryMode::periodic) throw DomainError("exact dilations need a periodic cone axis");
    const int n = g.n_t();
    return axis_permutation(g, Axis::t, [&](int j) { return positive_mod(long(j) - k, n); });
}

inline Matrix kappa(double lambda, const Geometry& g) { return kappa_steps(admissible_steps(lambda, g), g); }

/// Discrete edge dilation centred at grid index c: [U f](j) = (kappa f)(c + a (j - c)), where the
/// edge factor a is a unit modulo N_x acting by modular multiplication (exact and unitary on
/// the grid) and kappa takes `cone_steps` steps.
inline Matrix edge_dilation(int center, int multiplier, int cone_steps, const Geometry& g) {
    if (g.kind() != Geometry::Kind::edge) throw DomainError("edge_dilation needs an edge geometry");
    const int n = g.n_x();
    if (std::gcd(positive_mod(multiplier, n), n) != 1) throw DomainError("edge dilation factor must be a unit modulo N_x");
    Matrix px = axis_permutation(g, Axis::x, [&](int j) { return positive_mod(center + long(multiplier) * (j - center), n); });
    return px * kappa_steps(cone_steps, g);
}

/// Modular inverse of a unit a modulo n.
inline int modular_inverse(int a, int n) {
    a = positive_mod(a, n);
    for (int b = 1; b < n; ++b)
        if ((long(a) * b) % n == 1) return b;
    throw DomainError("no modular inverse");
}

/// Point used to centre cutoffs: edge/circle coordinate x and radial coordinate r.
struct Center {
    double x = 0.0;
    double r = 0.0;
};

/// Distance of node nd from a centre (periodic in x; omega is ignored).
inline double center_distance(const Geometry& g, int nd, const Center& c) {
    double d2 = 0.0;
    if (g.has_x_axis()) {
        double dx = std::remainder(g.x(g.x_index(nd)) - c.x, 2.0 * pi);
        d2 += dx * dx;
    }
    if (g.has_cone()) {
        double dr = g.r(g.t_index(nd)) - c.r;
        d2 += dr * dr;
    }
    return std::sqrt(d2);
}

/// C-infinity plateau bump: 1 for d <= s/2, 0 for d >= s, exp(1 - 1/(1 - u^2)) in between.
inline double plateau_bump(double d, double s) {
    const double a = 0.5 * s;
    if (d <= a) return 1.0;
    if (d >= s) return 0.0;
    double u = (d - a) / (s - a);
    return std::exp(1.0 - 1.0 / (1.0 - u * u));
}

/// Ladder of nested plateau cutoffs shrinking to a centre (a cofinal chain of the
/// localizing class ordered by phi < psi iff phi psi = psi).
class CutoffFamily {
public:
    CutoffFamily(const Geometry& g, Center center, std::vector<double> scales) : center_(center), scales_(std::move(scales)) {
        if (scales_.empty()) throw DomainError("cutoff family needs at least one scale");
        for (std::size_t i = 1; i < scales_.size(); ++i) {
            if (!(scales_[i] < scales_[i - 1])) throw DomainError("cutoff scales must be strictly decreasing");
            if (scales_[i] > 0.5 * scales_[i - 1] * (1.0 + 1e-12))
                throw DomainError("consecutive cutoff scales must shrink by at least 2 for the plateaus to nest");
        }
        const double s_min = scales_.back();
        if (g.has_x_axis() && s_min < 3.0 * g.h_x()) throw DomainError("smallest cutoff scale is below 3 grid steps of the x axis");
        if (g.has_cone()) {
            int inside = 0;
            for (int j = 0; j < g.n_t(); ++j)
                if (std::abs(g.r(j) - center.r) < s_min) ++inside;
            if (inside < 3) throw DomainError("smallest cutoff scale resolves fewer than 3 nodes of the cone axis");
        }
        for (double s : scales_) {
            RealVector phi(g.node_count());
            for (int nd = 0; nd < g.node_count(); ++nd) phi(nd) = plateau_bump(center_distance(g, nd, center_), s);
            bumps_.push_back(std::move(phi));
        }
    }

    const Center& center() const { return center_; }
    const std::vector<double>& scales() const { return scales_; }
    const std::vector<RealVector>& bumps() const { return bumps_; }
    std::size_t size() const { return scales_.size(); }

    /// Largest distance from the centre of a node where the bump at level i is positive.
    double support_radius(const Geometry& g, std::size_t i) const {
        double rmax = 0.0;
        for (int nd = 0; nd < g.node_count(); ++nd)
            if (bumps_[i](nd) > 0.0) rmax = std::max(rmax, center_distance(g, nd, center_));
        return rmax;
    }

private:
    Center center_;
    std::vector<double> scales_;
    std::vector<RealVector> bumps_;
};

/// Geometric ladder s0, s0/2, ... with `count` levels.
inline std::vector<double> dyadic_scales(double s0, int count) {
    std::vector<double> s(count);
    for (int i = 0; i < count; ++i) s[i] = s0 / std::pow(2.0, i);
    return s;
}

}  // namespace psdo
