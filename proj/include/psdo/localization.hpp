#pragma once

#include "psdo/fredholm.hpp"

#include <random>

namespace psdo {

// ---- local norms ----

struct LocalNormReport {
    std::vector<double> scales;
    std::vector<double> right;  ///< ||A phi_s||
    std::vector<double> left;   ///< ||phi_s A||
    double limit = 0.0;         ///< final value of the right-placement sequence
    double asymmetry = 0.0;     ///< max | ||A phi|| - ||phi A|| | along the ladder (reported only)
    double tolerance = 1e-3;
    bool monotone = false;      ///< non-increasing within 10% jitter
    bool in_ideal = false;      ///< limit <= tolerance
};

/// Norm sequence ||A phi_s|| along a cutoff ladder centred at x; the limit is read off the last level.
inline LocalNormReport local_norm(const Matrix& A, const Geometry& g, const CutoffFamily& ladder, double tol = 1e-3,
                                  bool with_left = true) {
    if (A.rows() != g.dim() || A.cols() != g.dim()) throw ShapeError("operator does not match the geometry");
    LocalNormReport rep;
    rep.scales = ladder.scales();
    rep.tolerance = tol;
    for (const auto& phi : ladder.bumps()) {
        Vector ph = GridFunction::expand(g, phi);
        rep.right.push_back(operator_norm(A * ph.asDiagonal()));
        if (!with_left) continue;
        rep.left.push_back(operator_norm(ph.asDiagonal() * A));
        rep.asymmetry = std::max(rep.asymmetry, std::abs(rep.right.back() - rep.left.back()));
    }
    rep.limit = rep.right.back();
    rep.monotone = true;
    for (std::size_t i = 1; i < rep.right.size(); ++i)
        if (rep.right[i] > 1.1 * rep.right[i - 1] + 1e-14) rep.monotone = false;
    rep.in_ideal = rep.limit <= tol;
    return rep;
}

inline LocalNormReport local_norm(const DiscretizedOperator& A, const CutoffFamily& ladder, double tol = 1e-3) {
    return local_norm(A.matrix, A.geometry, ladder, tol);
}

// ---- restricted norms ----

/// Nodes within distance < radius of a centre (the open neighbourhood U on the grid).
inline std::vector<int> neighbourhood(const Geometry& g, const Center& c, double radius) {
    std::vector<int> nodes;
    for (int nd = 0; nd < g.node_count(); ++nd)
        if (center_distance(g, nd, c) < radius) nodes.push_back(nd);
    return nodes;
}

/// ||B||_Q: norm of B on vectors supported in the node set Q (column restriction).
inline double restricted_norm(const Matrix& B, const Geometry& g, const std::vector<int>& nodes) {
    if (nodes.empty()) return 0.0;
    const int q = g.q();
    Matrix cols(B.rows(), Eigen::Index(nodes.size()) * q);
    for (std::size_t i = 0; i < nodes.size(); ++i) cols.middleCols(Eigen::Index(i) * q, q) = B.middleCols(Eigen::Index(nodes[i]) * q, q);
    return operator_norm(cols);
}

// ---- local families and partitions of unity ----

/// Representatives A_i attached to centres x_i, with neighbourhood radii U(eps, x_i) per eps.
struct LocalFamily {
    Geometry geometry;
    std::vector<Center> centers;
    std::vector<Matrix> reps;
    std::map<double, std::vector<double>> radii;

    void validate() const {
        if (centers.empty() || centers.size() != reps.size()) throw ShapeError("local family needs one representative per centre");
        for (const auto& a : reps)
            if (a.rows() != geometry.dim() || a.cols() != geometry.dim()) throw ShapeError("representative does not match the geometry");
        for (const auto& [eps, r] : radii)
            if (r.size() != centers.size()) throw ShapeError("radii must be given per centre");
    }
};

struct PartitionOfUnity {
    Geometry geometry;
    std::vector<Center> centers;
    std::vector<double> radii;
    std::vector<RealVector> functions;

    /// Normalized plateau bumps psi_i / sum_j psi_j with psi_i supported in U(x_i). Throws if the
    /// neighbourhoods do not cover every node.
    static PartitionOfUnity subordinate(const Geometry& g, const std::vector<Center>& centers, const std::vector<double>& radii) {
        if (centers.size() != radii.size()) throw ShapeError("one radius per centre");
        PartitionOfUnity p{g, centers, radii, {}};
        RealVector total = RealVector::Zero(g.node_count());
        for (std::size_t i = 0; i < centers.size(); ++i) {
            RealVector psi(g.node_count());
            for (int nd = 0; nd < g.node_count(); ++nd) psi(nd) = plateau_bump(center_distance(g, nd, centers[i]), radii[i]);
            total += psi;
            p.functions.push_back(std::move(psi));
        }
        for (int nd = 0; nd < g.node_count(); ++nd)
            if (!(total(nd) > 0.0)) throw DomainError("neighbourhoods do not cover node " + std::to_string(nd));
        for (auto& f : p.functions) f = f.cwiseQuotient(total);
        return p;
    }

    /// Max deviation of the pointwise sum from 1; throws on negativity or a support outside U(x_i).
    double validate() const {
        RealVector total = RealVector::Zero(geometry.node_count());
        for (std::size_t i = 0; i < functions.size(); ++i) {
            for (int nd = 0; nd < geometry.node_count(); ++nd) {
                const double f = functions[i](nd);
                if (f < 0.0) throw DomainError("partition of unity has a negative value");
                if (f > 0.0 && !(center_distance(geometry, nd, centers[i]) < radii[i]))
                    throw DomainError("partition function is not subordinate to its neighbourhood");
            }
            total += functions[i];
        }
        return (total.array() - 1.0).abs().maxCoeff();
    }
};

// ---- continuity ----

struct ContinuityLevel {
    double eps = 0.0;
    std::vector<double> radii;
    double max_overlap_norm = 0.0;  ///< max_{i != j} ||A_i - A_j|| restricted to U_i cap U_j
    int witness_i = -1, witness_j = -1;
    bool covered = false;
    bool fitted = false;            ///< radii chosen automatically
    bool pass = false;
};

struct ContinuityReport {
    std::vector<ContinuityLevel> levels;
    bool pass = false;
};

namespace detail {

inline ContinuityLevel continuity_level(const LocalFamily& F, double eps, const std::vector<double>& radii) {
    ContinuityLevel lv;
    lv.eps = eps;
    lv.radii = radii;
    const Geometry& g = F.geometry;
    std::vector<std::vector<int>> hoods;
    for (std::size_t i = 0; i < F.centers.size(); ++i) hoods.push_back(neighbourhood(g, F.centers[i], radii[i]));
    for (std::size_t i = 0; i < hoods.size(); ++i)
        for (std::size_t j = i + 1; j < hoods.size(); ++j) {
            std::vector<int> both;
            std::set_intersection(hoods[i].begin(), hoods[i].end(), hoods[j].begin(), hoods[j].end(), std::back_inserter(both));
            if (both.empty()) continue;
            double n = restricted_norm(F.reps[i] - F.reps[j], g, both);
            if (n > lv.max_overlap_norm) lv.max_overlap_norm = n, lv.witness_i = int(i), lv.witness_j = int(j);
        }
    lv.covered = true;
    for (int nd = 0; nd < g.node_count() && lv.covered; ++nd) {
        bool in = false;
        for (std::size_t i = 0; i < F.centers.size() && !in; ++i) in = plateau_bump(center_distance(g, nd, F.centers[i]), radii[i]) > 0.0;
        lv.covered = in;
    }
    lv.pass = lv.covered && lv.max_overlap_norm <= eps;
    return lv;
}

}  // namespace detail

/// Largest common radius whose overlaps satisfy the continuity bound at eps. Candidates are the
/// midpoints between consecutive node distances, so each neighbourhood boundary sits between nodes.
inline std::vector<double> fit_radii(const LocalFamily& F, double eps) {
    const Geometry& g = F.geometry;
    std::vector<double> d;
    for (const auto& c : F.centers)
        for (int nd = 0; nd < g.node_count(); ++nd) d.push_back(center_distance(g, nd, c));
    std::sort(d.begin(), d.end());
    d.erase(std::unique(d.begin(), d.end(), [](double a, double b) { return b - a < 1e-12; }), d.end());
    std::vector<double> cand;
    for (std::size_t k = 0; k + 1 < d.size(); ++k) cand.push_back(0.5 * (d[k] + d[k + 1]));
    cand.push_back(d.back() + 1.0);
    const std::size_t m = F.centers.size();
    auto ok = [&](double r) { return detail::continuity_level(F, eps, std::vector<double>(m, r)).max_overlap_norm <= eps; };
    // the overlap norms only grow with the radius, so the admissible radii form a prefix
    std::size_t lo = 0, hi = cand.size();
    while (lo < hi) {
        std::size_t mid = (lo + hi) / 2;
        if (ok(cand[mid])) lo = mid + 1;
        else hi = mid;
    }
    return std::vector<double>(m, lo == 0 ? cand.front() : cand[lo - 1]);
}

/// Continuity condition at each eps: overlapping neighbourhoods carry representatives within eps
/// (restricted to the overlap) and the neighbourhoods cover the grid. Radii missing from the family
/// are fitted (and stored).
inline ContinuityReport continuity_check(LocalFamily& F, const std::vector<double>& eps_ladder) {
    F.validate();
    ContinuityReport rep;
    rep.pass = true;
    for (double eps : eps_ladder) {
        bool fitted = false;
        if (!F.radii.count(eps)) {
            F.radii[eps] = fit_radii(F, eps);
            fitted = true;
        }
        auto lv = detail::continuity_level(F, eps, F.radii.at(eps));
        lv.fitted = fitted;
        rep.pass = rep.pass && lv.pass;
        rep.levels.push_back(std::move(lv));
    }
    return rep;
}

class PreconditionError : public DomainError {
public:
    using DomainError::DomainError;
};

/// sum_i phi_i A_i.
inline Matrix glue(const LocalFamily& F, const PartitionOfUnity& P) {
    F.validate();
    if (P.functions.size() != F.reps.size()) throw ShapeError("partition and family have different centre counts");
    Matrix out = Matrix::Zero(F.geometry.dim(), F.geometry.dim());
    for (std::size_t i = 0; i < F.reps.size(); ++i) out += GridFunction::expand(F.geometry, P.functions[i]).asDiagonal() * F.reps[i];
    return out;
}

/// Glue at a working eps: checks continuity (fitting radii if needed) and uses the subordinate partition.
inline Matrix glue(LocalFamily& F, double eps) {
    auto rep = continuity_check(F, {eps});
    if (!rep.pass) throw PreconditionError("local family is not continuous at eps = " + std::to_string(eps));
    return glue(F, PartitionOfUnity::subordinate(F.geometry, F.centers, F.radii.at(eps)));
}

struct GluingLevel {
    double eps = 0.0;
    std::vector<double> reproduction;  ///< local_norm limit of glued - A_i at x_i, per centre
    double worst = 0.0;
    bool pass = false;                 ///< worst <= 2 eps
};

struct GluingReport {
    std::vector<GluingLevel> levels;
    double cauchy_worst_ratio = 0.0;   ///< max ||glued(eps) - glued(delta)|| / max(2 eps, 2 delta)
    bool reproduction = false;
    bool cauchy = false;
    bool pass = false;
};

/// Gluing contract across an eps ladder: reproduction of every representative mod J_x (limit of the
/// local norm <= 2 eps) and the Cauchy bound between all pairs of levels. `scales` defines the
/// cutoff ladder centred at each x_i.
inline GluingReport gluing_check(LocalFamily& F, const std::vector<double>& eps_ladder, const std::vector<double>& scales) {
    GluingReport rep;
    rep.reproduction = true;
    std::vector<Matrix> glued;
    for (double eps : eps_ladder) {
        glued.push_back(glue(F, eps));
        GluingLevel lv;
        lv.eps = eps;
        for (std::size_t i = 0; i < F.centers.size(); ++i) {
            CutoffFamily ladder(F.geometry, F.centers[i], scales);
            lv.reproduction.push_back(local_norm(glued.back() - F.reps[i], F.geometry, ladder, 1e-3, false).limit);
            lv.worst = std::max(lv.worst, lv.reproduction.back());
        }
        lv.pass = lv.worst <= 2.0 * eps;
        rep.reproduction = rep.reproduction && lv.pass;
        rep.levels.push_back(std::move(lv));
    }
    for (std::size_t a = 0; a < glued.size(); ++a)
        for (std::size_t b = a + 1; b < glued.size(); ++b) {
            double bound = 2.0 * std::max(eps_ladder[a], eps_ladder[b]);
            rep.cauchy_worst_ratio = std::max(rep.cauchy_worst_ratio, operator_norm(glued[a] - glued[b]) / bound);
        }
    rep.cauchy = rep.cauchy_worst_ratio <= 1.0;
    rep.pass = rep.reproduction && rep.cauchy;
    return rep;
}

/// Local family of frozen representatives a(x_i, xi) of a circle symbol at equispaced centres
/// (every `stride` nodes).
inline LocalFamily frozen_circle_family(const InteriorSymbol& a, const Geometry& g, int stride, double v = 0.0) {
    if (g.kind() != Geometry::Kind::circle) throw DomainError("frozen_circle_family needs a circle geometry");
    LocalFamily F{g, {}, {}, {}};
    for (int j = 0; j < g.n_x(); j += stride) {
        F.centers.push_back({g.x(j), 0.0});
        InteriorSymbol frozen(substitute(a.a, Var::x, constant(g.x(j))), a.q, a.R0);
        F.reps.push_back(op_circle(frozen, g, v).matrix);
    }
    return F;
}

// ---- partition bound ----

struct PartitionBoundReport {
    double lhs = 0.0;    ///< ||sum_j f_j A_j||
    double rhs = 0.0;    ///< max_x sum_j f_j(x) * max_j ||A_j||_{supp f_j}
    double slack = 0.0;  ///< rhs - lhs
    bool violated = false;  ///< lhs > rhs beyond 1e-12 relative
};

/// ||sum_j f_j A_j|| <= max_x sum_j f_j(x) * max_j ||A_j||_{supp f_j} for node functions f_j >= 0.
/// The bound presumes the A_j commute with multiplication by node functions (local operators).
inline PartitionBoundReport partition_bound_check(const Geometry& g, const std::vector<RealVector>& f, const std::vector<Matrix>& A) {
    if (f.size() != A.size() || f.empty()) throw ShapeError("partition bound needs one function per operator");
    PartitionBoundReport rep;
    Matrix sum = Matrix::Zero(g.dim(), g.dim());
    RealVector total = RealVector::Zero(g.node_count());
    double amax = 0.0;
    for (std::size_t j = 0; j < f.size(); ++j) {
        if (f[j].size() != g.node_count() || A[j].rows() != g.dim() || A[j].cols() != g.dim()) throw ShapeError("partition bound shapes disagree");
        if ((f[j].array() < 0.0).any()) throw DomainError("partition function is negative");
        std::vector<int> supp;
        for (int nd = 0; nd < g.node_count(); ++nd)
            if (f[j](nd) > 0.0) supp.push_back(nd);
        amax = std::max(amax, restricted_norm(A[j], g, supp));
        sum += GridFunction::expand(g, f[j]).asDiagonal() * A[j];
        total += f[j];
    }
    rep.lhs = operator_norm(sum);
    rep.rhs = total.maxCoeff() * amax;
    rep.slack = rep.rhs - rep.lhs;
    rep.violated = rep.lhs > rep.rhs + 1e-12 * std::max(1.0, rep.rhs);
    return rep;
}

struct PartitionInstance {
    Geometry geometry;
    std::vector<RealVector> f;
    std::vector<Matrix> A;
};

/// Random instance on a circle grid: 1-6 nonnegative functions with random arc supports and local
/// operators with random q x q complex blocks per node.
inline PartitionInstance random_partition_instance(std::uint64_t seed, int nodes = 48, int q = 2) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> count(1, 6), start(0, nodes - 1), length(1, nodes);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss;
    PartitionInstance inst{Geometry::circle(nodes, q), {}, {}};
    const int J = count(rng);
    for (int j = 0; j < J; ++j) {
        RealVector f = RealVector::Zero(nodes);
        const int s = start(rng), len = length(rng);
        const double amp = 2.0 * unit(rng);
        for (int k = 0; k < len; ++k) f((s + k) % nodes) = amp * unit(rng);
        Matrix a = Matrix::Zero(nodes * q, nodes * q);
        for (int nd = 0; nd < nodes; ++nd)
            for (int r = 0; r < q; ++r)
                for (int c = 0; c < q; ++c) a(nd * q + r, nd * q + c) = {gauss(rng), gauss(rng)};
        inst.f.push_back(std::move(f));
        inst.A.push_back(std::move(a));
    }
    return inst;
}

// ---- global Fredholm verdict against local invertibility ----

struct LocalProxy {
    double r = 0.0;     ///< centre on the cone axis (0 = vertex)
    double smin = 0.0;  ///< smallest singular value of the frozen operator
    bool invertible = false;
};

struct FredholmLocalReport {
    std::vector<LocalProxy> proxies;
    FredholmReport global;
    bool locally_invertible = false;
    bool agree = false;
};

/// Cross-tabulates invertibility of the frozen operators at the given radial centres against the
/// global finite-section verdict. At the vertex (r = 0) the frozen operator is the conormal
/// multiplier P(0, p); at an interior point r_c it is the principal symbol sigma0(r_c, +-1) joined
/// over the covariable. Both are quantized on a periodic cone grid, where their singular values are
/// the symbol values on the p grid.
inline FredholmLocalReport fredholm_vs_local(const SymbolTuple& t, const std::vector<double>& centers, double h,
                                             const std::vector<int>& sizes, double floor = 1e-3) {
    if (t.kind != TupleKind::vertex) throw DomainError("fredholm_vs_local compares vertex tuples");
    FredholmLocalReport rep;
    const int n = sizes.back();
    Geometry periodic = Geometry::cone({t.P.base(), 1, 0.5 * n * h, n}, t.P.q());
    rep.locally_invertible = true;
    for (double r : centers) {
        ConeSymbolFamily frozen =
            r == 0.0 ? t.P.frozen(std::nullopt, 0.0, std::nullopt, std::nullopt)
                     : ConeSymbolFamily([t, r](const ConeArgs& a) { return interior_representative(t, 0.0, r, a.p, 0.0); }, t.P.q(), false,
                                        t.P.base());
        LocalProxy lp;
        lp.r = r;
        lp.smin = smallest_singular_value(op_mellin(frozen, periodic).matrix);
        lp.invertible = lp.smin >= floor;
        rep.locally_invertible = rep.locally_invertible && lp.invertible;
        rep.proxies.push_back(lp);
    }
    rep.global = finite_section(
        [&](int m) {
            Geometry g = interval_cone(m, h, t.P.base(), 1, t.P.q());
            return SectionInput{quantize_tuple(t, g).op.matrix, end_layer(g)};
        },
        sizes);
    rep.agree = rep.locally_invertible == rep.global.determinate;
    return rep;
}

}  // namespace psdo
