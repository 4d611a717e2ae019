#include "psdo/geometry.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace psdo;

namespace {

Vector random_vector(int n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d;
    Vector v(n);
    for (int i = 0; i < n; ++i) v(i) = {d(rng), d(rng)};
    return v;
}

// Direct O(N^2) summation of the forward transform on a circle.
Vector naive_dft(const Vector& u) {
    const int n = static_cast<int>(u.size());
    Vector out = Vector::Zero(n);
    for (int m = 0; m < n; ++m) {
        int k = signed_mode(m, n);
        for (int j = 0; j < n; ++j) out(m) += u(j) * std::exp(-I * (double(k) * 2.0 * pi * j / n));
        out(m) /= double(n);
    }
    return out;
}

}  // namespace

TEST(Geometry, CircleNodesAndWeights) {
    auto g = Geometry::circle(8);
    EXPECT_EQ(g.node_count(), 8);
    for (int j = 0; j < 8; ++j) EXPECT_NEAR(g.x(j), j * pi / 4, 1e-15);
    RealVector w = g.weights();
    for (int j = 0; j < 8; ++j) EXPECT_NEAR(w(j), 2 * pi / 8, 1e-15);
}

TEST(Geometry, RejectsBadGrids) {
    EXPECT_THROW(Geometry::circle(7), DomainError);
    EXPECT_THROW(Geometry::circle(6), DomainError);
    EXPECT_THROW(Geometry::cone({BaseKind::point, 1, 0.0, 64}), DomainError);
    EXPECT_THROW(Geometry::cone({BaseKind::point, 1, -1.0, 64}), DomainError);
    EXPECT_THROW(Geometry::cone({BaseKind::circle, 9, 4.0, 64}), DomainError);
    EXPECT_THROW(Geometry::circle(8, 0), DomainError);
}

TEST(Geometry, WeightExponent) {
    EXPECT_DOUBLE_EQ(Geometry::cone({BaseKind::point, 1, 4.0, 64}).weight_exponent(), 0.5);
    EXPECT_DOUBLE_EQ(Geometry::cone({BaseKind::circle, 16, 4.0, 64}).weight_exponent(), 1.0);
}

TEST(Geometry, IsometryPreservesGaussianNorms) {
    for (auto base : {BaseKind::point, BaseKind::circle}) {
        auto g = Geometry::cone({base, 16, 4.0, 64});
        Vector u(g.dim());
        for (int nd = 0; nd < g.node_count(); ++nd) {
            double r = g.r(g.t_index(nd));
            u(nd) = std::exp(-(r - 1.0) * (r - 1.0)) * std::polar(1.0, g.omega(g.omega_index(nd)));
        }
        GridFunction f(g, u);
        double flat = f.to_flat().norm() * std::sqrt(g.flat_weight());
        EXPECT_NEAR(f.norm(), flat, 1e-12 * f.norm());
        auto back = GridFunction::from_flat(g, f.to_flat());
        EXPECT_LE((back.values() - u).norm(), 1e-12 * u.norm());
    }
}

TEST(Geometry, DftBasics) {
    auto g = Geometry::circle(8);
    Vector ones = Vector::Ones(8);
    Vector c = dft(GridFunction(g, ones), Direction::forward);
    EXPECT_NEAR(std::abs(c(0) - 1.0), 0.0, 1e-15);
    for (int m = 1; m < 8; ++m) EXPECT_NEAR(std::abs(c(m)), 0.0, 1e-15);
    Vector e(8);
    for (int j = 0; j < 8; ++j) e(j) = std::exp(I * g.x(j));
    c = dft(GridFunction(g, e), Direction::forward);
    for (int m = 0; m < 8; ++m) EXPECT_NEAR(std::abs(c(m) - (m == 1 ? 1.0 : 0.0)), 0.0, 1e-15);
}

TEST(Geometry, DftMatchesNaiveSummationAndRoundTrips) {
    auto g = Geometry::circle(64);
    Vector u = random_vector(64, 1);
    Vector c = dft(u, g, Direction::forward, Axis::x);
    EXPECT_LE((c - naive_dft(u)).cwiseAbs().maxCoeff(), 1e-13);
    Vector back = dft(c, g, Direction::inverse, Axis::x);
    EXPECT_LE((back - u).cwiseAbs().maxCoeff(), 1e-13);
    // Parseval: ||u||^2 = 2 pi sum |u_hat|^2
    double lhs = GridFunction(g, u).norm();
    EXPECT_NEAR(lhs * lhs, 2 * pi * c.squaredNorm(), 1e-10 * lhs * lhs);
}

TEST(Geometry, DftOnLogAxisUsesShiftedNodes) {
    auto g = Geometry::cone({BaseKind::point, 1, 3.0, 32});
    Vector u(32);
    for (int j = 0; j < 32; ++j) u(j) = std::exp(I * (g.p(5) * g.t(j)));
    Vector c = dft(u, g, Direction::forward, Axis::t);
    for (int m = 0; m < 32; ++m) EXPECT_NEAR(std::abs(c(m) - (m == 5 ? 1.0 : 0.0)), 0.0, 1e-13);
    Vector r = random_vector(32, 4);
    EXPECT_LE((dft(dft(r, g, Direction::forward, Axis::t), g, Direction::inverse, Axis::t) - r).norm(), 1e-13);
    auto interval = Geometry::cone({BaseKind::point, 1, 3.0, 32, BoundaryMode::interval});
    EXPECT_THROW(dft(r, interval, Direction::forward, Axis::t), DomainError);
}

TEST(Geometry, KappaGroupLawAndUnitarity) {
    auto g = Geometry::cone({BaseKind::circle, 8, 4.0, 64}, 2);
    const double lam = std::exp(g.h_t());
    EXPECT_LE((kappa(1.0, g) - Matrix::Identity(g.dim(), g.dim())).norm(), 0.0);
    EXPECT_LE((kappa(lam, g) * kappa(1 / lam, g) - Matrix::Identity(g.dim(), g.dim())).norm(), 1e-12);
    EXPECT_LE((kappa(lam, g) * kappa(lam * lam, g) - kappa(lam * lam * lam, g)).norm(), 1e-12);
    Vector u = random_vector(g.dim(), 7);
    EXPECT_NEAR((kappa(lam * lam, g) * u).norm(), u.norm(), 1e-12 * u.norm());
    EXPECT_THROW(kappa(1.3, g), DomainError);
    EXPECT_THROW(kappa(lam, Geometry::cone({BaseKind::point, 1, 4.0, 64, BoundaryMode::interval})), DomainError);
}

TEST(Geometry, KappaIsTheWeightedDilation) {
    // cone-frame oracle: [kappa u](r) = lambda^{(n+1)/2} u(lambda r) at nodes away from the seam
    auto g = Geometry::cone({BaseKind::point, 1, 4.0, 64});
    const int k = 3;
    const double lam = std::exp(k * g.h_t());
    auto f = [](double r) { return std::exp(-r) * r; };
    Vector u(64);
    for (int j = 0; j < 64; ++j) u(j) = f(g.r(j));
    Vector flat = GridFunction(g, u).to_flat();
    Vector out = GridFunction::from_flat(g, kappa(lam, g) * flat).values();
    for (int j = k; j < 64; ++j) EXPECT_NEAR(std::abs(out(j) - std::pow(lam, 0.5) * f(lam * g.r(j))), 0.0, 1e-12);
}

TEST(Geometry, TranslationProperties) {
    auto g = Geometry::circle(16);
    Matrix id = Matrix::Identity(16, 16);
    EXPECT_LE((translation(0.0, g) - id).norm(), 0.0);
    Matrix t = translation(g.h_x(), g);
    Matrix p = id;
    for (int i = 0; i < 16; ++i) p = p * t;
    EXPECT_LE((p - id).norm(), 1e-12);
    EXPECT_LE((translation(3 * g.h_x(), g) * translation(-3 * g.h_x(), g) - id).norm(), 1e-12);
    EXPECT_THROW(translation(0.1, g), DomainError);
    // commutes with a Fourier multiplier
    Matrix f = unitary_dft(16);
    Vector sym(16);
    for (int m = 0; m < 16; ++m) sym(m) = std::tanh(double(signed_mode(m, 16))) + 0.3 * I;
    Matrix mult = f.adjoint() * sym.asDiagonal() * f;
    EXPECT_LE((mult * t - t * mult).norm(), 1e-12);
    // shift direction: (T_tau u)(x) = u(x + tau)
    Vector u(16);
    for (int j = 0; j < 16; ++j) u(j) = double(j);
    EXPECT_DOUBLE_EQ((t * u)(0).real(), 1.0);
}

TEST(Geometry, DilationTranslationRelations) {
    auto g = Geometry::edge(16, {BaseKind::point, 1, 3.0, 16});
    const int a = 3, k = 2;
    const int ainv = modular_inverse(a, 16);
    for (int c = 0; c < 16; c += 5) {
        double x = c * g.h_x();
        Matrix lhs = edge_dilation(c, a, k, g);
        Matrix rhs = translation(-x, g) * edge_dilation(0, a, k, g) * translation(x, g);
        EXPECT_LE((lhs - rhs).norm(), 1e-12);
        Matrix u0 = edge_dilation(0, a, k, g);
        int shift = (c * ainv) % 16;
        EXPECT_LE((u0 * translation(x, g) - translation(shift * g.h_x(), g) * u0).norm(), 1e-12);
    }
    EXPECT_THROW(edge_dilation(0, 2, 1, g), DomainError);
}

TEST(Geometry, CutoffFamilies) {
    auto g = Geometry::circle(64);
    CutoffFamily everything(g, {0.0, 0.0}, {7.0});
    EXPECT_EQ(everything.bumps()[0].minCoeff(), 1.0);

    CutoffFamily fam(g, {1.0, 0.0}, dyadic_scales(2.0, 3));
    for (std::size_t i = 0; i < fam.size(); ++i) {
        EXPECT_GE(fam.bumps()[i].minCoeff(), 0.0);
        EXPECT_LE(fam.bumps()[i].maxCoeff(), 1.0);
        EXPECT_LE(fam.support_radius(g, i), fam.scales()[i]);
        for (std::size_t j = i + 1; j < fam.size(); ++j)
            EXPECT_LE((fam.bumps()[i].cwiseProduct(fam.bumps()[j]) - fam.bumps()[j]).cwiseAbs().maxCoeff(), 1e-12);
    }
    EXPECT_THROW(CutoffFamily(g, {0.0, 0.0}, {1.0, 0.8}), DomainError);
    EXPECT_THROW(CutoffFamily(g, {0.0, 0.0}, {0.2}), DomainError);

    auto cone = Geometry::cone({BaseKind::point, 1, 8.0, 64});
    CutoffFamily vertex(cone, {0.0, 0.0}, dyadic_scales(1.0, 5));
    EXPECT_EQ(vertex.bumps().back()(63), 1.0);  // last node is the smallest r
    EXPECT_THROW(CutoffFamily(cone, {0.0, 0.0}, {1e-4}), DomainError);
}
