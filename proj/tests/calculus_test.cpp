#include "psdo/calculus.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace psdo;

namespace {

Matrix random_matrix(int r, int c, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d;
    Matrix m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = {d(rng), d(rng)};
    return m;
}

DiscretizedOperator circle_op(const char* src, int n) {
    auto g = Geometry::circle(n);
    return op_circle(InteriorSymbol(parse(src), 1), g);
}

}  // namespace

TEST(Composition, ExpansionTerms) {
    // d_xi chi(xi) * d_x e^{ix}: the first-order term is (-i)(1+xi^2)^{-3/2} (i e^{ix})
    Expr h = composition_expansion(parse("chi(xi)"), parse("exp((0,1)*x)"), 2);
    Bindings b;
    b.set(Var::x, 0.4).set(Var::xi, 1.5);
    Complex want = (1.5 / std::sqrt(1 + 2.25) + std::pow(1 + 2.25, -1.5)) * std::exp(I * 0.4);
    EXPECT_NEAR(std::abs(eval_scalar(h, b) - want), 0.0, 1e-14);
    EXPECT_THROW(composition_expansion(parse("xi"), parse("x"), 7), DomainError);
    EXPECT_THROW(composition_expansion(parse("abs(xi)"), parse("sin(x)"), 2), Error);
}

TEST(Composition, MultiplierOnTheRightComposesExactly) {
    for (int N : {1, 2, 3}) {
        auto res = compose_symbols(parse("exp((0,1)*x)"), parse("chi(xi)"), N, 64);
        EXPECT_TRUE(res.exact) << N;
        for (double r : res.remainders) EXPECT_LE(r, 1e-12);
    }
    auto res = compose_symbols(parse("2 + sin(x)"), parse("exp((0,2)*x)"), 1, 64);
    EXPECT_TRUE(res.exact);
}

TEST(Composition, RemainderDecaysWithOrder) {
    // a multiplier acting after multiplication leaves the full asymptotic series
    for (int N : {1, 2, 3}) {
        auto res = compose_symbols(parse("chi(xi)"), parse("exp((0,1)*x)"), N, 256);
        ASSERT_FALSE(res.exact);
        EXPECT_LE(res.slope, -(N - 0.5)) << N;
        // matches the exact remainder chi(xi+1) - sum of Taylor terms at the probe centres
        for (std::size_t i = 0; i < res.xis.size(); ++i) EXPECT_GT(res.remainders[i], 0.0);
    }
}

TEST(Composition, ProbesAreFrequencyLocalized) {
    auto g = Geometry::circle(128);
    Vector u = frequency_probe(g, 16.0, 2.0);
    EXPECT_NEAR(u.norm(), 1.0, 1e-14);
    Vector c = dft(u, g, Direction::forward, Axis::x);
    double inside = 0.0, total = c.squaredNorm();
    for (int m = 0; m < 128; ++m)
        if (std::abs(signed_mode(m, 128) - 16) <= 8) inside += std::norm(c(m));
    EXPECT_GE(inside / total, 1.0 - 1e-6);
}

TEST(ExtractSymbol, IdentityAndMultipliers) {
    auto g = Geometry::circle(32);
    DiscretizedOperator id{g, 0.0, Matrix::Identity(32, 32)};
    auto s = extract_symbol(id);
    for (const auto& b : s.blocks) EXPECT_NEAR(std::abs(b(0, 0) - 1.0), 0.0, 1e-14);

    auto op = circle_op("chi(xi) + (0,1)*xi/(1+xi^2)", 64);
    auto sym = extract_symbol(op);
    double worst = 0.0;
    for (std::size_t m = 0; m < sym.blocks.size(); ++m) {
        double k = sym.modes[m];
        worst = std::max(worst, std::abs(sym.blocks[m](0, 0) - (k / std::sqrt(1 + k * k) + I * k / (1 + k * k))));
    }
    EXPECT_LE(worst, 1e-12);
    EXPECT_NEAR(sym.sup_block_norm, sym.operator_norm, 1e-10);
}

TEST(ExtractSymbol, RecoversRandomBlocks) {
    auto g = Geometry::circle(16, 2);
    std::vector<Matrix> blocks;
    Matrix diag = Matrix::Zero(32, 32);
    for (int m = 0; m < 16; ++m) {
        blocks.push_back(random_matrix(2, 2, 100 + m));
        diag.block(2 * m, 2 * m, 2, 2) = blocks.back();
    }
    Matrix u = axis_dft_operator(g, Axis::x);
    DiscretizedOperator A{g, 0.0, u.adjoint() * diag * u};
    auto s = extract_symbol(A);
    for (int m = 0; m < 16; ++m) EXPECT_LE((s.blocks[m] - blocks[m]).norm(), 1e-12);
    EXPECT_NEAR(s.sup_block_norm, s.operator_norm, 1e-10 * s.operator_norm);
}

TEST(ExtractSymbol, RejectsNonInvariantOperators) {
    auto op = circle_op("(2 + cos(x)) * chi(xi)", 32);
    try {
        extract_symbol(op);
        FAIL() << "expected NotTranslationInvariant";
    } catch (const NotTranslationInvariant& e) {
        EXPECT_GT(e.off_diagonal(), 0.1);
    }
}

TEST(ExtractSymbol, ConeOperatorsDiagonalizeInT) {
    auto g = Geometry::cone({BaseKind::circle, 8, 4.0, 32});
    auto A = op_mellin(ConeSymbolFamily::parse("(p - (0,1)*xi)/(p + (0,2))", 1, BaseKind::circle), g);
    auto s = extract_symbol(A);
    EXPECT_EQ(s.axis, Axis::t);
    for (std::size_t m = 0; m < s.blocks.size(); ++m) {
        Matrix want = ConeSymbolFamily::parse("(p - (0,1)*xi)/(p + (0,2))", 1, BaseKind::circle).fiber({0, 0, 0, 0, g.p(s.modes[m])}, 8);
        EXPECT_LE((s.blocks[m] - want).norm(), 1e-12);
    }
    EXPECT_NEAR(s.sup_block_norm, s.operator_norm, 1e-10);
}

TEST(LocalSymbol, RoundTripsKohnNirenbergSymbols) {
    const int n = 64;
    auto op = circle_op("(2 + cos(x)) * chi(xi) + sin(2*x)", n);
    Matrix s = local_symbol(op);
    auto g = op.geometry;
    double worst = 0.0;
    for (int j = 0; j < n; ++j)
        for (int m = 0; m < n; ++m) {
            double k = signed_mode(m, n), x = g.x(j);
            worst = std::max(worst, std::abs(s(j, m) - ((2 + std::cos(x)) * k / std::sqrt(1 + k * k) + std::sin(2 * x))));
        }
    EXPECT_LE(worst, 1e-12);
}

TEST(LocalSymbol, ProductSymbolErrorIsFirstOrder) {
    auto defect = [](int n) {
        auto a = circle_op("chi(xi) + 0.5*chi(xi)^2", n);
        auto b = circle_op("2 + cos(x) + (0,1)*sin(x)*chi(xi)", n);
        DiscretizedOperator ab{a.geometry, 0.0, a.matrix * b.matrix};
        Matrix s = local_symbol(ab);
        double worst = 0.0;
        for (int j = 0; j < n; ++j)
            for (int m = 0; m < n; ++m) {
                int k = std::abs(signed_mode(m, n));
                if (k < n / 4 || k > 3 * n / 8) continue;
                double kk = signed_mode(m, n), x = a.geometry.x(j), c = kk / std::sqrt(1 + kk * kk);
                Complex want = (c + 0.5 * c * c) * (2 + std::cos(x) + I * std::sin(x) * c);
                worst = std::max(worst, std::abs(s(j, m) - want));
            }
        return worst;
    };
    double e64 = defect(64), e128 = defect(128);
    EXPECT_LE(e64, 0.1);
    EXPECT_GE(e64 / e128, 1.6) << e64 << " " << e128;
}

TEST(Infinitesimal, FrozenInputIsAFixedPoint) {
    auto g = Geometry::circle(64);
    InteriorSymbol a(parse("1 + 0.5*chi(xi)"), 1);
    CutoffFamily ladder(g, {1.0, 0.0}, dyadic_scales(1.0, 2));
    auto io = infinitesimal(a, g, 1.0, ladder);
    EXPECT_LE((io.frozen - io.original).norm(), 1e-10);
    for (double d : io.right) EXPECT_LE(d, 1e-10);
    EXPECT_TRUE(io.converged);
}

TEST(Infinitesimal, CircleFreezingAndConvergence) {
    auto g = Geometry::circle(256);
    const double z = 1.0;
    InteriorSymbol a(parse("1 + 0.5*chi(xi) + 0.5*sin((x-1)/2)^2"), 1);
    CutoffFamily ladder(g, {z, 0.0}, dyadic_scales(1.2, 5));
    auto io = infinitesimal(a, g, z, ladder);
    Matrix want = op_circle(InteriorSymbol(parse("1 + 0.5*chi(xi)"), 1), g).matrix;
    EXPECT_LE((io.frozen - want).norm(), 1e-12);
    EXPECT_TRUE(io.monotone);
    EXPECT_LE(io.final_value(), 1e-3);
    EXPECT_TRUE(io.converged);
    EXPECT_LE(stratum_commutator(io), 1e-10);
    EXPECT_LE(operator_norm(io.frozen), operator_norm(io.original) * (1 + 1e-12));
    EXPECT_EQ(io.left.size(), io.right.size());
}

TEST(Infinitesimal, FreezingPattern) {
    // a = f(x) chi(xi) at z = 0 freezes to f(0) chi(xi)
    auto g = Geometry::circle(64);
    InteriorSymbol a(parse("(2 + sin(x)) * chi(xi)"), 1);
    CutoffFamily ladder(g, {0.0, 0.0}, dyadic_scales(1.0, 2));
    auto io = infinitesimal(a, g, 0.0, ladder);
    Matrix want = op_circle(InteriorSymbol(parse("2*chi(xi)"), 1), g).matrix;
    EXPECT_LE((io.frozen - want).norm(), 1e-12);
    EXPECT_THROW(infinitesimal(pushforward_interior(a, CircleDiffeo::parse("x + 0.1")), g, 0.0, ladder), DomainError);
}

TEST(Infinitesimal, VertexDiagnosticsHalvePerStep) {
    auto g = Geometry::cone({BaseKind::point, 1, 10.0, 128, BoundaryMode::interval});
    auto P = ConeSymbolFamily::parse("1 + 0.5*r/(1+r)*exp(-p^2/4)");
    CutoffFamily ladder(g, {0.0, 0.0}, dyadic_scales(0.5, 8));
    auto io = infinitesimal(P, g, 0.0, ladder);
    EXPECT_TRUE(io.monotone);
    for (std::size_t i = 2; i < io.right.size(); ++i) {
        double ratio = io.right[i - 1] / io.right[i];
        EXPECT_NEAR(ratio, 2.0, 0.4) << i;
    }
    EXPECT_TRUE(io.converged) << io.final_value();
    EXPECT_LE(stratum_commutator(io), 1e-10);
    EXPECT_LE(operator_norm(io.frozen), operator_norm(io.original) * (1 + 1e-12));
}

TEST(Infinitesimal, PeriodicVertexFreezingCommutesWithDilations) {
    auto g = Geometry::cone({BaseKind::circle, 8, 4.0, 32});
    auto P = ConeSymbolFamily::parse("1 + 0.5*r/(1+r)*chi(xi) + 0.2*chi(p)", 1, BaseKind::circle);
    CutoffFamily ladder(g, {0.0, 0.0}, dyadic_scales(0.5, 2));
    auto io = infinitesimal(P, g, 0.0, ladder);
    EXPECT_LE(stratum_commutator(io), 1e-10);
    EXPECT_GT(operator_norm(io.original * kappa_steps(1, g) - kappa_steps(1, g) * io.original), 1e-3);
}

TEST(Infinitesimal, EdgeFreezingCommutesWithTranslations) {
    auto g = Geometry::edge(16, {BaseKind::point, 1, 4.0, 32});
    auto P = ConeSymbolFamily::parse("1 + 0.3*cos(x)*r/(1+r) + 0.2*chi(eta)");
    CutoffFamily ladder(g, {0.5, 0.0}, {2.0});
    auto io = infinitesimal(P, g, 0.5, ladder);
    EXPECT_LE(stratum_commutator(io), 1e-10);
    EXPECT_LE(operator_norm(io.frozen), operator_norm(io.original) * (1 + 1e-12));
    EXPECT_THROW(infinitesimal(P, Geometry::circle(16), 0.0, ladder), DomainError);
}

TEST(Infinitesimal, ConsistencyAcrossLadders) {
    auto g = Geometry::circle(256);
    InteriorSymbol a(parse("1 + 0.5*chi(xi) + 0.5*sin((x-1)/2)^2"), 1);
    CutoffFamily l1(g, {1.0, 0.0}, dyadic_scales(1.2, 5));
    CutoffFamily l2(g, {1.0, 0.0}, dyadic_scales(0.9, 4));
    auto same = consistency_check(a, g, 1.0, l1, l1);
    EXPECT_TRUE(same.pass);
    EXPECT_EQ(same.final_a, same.final_b);
    auto shifted = consistency_check(a, g, 1.0, l1, l2);
    EXPECT_TRUE(shifted.frozen_identical);
    EXPECT_TRUE(shifted.pass) << shifted.final_a << " " << shifted.final_b;
    auto frozen = consistency_check(InteriorSymbol(parse("chi(xi)"), 1), g, 1.0, l1, l2);
    EXPECT_EQ(frozen.final_a, 0.0);
    EXPECT_EQ(frozen.final_b, 0.0);
}

TEST(Adjoint, InnerProductOracle) {
    auto g = Geometry::cone({BaseKind::circle, 8, 3.0, 8});
    DiscretizedOperator A{g, 0.0, random_matrix(g.dim(), g.dim(), 5)};
    auto As = adjoint(A);
    EXPECT_EQ((adjoint(As).matrix - A.matrix).norm(), 0.0);
    // weighted inner product of native grid functions, operators acting in the flat frame
    auto inner = [&](const Vector& a, const Vector& b) {
        return (GridFunction::expand(g, g.weights()).cwiseProduct(a.conjugate()).cwiseProduct(b)).sum();
    };
    double worst = 0.0;
    for (unsigned s = 0; s < 10; ++s) {
        Vector u = random_matrix(g.dim(), 1, 20 + s), w = random_matrix(g.dim(), 1, 40 + s);
        Vector Au = GridFunction::from_flat(g, A.matrix * GridFunction(g, u).to_flat()).values();
        Vector Asw = GridFunction::from_flat(g, As.matrix * GridFunction(g, w).to_flat()).values();
        worst = std::max(worst, std::abs(inner(Au, w) - inner(u, Asw)) / (u.norm() * w.norm() * A.norm()));
    }
    EXPECT_LE(worst, 1e-12);
    auto id = adjoint(DiscretizedOperator{g, 0.0, Matrix::Identity(g.dim(), g.dim())});
    EXPECT_EQ((id.matrix - Matrix::Identity(g.dim(), g.dim())).norm(), 0.0);
}
