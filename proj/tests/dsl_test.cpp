#include "psdo/dsl.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace psdo;

namespace {

Bindings at(std::initializer_list<std::pair<Var, Complex>> vals) {
    Bindings b;
    for (auto& [v, c] : vals) b.set(v, c);
    return b;
}

// Independent reference interpreter: walks the tree with plain recursion on std::complex,
// without the library's folding or broadcasting helpers (scalar trees only).
Complex reference_eval(const Expr& e, const std::map<Var, Complex>& env) {
    using K = Expr::Kind;
    auto a0 = [&] { return reference_eval(e.arg(0), env); };
    auto a1 = [&] { return reference_eval(e.arg(1), env); };
    switch (e.kind()) {
        case K::constant: return e.value();
        case K::variable: return env.at(e.var());
        case K::neg: return -a0();
        case K::add: return a0() + a1();
        case K::sub: return a0() - a1();
        case K::mul: return a0() * a1();
        case K::div: return a0() / a1();
        case K::pow: return std::pow(a0(), double(e.exponent()));
        case K::func: {
            Complex u = a0();
            switch (e.fn()) {
                case Func::exp: return std::exp(u);
                case Func::log: return std::log(u);
                case Func::sin: return std::sin(u);
                case Func::cos: return std::cos(u);
                case Func::sqrt: return std::sqrt(u);
                case Func::conj: return std::conj(u);
                case Func::re: return u.real();
                case Func::im: return u.imag();
                case Func::abs: return std::abs(u);
                case Func::chi: return u / std::sqrt(1.0 + u * u);
            }
        }
        default: break;
    }
    return 0.0;
}

// Random scalar tree over x, xi with bounded values.
Expr random_tree(std::mt19937_64& rng, int depth) {
    std::uniform_int_distribution<int> pick(0, depth <= 0 ? 2 : 9);
    std::uniform_real_distribution<double> c(-2.0, 2.0);
    switch (pick(rng)) {
        case 0: return constant({c(rng), c(rng)});
        case 1: return var(Var::x);
        case 2: return var(Var::xi);
        case 3: return random_tree(rng, depth - 1) + random_tree(rng, depth - 1);
        case 4: return random_tree(rng, depth - 1) - random_tree(rng, depth - 1);
        case 5: return random_tree(rng, depth - 1) * random_tree(rng, depth - 1);
        case 6: return random_tree(rng, depth - 1) / (constant(3.0) + call(Func::chi, random_tree(rng, depth - 1)));
        case 7: return pow(random_tree(rng, depth - 1), 2);
        case 8: return call(Func::sin, random_tree(rng, depth - 1));
        default: return call(Func::exp, constant(0.1) * random_tree(rng, depth - 1));
    }
}

}  // namespace

TEST(Dsl, ParsesConstantsAndRationals) {
    EXPECT_EQ(eval_scalar(parse("1", 1), {}), Complex(1.0));
    Expr g = parse("(p - (0,1))/(p + (0,1))");
    EXPECT_NEAR(std::abs(eval_scalar(g, at({{Var::p, 0.0}})) - Complex(-1.0)), 0.0, 1e-15);
}

TEST(Dsl, ChiProxyOracle) {
    Expr e = parse("exp((0,1)*x)*chi(xi) ");
    Complex val = eval_scalar(e, at({{Var::x, pi / 2}, {Var::xi, 1e3}}));
    Complex expected = I * (1e3 / std::sqrt(1.0 + 1e6));
    EXPECT_NEAR(std::abs(val - expected), 0.0, 1e-14);
    EXPECT_NEAR(std::abs(val - I) / 1.0, 5e-7, 1e-9);
}

TEST(Dsl, Precedence) {
    auto b = at({{Var::x, 2.0}, {Var::xi, 3.0}});
    EXPECT_EQ(eval_scalar(parse("-x^2"), b), Complex(-4.0));
    EXPECT_EQ(eval_scalar(parse("1 + x*xi"), b), Complex(7.0));
    EXPECT_EQ(eval_scalar(parse("x - xi - 1"), b), Complex(-2.0));
    EXPECT_EQ(eval_scalar(parse("x / xi * 3"), b), Complex(2.0));
    EXPECT_EQ(eval_scalar(parse("x^-2"), b), Complex(0.25));
    EXPECT_EQ(eval_scalar(parse("x + xi"), b), Complex(5.0));
    EXPECT_EQ(eval_scalar(parse("(-1.5e1, 2)"), b), Complex(-15.0, 2.0));
}

TEST(Dsl, ErrorsCarryPosition) {
    try {
        parse("1 +\n  * x");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2);
        EXPECT_EQ(e.column(), 3);
        EXPECT_EQ(e.offset(), 6u);
    }
    EXPECT_THROW(parse("foo(x)"), UnknownIdentifier);
    EXPECT_THROW(parse("x +"), ParseError);
    EXPECT_THROW(parse("(1, )"), ParseError);
    EXPECT_THROW(parse("x ^ y"), ParseError);
    EXPECT_THROW(parse("x)"), ParseError);
    EXPECT_THROW(parse("[[1,2],[3]]"), ShapeError);
    EXPECT_THROW(parse("[[1,0],[0,1]] + [[1,0,0],[0,1,0],[0,0,1]]"), ShapeError);
    EXPECT_THROW(parse("x / [[1,0],[0,1]]"), ShapeError);
    EXPECT_THROW(parse("exp([[1,0],[0,1]])"), ShapeError);
    EXPECT_THROW(parse("[[1,0],[0,1]]", 3), ShapeError);
}

TEST(Dsl, EvaluationErrors) {
    EXPECT_THROW(eval_scalar(parse("1/x"), at({{Var::x, 0.0}})), EvalError);
    EXPECT_THROW(eval_scalar(parse("x + xi"), at({{Var::x, 1.0}})), EvalError);
    EXPECT_THROW(eval_scalar(parse("log(x)"), at({{Var::x, 0.0}})), EvalError);
}

TEST(Dsl, MatricesAndBroadcast) {
    Matrix id = eval(parse("[[1,0],[0,1]]"), {});
    EXPECT_EQ(id, Matrix::Identity(2, 2));
    Matrix m = eval(parse("2 + [[0,1],[1,0]] * x"), at({{Var::x, 3.0}}));
    Matrix expected(2, 2);
    expected << 2, 3, 3, 2;
    EXPECT_EQ(m, expected);
    EXPECT_EQ(eval(parse("3"), {}, 2), 3.0 * Matrix::Identity(2, 2));
    Matrix c = eval(parse("conj([[(0,1), 0],[0, x]])"), at({{Var::x, Complex(0, 2)}}));
    EXPECT_EQ(c(0, 0), Complex(0, -1));
    EXPECT_EQ(c(1, 1), Complex(0, -2));
    Matrix inv = eval(parse("[[2,1],[0,1]]^-1"), {});
    EXPECT_LE((inv * eval(parse("[[2,1],[0,1]]"), {}) - Matrix::Identity(2, 2)).norm(), 1e-15);
}

TEST(Dsl, TIsMinusLogR) {
    Expr e = parse("exp(-t)");
    EXPECT_NEAR(std::abs(eval_scalar(e, at({{Var::r, 0.25}})) - 0.25), 0.0, 1e-15);
    EXPECT_EQ(eval_scalar(e, at({{Var::r, 0.0}})), Complex(0.0));
}

TEST(Dsl, MatchesReferenceInterpreter) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        Expr e = random_tree(rng, 4);
        std::map<Var, Complex> env{{Var::x, u(rng)}, {Var::xi, u(rng)}};
        Bindings b = at({{Var::x, env[Var::x]}, {Var::xi, env[Var::xi]}});
        Complex ref = reference_eval(e, env);
        EXPECT_NEAR(std::abs(eval_scalar(e, b) - ref), 0.0, 1e-12 * (1 + std::abs(ref)));
    }
}

TEST(Dsl, PrintParseRoundTrip) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        Expr e = parse(to_string(random_tree(rng, 4)));
        EXPECT_TRUE(parse(to_string(e)) == e) << to_string(e);
    }
    for (const char* src : {"-x^2", "(p - (0,1))/(p + (0,1))", "[[1, x], [-(2.5), chi(eta)]]", "x^-3 * exp((0,1)*t)",
                            "-(-x)", "(-2)^3", "conj(re(im(abs(w))))"}) {
        Expr e = parse(src);
        EXPECT_TRUE(parse(to_string(e)) == e) << src << " -> " << to_string(e);
    }
    EXPECT_FALSE(parse("x + xi") == parse("xi + x"));
}

TEST(Dsl, DiffClosedForms) {
    Expr d = diff(parse("x^2"), Var::x);
    for (double x : {-1.0, 0.5, 3.0}) EXPECT_NEAR(std::abs(eval_scalar(d, at({{Var::x, x}})) - 2 * x), 0.0, 1e-14);
    EXPECT_NEAR(std::abs(eval_scalar(diff(parse("chi(xi)"), Var::xi), at({{Var::xi, 0.0}})) - 1.0), 0.0, 1e-15);
    EXPECT_THROW(diff(parse("abs(x)"), Var::x), EvalError);
    EXPECT_TRUE(diff(parse("xi^3"), Var::x).is_zero());
}

TEST(Dsl, DiffMatchesFiniteDifferences) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_int_distribution<int> deg(1, 5);
    for (int trial = 0; trial < 50; ++trial) {
        // random polynomial in x with random complex coefficients
        Expr poly = constant(0.0);
        int n = deg(rng);
        for (int k = 0; k <= n; ++k) poly = poly + constant({u(rng), u(rng)}) * pow(var(Var::x), k);
        Expr d = diff(poly, Var::x);
        double x = u(rng);
        const double h = 1e-5;
        Complex fd = (eval_scalar(poly, at({{Var::x, x + h}})) - eval_scalar(poly, at({{Var::x, x - h}}))) / (2 * h);
        Complex ex = eval_scalar(d, at({{Var::x, x}}));
        EXPECT_LE(std::abs(fd - ex), 1e-7 * std::max(1.0, std::abs(ex)));
    }
}

TEST(Dsl, DiffIsLinearAndSatisfiesProductRule) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        Expr e1 = random_tree(rng, 3), e2 = random_tree(rng, 3);
        Complex a{u(rng), u(rng)};
        Bindings b = at({{Var::x, u(rng)}, {Var::xi, u(rng)}});
        Complex lin = eval_scalar(diff(constant(a) * e1 + e2, Var::x), b);
        Complex sum = a * eval_scalar(diff(e1, Var::x), b) + eval_scalar(diff(e2, Var::x), b);
        EXPECT_LE(std::abs(lin - sum), 1e-10 * (1 + std::abs(sum)));
        Complex prod = eval_scalar(diff(e1 * e2, Var::x), b);
        Complex rule = eval_scalar(diff(e1, Var::x), b) * eval_scalar(e2, b) + eval_scalar(e1, b) * eval_scalar(diff(e2, Var::x), b);
        EXPECT_LE(std::abs(prod - rule), 1e-10 * (1 + std::abs(rule)));
    }
}

TEST(Dsl, MatrixDiffKeepsOrder) {
    Expr a = parse("[[x, 1], [0, 2*x]]");
    Expr b = parse("[[0, x^2], [x, 1]]");
    Bindings pt = at({{Var::x, 0.7}});
    const double h = 1e-6;
    Matrix fd = (eval(a * b, at({{Var::x, 0.7 + h}})) - eval(a * b, at({{Var::x, 0.7 - h}}))) / (2 * h);
    EXPECT_LE((eval(diff(a * b, Var::x), pt) - fd).norm(), 1e-8);
    Expr inv = pow(a, -2);
    Matrix fd2 = (eval(inv, at({{Var::x, 0.7 + h}})) - eval(inv, at({{Var::x, 0.7 - h}}))) / (2 * h);
    EXPECT_LE((eval(diff(inv, Var::x), pt) - fd2).norm(), 1e-7);
}

TEST(Dsl, SubstitutionIsSimultaneous) {
    Expr e = parse("x - xi");
    Expr s = substitute(e, Substitution{{Var::x, var(Var::xi)}, {Var::xi, var(Var::x)}});
    EXPECT_EQ(eval_scalar(s, at({{Var::x, 1.0}, {Var::xi, 5.0}})), Complex(4.0));
    Expr t = substitute(parse("exp(-t) + r"), Var::r, constant(0.5));
    EXPECT_NEAR(std::abs(eval_scalar(t, {}) - 1.0), 0.0, 1e-15);
}
