#pragma once

#include "psdo/core.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

namespace psdo {

/// Symbol variables: edge coordinate x, its dual xi, radial r, log-radial t = -log r, Mellin dual p,
/// parameter v, and the rescaled w = r v, eta = r xi.
enum class Var : int { x, xi, r, t, p, v, w, eta };
inline constexpr int var_count = 8;

inline const char* var_name(Var v) {
    static const char* names[] = {"x", "xi", "r", "t", "p", "v", "w", "eta"};
    return names[static_cast<int>(v)];
}

inline std::optional<Var> var_from_name(std::string_view s) {
    for (int i = 0; i < var_count; ++i)
        if (s == var_name(static_cast<Var>(i))) return static_cast<Var>(i);
    return std::nullopt;
}

/// Syntax error with byte offset and 1-based line/column.
class ParseError : public Error {
public:
    ParseError(std::size_t offset, int line, int column, std::string expected)
        : Error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": expected " + expected),
          offset_(offset), line_(line), column_(column), expected_(std::move(expected)) {}
    std::size_t offset() const { return offset_; }
    int line() const { return line_; }
    int column() const { return column_; }
    const std::string& expected() const { return expected_; }

private:
    std::size_t offset_;
    int line_, column_;
    std::string expected_;
};

class UnknownIdentifier : public ParseError {
public:
    UnknownIdentifier(std::size_t offset, int line, int column, const std::string& name)
        : ParseError(offset, line, column, "a known variable or function, got '" + name + "'"), name_(name) {}
    const std::string& name() const { return name_; }

private:
    std::string name_;
};

/// Operand shapes disagree (matrix sizes, matrix in a scalar-only position).
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Variable assignment for evaluation.
class Bindings {
public:
    Bindings& set(Var v, Complex value) {
        values_[static_cast<int>(v)] = value;
        bound_ |= 1u << static_cast<int>(v);
        return *this;
    }
    bool bound(Var v) const { return bound_ & (1u << static_cast<int>(v)); }
    Complex get(Var v) const {
        if (!bound(v)) throw EvalError(std::string("unbound variable '") + var_name(v) + "'");
        return values_[static_cast<int>(v)];
    }

private:
    std::array<Complex, var_count> values_{};
    unsigned bound_ = 0;
};

enum class Func { exp, log, sin, cos, sqrt, conj, re, im, abs, chi };

inline const char* func_name(Func f) {
    static const char* names[] = {"exp", "log", "sin", "cos", "sqrt", "conj", "re", "im", "abs", "chi"};
    return names[static_cast<int>(f)];
}

inline std::optional<Func> func_from_name(std::string_view s) {
    for (int i = 0; i <= static_cast<int>(Func::chi); ++i)
        if (s == func_name(static_cast<Func>(i))) return static_cast<Func>(i);
    return std::nullopt;
}

inline bool entrywise(Func f) { return f == Func::conj || f == Func::re || f == Func::im || f == Func::abs; }

/// Immutable expression tree; copies share nodes.
class Expr {
public:
    enum class Kind { constant, variable, neg, add, sub, mul, div, pow, func, matrix };

    Expr() : Expr(constant(0.0)) {}

    static Expr constant(Complex c) {
        auto n = std::make_shared<Node>();
        n->kind = Kind::constant;
        n->value = c;
        return Expr(std::move(n));
    }
    static Expr variable(Var v) {
        auto n = std::make_shared<Node>();
        n->kind = Kind::variable;
        n->var = v;
        return Expr(std::move(n));
    }
    static Expr unary_neg(Expr a) {
        if (a.is_constant()) return constant(-a.value());
        if (a.kind() == Kind::neg) return a.arg(0);
        return make(Kind::neg, {std::move(a)});
    }
    static Expr binary(Kind k, Expr a, Expr b) {
        int sa = a.shape(), sb = b.shape();
        switch (k) {
            case Kind::add:
            case Kind::sub:
            case Kind::mul:
                if (sa > 1 && sb > 1 && sa != sb)
                    throw ShapeError("matrix operands of sizes " + std::to_string(sa) + " and " + std::to_string(sb));
                break;
            case Kind::div:
                if (sb > 1) throw ShapeError("division by a matrix is not supported");
                break;
            default: throw ShapeError("not a binary operator");
        }
        return make(k, {std::move(a), std::move(b)});
    }
    static Expr power(Expr base, int n) {
        auto e = make(Kind::pow, {std::move(base)});
        std::const_pointer_cast<Node>(e.node_)->exponent = n;
        return e;
    }
    static Expr function(Func f, Expr a) {
        if (!entrywise(f) && a.shape() > 1) throw ShapeError(std::string(func_name(f)) + " needs a scalar argument");
        auto e = make(Kind::func, {std::move(a)});
        std::const_pointer_cast<Node>(e.node_)->fn = f;
        std::const_pointer_cast<Node>(e.node_)->shape = e.arg(0).shape();
        return e;
    }
    /// Square matrix literal from row-major scalar entries.
    static Expr matrix(int rows, std::vector<Expr> entries) {
        if (rows < 1 || static_cast<int>(entries.size()) != rows * rows) throw ShapeError("matrix literal must be square");
        for (const auto& en : entries)
            if (en.shape() != 1) throw ShapeError("matrix entries must be scalars");
        auto n = std::make_shared<Node>();
        n->kind = Kind::matrix;
        n->args = std::move(entries);
        n->shape = rows;
        return Expr(std::move(n));
    }

    Kind kind() const { return node_->kind; }
    Complex value() const { return node_->value; }
    Var var() const { return node_->var; }
    Func fn() const { return node_->fn; }
    int exponent() const { return node_->exponent; }
    const Expr& arg(std::size_t i) const { return node_->args.at(i); }
    std::size_t arity() const { return node_->args.size(); }
    /// 1 for scalars, q for q x q matrices.
    int shape() const { return node_->shape; }
    bool is_constant() const { return kind() == Kind::constant; }
    bool is_zero() const { return is_constant() && value() == Complex(0.0); }
    bool is_one() const { return is_constant() && value() == Complex(1.0); }

    bool uses(Var v) const {
        if (kind() == Kind::variable) return var() == v || (v == Var::r && var() == Var::t);
        for (const auto& a : node_->args)
            if (a.uses(v)) return true;
        return false;
    }
    bool uses_literally(Var v) const {
        if (kind() == Kind::variable) return var() == v;
        for (const auto& a : node_->args)
            if (a.uses_literally(v)) return true;
        return false;
    }

    friend bool operator==(const Expr& a, const Expr& b) {
        if (a.node_ == b.node_) return true;
        if (a.kind() != b.kind() || a.arity() != b.arity() || a.shape() != b.shape()) return false;
        switch (a.kind()) {
            case Kind::constant: return a.value() == b.value();
            case Kind::variable: return a.var() == b.var();
            case Kind::pow:
                if (a.exponent() != b.exponent()) return false;
                break;
            case Kind::func:
                if (a.fn() != b.fn()) return false;
                break;
            default: break;
        }
        for (std::size_t i = 0; i < a.arity(); ++i)
            if (!(a.arg(i) == b.arg(i))) return false;
        return true;
    }

private:
    struct Node {
        Kind kind = Kind::constant;
        Complex value{};
        Var var = Var::x;
        Func fn = Func::exp;
        int exponent = 1;
        int shape = 1;
        std::vector<Expr> args;
    };

    explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}

    static Expr make(Kind k, std::vector<Expr> args) {
        auto n = std::make_shared<Node>();
        n->kind = k;
        int s = 1;
        for (const auto& a : args) s = std::max(s, a.shape());
        n->shape = s;
        n->args = std::move(args);
        return Expr(std::move(n));
    }

    std::shared_ptr<const Node> node_;
};

// ---- construction helpers with light constant folding ----

inline Expr operator+(const Expr& a, const Expr& b) {
    if (a.is_constant() && b.is_constant()) return Expr::constant(a.value() + b.value());
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    return Expr::binary(Expr::Kind::add, a, b);
}
inline Expr operator-(const Expr& a, const Expr& b) {
    if (a.is_constant() && b.is_constant()) return Expr::constant(a.value() - b.value());
    if (b.is_zero()) return a;
    if (a.is_zero()) return Expr::unary_neg(b);
    return Expr::binary(Expr::Kind::sub, a, b);
}
inline Expr operator-(const Expr& a) { return Expr::unary_neg(a); }
inline Expr operator*(const Expr& a, const Expr& b) {
    if (a.is_constant() && b.is_constant()) return Expr::constant(a.value() * b.value());
    if (a.is_zero() || b.is_zero()) {
        // keep shape checking honest even when folding
        if (a.shape() > 1 && b.shape() > 1 && a.shape() != b.shape()) throw ShapeError("matrix size mismatch");
        return Expr::constant(0.0);
    }
    if (a.is_one()) return b;
    if (b.is_one()) return a;
    return Expr::binary(Expr::Kind::mul, a, b);
}
inline Expr operator/(const Expr& a, const Expr& b) {
    if (b.shape() > 1) throw ShapeError("division by a matrix is not supported");
    if (a.is_constant() && b.is_constant() && b.value() != Complex(0.0)) return Expr::constant(a.value() / b.value());
    if (a.is_zero()) return a;
    if (b.is_one()) return a;
    return Expr::binary(Expr::Kind::div, a, b);
}
inline Expr pow(const Expr& b, int n) {
    if (n == 0) return Expr::constant(1.0);
    if (n == 1) return b;
    if (b.is_constant() && b.shape() == 1 && !(n < 0 && b.is_zero())) return Expr::constant(std::pow(b.value(), n));
    return Expr::power(b, n);
}
inline Expr call(Func f, const Expr& a) { return Expr::function(f, a); }
inline Expr constant(Complex c) { return Expr::constant(c); }
inline Expr var(Var v) { return Expr::variable(v); }

// ---- evaluation ----

namespace detail {

inline Complex scalar_func(Func f, Complex u) {
    switch (f) {
        case Func::exp: return std::exp(u);
        case Func::log:
            if (u == Complex(0.0)) throw EvalError("log of zero");
            return std::log(u);
        case Func::sin: return std::sin(u);
        case Func::cos: return std::cos(u);
        case Func::sqrt: return std::sqrt(u);
        case Func::conj: return std::conj(u);
        case Func::re: return u.real();
        case Func::im: return u.imag();
        case Func::abs: return std::abs(u);
        case Func::chi: return u / std::sqrt(1.0 + u * u);
    }
    return u;
}

inline Complex checked_div(Complex a, Complex b) {
    if (b == Complex(0.0)) throw EvalError("division by zero");
    return a / b;
}

inline Complex lookup(const Bindings& b, Var v) {
    if (v == Var::t && !b.bound(Var::t)) {
        Complex r = b.get(Var::r);
        if (r == Complex(0.0)) return std::numeric_limits<double>::infinity();
        return -std::log(r);
    }
    return b.get(v);
}

inline Complex eval_scalar(const Expr& e, const Bindings& b) {
    using K = Expr::Kind;
    switch (e.kind()) {
        case K::constant: return e.value();
        case K::variable: return lookup(b, e.var());
        case K::neg: return -eval_scalar(e.arg(0), b);
        case K::add: return eval_scalar(e.arg(0), b) + eval_scalar(e.arg(1), b);
        case K::sub: return eval_scalar(e.arg(0), b) - eval_scalar(e.arg(1), b);
        case K::mul: {
            Complex l = eval_scalar(e.arg(0), b);
            if (l == Complex(0.0)) {
                Complex r = eval_scalar(e.arg(1), b);
                return std::isfinite(std::abs(r)) ? Complex(0.0) : l * r;
            }
            return l * eval_scalar(e.arg(1), b);
        }
        case K::div: return checked_div(eval_scalar(e.arg(0), b), eval_scalar(e.arg(1), b));
        case K::pow: {
            Complex base = eval_scalar(e.arg(0), b);
            if (e.exponent() < 0 && base == Complex(0.0)) throw EvalError("division by zero");
            Complex out = 1.0;
            int n = std::abs(e.exponent());
            for (int i = 0; i < n; ++i) out *= base;
            return e.exponent() < 0 ? 1.0 / out : out;
        }
        case K::func: return scalar_func(e.fn(), eval_scalar(e.arg(0), b));
        case K::matrix: return eval_scalar(e.arg(0), b);
    }
    return 0.0;
}

inline Matrix broadcast(const Matrix& m, int q) {
    if (m.rows() == q) return m;
    return m(0, 0) * Matrix::Identity(q, q);
}

inline Matrix eval_matrix(const Expr& e, const Bindings& b) {
    using K = Expr::Kind;
    if (e.shape() == 1) return Matrix::Constant(1, 1, eval_scalar(e, b));
    const int q = e.shape();
    switch (e.kind()) {
        case K::neg: return -eval_matrix(e.arg(0), b);
        case K::add: return broadcast(eval_matrix(e.arg(0), b), q) + broadcast(eval_matrix(e.arg(1), b), q);
        case K::sub: return broadcast(eval_matrix(e.arg(0), b), q) - broadcast(eval_matrix(e.arg(1), b), q);
        case K::mul: {
            Matrix l = eval_matrix(e.arg(0), b), r = eval_matrix(e.arg(1), b);
            if (l.rows() == 1) return l(0, 0) * r;
            if (r.rows() == 1) return l * r(0, 0);
            return l * r;
        }
        case K::div: {
            Complex d = eval_scalar(e.arg(1), b);
            if (d == Complex(0.0)) throw EvalError("division by zero");
            return eval_matrix(e.arg(0), b) / d;
        }
        case K::pow: {
            Matrix base = eval_matrix(e.arg(0), b);
            int n = e.exponent();
            if (n < 0) {
                Eigen::PartialPivLU<Matrix> lu(base);
                if (std::abs(lu.determinant()) == 0.0) throw EvalError("singular matrix raised to a negative power");
                base = lu.inverse();
                n = -n;
            }
            Matrix out = Matrix::Identity(q, q);
            for (int i = 0; i < n; ++i) out = out * base;
            return out;
        }
        case K::func: {
            Matrix m = eval_matrix(e.arg(0), b);
            return m.unaryExpr([f = e.fn()](Complex c) { return scalar_func(f, c); });
        }
        case K::matrix: {
            Matrix m(q, q);
            for (int i = 0; i < q; ++i)
                for (int j = 0; j < q; ++j) m(i, j) = eval_scalar(e.arg(i * q + j), b);
            return m;
        }
        default: break;
    }
    throw EvalError("malformed expression");
}

}  // namespace detail

/// Value of e as a q x q matrix (scalars broadcast to s I).
inline Matrix eval(const Expr& e, const Bindings& b, int q = 0) {
    Matrix m = detail::eval_matrix(e, b);
    if (q == 0) q = e.shape();
    if (m.rows() != q && m.rows() != 1) throw ShapeError("expression shape does not match declared fiber dimension");
    return detail::broadcast(m, q);
}

/// Fast path for scalar expressions.
inline Complex eval_scalar(const Expr& e, const Bindings& b) {
    if (e.shape() != 1) throw ShapeError("eval_scalar on a matrix expression");
    return detail::eval_scalar(e, b);
}

// ---- substitution and differentiation ----

using Substitution = std::map<Var, Expr>;

/// Simultaneous substitution of variables. Substituting r also rewrites t = -log r.
inline Expr substitute(const Expr& e, const Substitution& s) {
    using K = Expr::Kind;
    switch (e.kind()) {
        case K::constant: return e;
        case K::variable: {
            auto it = s.find(e.var());
            if (it != s.end()) return it->second;
            if (e.var() == Var::t) {
                auto r = s.find(Var::r);
                if (r != s.end()) return -call(Func::log, r->second);
            }
            return e;
        }
        case K::neg: return -substitute(e.arg(0), s);
        case K::add: return substitute(e.arg(0), s) + substitute(e.arg(1), s);
        case K::sub: return substitute(e.arg(0), s) - substitute(e.arg(1), s);
        case K::mul: return substitute(e.arg(0), s) * substitute(e.arg(1), s);
        case K::div: return substitute(e.arg(0), s) / substitute(e.arg(1), s);
        case K::pow: return pow(substitute(e.arg(0), s), e.exponent());
        case K::func: {
            Expr a = substitute(e.arg(0), s);
            if (a.is_constant() && e.fn() != Func::log) return constant(detail::scalar_func(e.fn(), a.value()));
            return call(e.fn(), a);
        }
        case K::matrix: {
            std::vector<Expr> entries;
            for (std::size_t i = 0; i < e.arity(); ++i) entries.push_back(substitute(e.arg(i), s));
            return Expr::matrix(e.shape(), std::move(entries));
        }
    }
    return e;
}

inline Expr substitute(const Expr& e, Var v, const Expr& by) { return substitute(e, Substitution{{v, by}}); }

/// Exact symbolic derivative. t and r are independent variables here; use substitution to
/// express one through the other first if needed.
inline Expr diff(const Expr& e, Var v) {
    using K = Expr::Kind;
    switch (e.kind()) {
        case K::constant: return constant(0.0);
        case K::variable: return constant(e.var() == v ? 1.0 : 0.0);
        case K::neg: return -diff(e.arg(0), v);
        case K::add: return diff(e.arg(0), v) + diff(e.arg(1), v);
        case K::sub: return diff(e.arg(0), v) - diff(e.arg(1), v);
        case K::mul: return diff(e.arg(0), v) * e.arg(1) + e.arg(0) * diff(e.arg(1), v);
        case K::div: {
            const Expr &a = e.arg(0), &b = e.arg(1);
            return diff(a, v) / b - a * diff(b, v) / pow(b, 2);
        }
        case K::pow: {
            const Expr& b = e.arg(0);
            const int n = e.exponent();
            Expr db = diff(b, v);
            if (db.is_zero()) return constant(0.0);
            if (b.shape() == 1) return constant(double(n)) * pow(b, n - 1) * db;
            // noncommutative: d(B^n) = sum_k B^k B' B^{n-1-k}; negative powers through B^{-1}
            Expr base = b, dbase = db;
            int m = n;
            if (n < 0) {
                base = pow(b, -1);
                dbase = -(base * db * base);
                m = -n;
            }
            Expr out = constant(0.0);
            for (int k = 0; k < m; ++k) out = out + pow(base, k) * dbase * pow(base, m - 1 - k);
            return out;
        }
        case K::func: {
            const Expr& u = e.arg(0);
            Expr du = diff(u, v);
            if (e.fn() == Func::abs) throw EvalError("abs is not differentiable");
            if (du.is_zero()) return constant(0.0);
            switch (e.fn()) {
                case Func::exp: return e * du;
                case Func::log: return du / u;
                case Func::sin: return call(Func::cos, u) * du;
                case Func::cos: return -(call(Func::sin, u) * du);
                case Func::sqrt: return du / (constant(2.0) * e);
                case Func::conj:
                case Func::re:
                case Func::im: return call(e.fn(), du);
                case Func::chi: return pow(call(Func::sqrt, constant(1.0) + pow(u, 2)), -3) * du;
                case Func::abs: break;
            }
            break;
        }
        case K::matrix: {
            std::vector<Expr> entries;
            for (std::size_t i = 0; i < e.arity(); ++i) entries.push_back(diff(e.arg(i), v));
            return Expr::matrix(e.shape(), std::move(entries));
        }
    }
    throw EvalError("malformed expression");
}

inline Expr diff(const Expr& e, Var v, int order) {
    Expr out = e;
    for (int i = 0; i < order; ++i) out = diff(out, v);
    return out;
}

// ---- printing ----

namespace detail {

inline std::string format_double(double d) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, d);
    return std::string(buf, res.ptr);
}

inline void print(const Expr& e, std::string& out) {
    using K = Expr::Kind;
    switch (e.kind()) {
        case K::constant: {
            Complex c = e.value();
            if (c.imag() == 0.0 && c.real() >= 0.0 && !std::signbit(c.real()))
                out += format_double(c.real());
            else
                out += "(" + format_double(c.real()) + ", " + format_double(c.imag()) + ")";
            return;
        }
        case K::variable: out += var_name(e.var()); return;
        case K::neg:
            out += "(-";
            print(e.arg(0), out);
            out += ")";
            return;
        case K::add:
        case K::sub:
        case K::mul:
        case K::div: {
            const char* op = e.kind() == K::add ? " + " : e.kind() == K::sub ? " - " : e.kind() == K::mul ? " * " : " / ";
            out += "(";
            print(e.arg(0), out);
            out += op;
            print(e.arg(1), out);
            out += ")";
            return;
        }
        case K::pow:
            out += "(";
            print(e.arg(0), out);
            out += "^" + std::to_string(e.exponent()) + ")";
            return;
        case K::func:
            out += func_name(e.fn());
            out += "(";
            print(e.arg(0), out);
            out += ")";
            return;
        case K::matrix: {
            const int q = e.shape();
            out += "[";
            for (int i = 0; i < q; ++i) {
                out += i ? ", [" : "[";
                for (int j = 0; j < q; ++j) {
                    if (j) out += ", ";
                    print(e.arg(i * q + j), out);
                }
                out += "]";
            }
            out += "]";
            return;
        }
    }
}

}  // namespace detail

/// Source text that parses back to a structurally equal tree.
inline std::string to_string(const Expr& e) {
    std::string s;
    detail::print(e, s);
    return s;
}

// ---- parsing ----

namespace detail {

class Parser {
public:
    explicit Parser(std::string_view src) : src_(src) {}

    Expr parse_all() {
        Expr e = expression();
        skip_ws();
        if (pos_ != src_.size()) fail("an operator or end of input");
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& expected, std::size_t at = std::string_view::npos) const {
        if (at == std::string_view::npos) at = pos_;
        auto [line, col] = line_col(at);
        throw ParseError(at, line, col, expected);
    }
    std::pair<int, int> line_col(std::size_t at) const {
        int line = 1, col = 1;
        for (std::size_t i = 0; i < at && i < src_.size(); ++i) {
            if (src_[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        return {line, col};
    }

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }
    bool accept(char c) {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    void expect(char c) {
        if (!accept(c)) fail(std::string("'") + c + "'");
    }
    char peek() {
        skip_ws();
        return pos_ < src_.size() ? src_[pos_] : '\0';
    }

    template <class Fn>
    Expr shaped(std::size_t at, Fn&& build) {
        try {
            return build();
        } catch (const ShapeError& err) {
            auto [line, col] = line_col(at);
            throw ShapeError(std::string(err.what()) + " at line " + std::to_string(line) + ", column " + std::to_string(col));
        }
    }

    Expr expression() {
        Expr lhs = term();
        for (;;) {
            std::size_t at = pos_;
            if (accept('+')) {
                Expr rhs = term();
                lhs = shaped(at, [&] { return Expr::binary(Expr::Kind::add, lhs, rhs); });
            } else if (accept('-')) {
                Expr rhs = term();
                lhs = shaped(at, [&] { return Expr::binary(Expr::Kind::sub, lhs, rhs); });
            } else {
                return lhs;
            }
        }
    }

    Expr term() {
        Expr lhs = unary();
        for (;;) {
            std::size_t at = pos_;
            if (accept('*')) {
                Expr rhs = unary();
                lhs = shaped(at, [&] { return Expr::binary(Expr::Kind::mul, lhs, rhs); });
            } else if (accept('/')) {
                Expr rhs = unary();
                lhs = shaped(at, [&] { return Expr::binary(Expr::Kind::div, lhs, rhs); });
            } else {
                return lhs;
            }
        }
    }

    Expr unary() {
        if (accept('-')) return Expr::unary_neg(unary());
        if (accept('+')) return unary();
        return power();
    }

    Expr power() {
        Expr base = primary();
        while (accept('^')) {
            skip_ws();
            std::size_t start = pos_;
            bool neg = false;
            if (pos_ < src_.size() && (src_[pos_] == '-' || src_[pos_] == '+')) {
                neg = src_[pos_] == '-';
                ++pos_;
            }
            std::size_t digits = pos_;
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
            if (digits == pos_) fail("an integer exponent", start);
            int n = 0;
            auto res = std::from_chars(src_.data() + digits, src_.data() + pos_, n);
            if (res.ec != std::errc{} || n > 64) fail("an integer exponent of at most 64", digits);
            base = Expr::power(base, neg ? -n : n);
        }
        return base;
    }

    std::optional<double> try_number() {
        skip_ws();
        std::size_t start = pos_;
        std::size_t i = pos_;
        if (i < src_.size() && (src_[i] == '-' || src_[i] == '+')) ++i;
        std::size_t mant = i;
        while (i < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[i])) || src_[i] == '.')) ++i;
        if (i == mant) return std::nullopt;
        if (i < src_.size() && (src_[i] == 'e' || src_[i] == 'E')) {
            std::size_t j = i + 1;
            if (j < src_.size() && (src_[j] == '-' || src_[j] == '+')) ++j;
            if (j < src_.size() && std::isdigit(static_cast<unsigned char>(src_[j]))) {
                i = j;
                while (i < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i]))) ++i;
            }
        }
        std::string text(src_.substr(start, i - start));
        if (!text.empty() && text[0] == '+') text.erase(0, 1);
        double d = 0.0;
        auto res = std::from_chars(text.data(), text.data() + text.size(), d);
        if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) return std::nullopt;
        pos_ = i;
        return d;
    }

    /// After '(' : a complex literal "(re, im)" if the content is number ',' number ')'.
    std::optional<Expr> try_complex_literal() {
        std::size_t save = pos_;
        auto re = try_number();
        if (re && accept(',')) {
            auto im = try_number();
            if (!im) fail("a number for the imaginary part");
            expect(')');
            return Expr::constant({*re, *im});
        }
        pos_ = save;
        return std::nullopt;
    }

    Expr primary() {
        skip_ws();
        if (pos_ >= src_.size()) fail("an operand");
        char c = src_[pos_];
        std::size_t start = pos_;
        if (c == '(') {
            ++pos_;
            if (auto lit = try_complex_literal()) return *lit;
            Expr e = expression();
            expect(')');
            return e;
        }
        if (c == '[') return matrix_literal();
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            auto d = try_number();
            if (!d) fail("a number", start);
            return Expr::constant(*d);
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) ++pos_;
            std::string name(src_.substr(start, pos_ - start));
            if (auto v = var_from_name(name)) return Expr::variable(*v);
            if (auto f = func_from_name(name)) {
                expect('(');
                Expr a = expression();
                expect(')');
                return shaped(start, [&] { return Expr::function(*f, a); });
            }
            auto [line, col] = line_col(start);
            throw UnknownIdentifier(start, line, col, name);
        }
        fail("an operand");
    }

    Expr matrix_literal() {
        std::size_t start = pos_;
        expect('[');
        std::vector<std::vector<Expr>> rows;
        do {
            expect('[');
            std::vector<Expr> row;
            do {
                row.push_back(expression());
            } while (accept(','));
            expect(']');
            rows.push_back(std::move(row));
        } while (accept(','));
        expect(']');
        const int q = static_cast<int>(rows.size());
        std::vector<Expr> entries;
        for (auto& row : rows) {
            if (static_cast<int>(row.size()) != q)
                return shaped(start, [&]() -> Expr { throw ShapeError("matrix literal must be square"); });
            for (auto& en : row) entries.push_back(std::move(en));
        }
        return shaped(start, [&] { return Expr::matrix(q, std::move(entries)); });
    }

    std::string_view src_;
    std::size_t pos_ = 0;
};

}  // namespace detail

/// Parses DSL source; q > 0 additionally requires the result to be scalar or q x q.
inline Expr parse(std::string_view source, int q = 0) {
    Expr e = detail::Parser(source).parse_all();
    if (q > 0 && e.shape() != 1 && e.shape() != q)
        throw ShapeError("expression is " + std::to_string(e.shape()) + "x" + std::to_string(e.shape()) +
                         " but the fiber dimension is " + std::to_string(q));
    return e;
}

}  // namespace psdo
