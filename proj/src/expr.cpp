#include "cbf/expr.hpp"

#include <cassert>
#include <charconv>
#include <cmath>
#include <cstring>
#include <functional>

namespace cbf {
namespace detail {

struct ExprNode {
  ExprOp op;
  double value = 0.0;  // Const
  int index = 0;       // StateVar / InputVar
  int exponent = 0;    // IntPow
  std::shared_ptr<const ExprNode> a, b;
  std::size_t hash = 0;
};

namespace {

std::size_t mix(std::size_t h, std::size_t v) {
  h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return h;
}

std::size_t node_hash(const ExprNode& n) {
  std::size_t h = static_cast<std::size_t>(n.op) * 0x100000001b3ULL;
  if (n.op == ExprOp::Const) {
    std::uint64_t bits;
    std::memcpy(&bits, &n.value, sizeof bits);
    h = mix(h, bits);
  }
  h = mix(h, static_cast<std::size_t>(n.index));
  h = mix(h, static_cast<std::size_t>(n.exponent));
  if (n.a) h = mix(h, n.a->hash);
  if (n.b) h = mix(h, n.b->hash);
  return h;
}

using NodePtr = std::shared_ptr<const ExprNode>;

NodePtr make(ExprOp op, NodePtr a = nullptr, NodePtr b = nullptr, double value = 0.0,
             int index = 0, int exponent = 0) {
  auto n = std::make_shared<ExprNode>();
  n->op = op;
  n->value = value;
  n->index = index;
  n->exponent = exponent;
  n->a = std::move(a);
  n->b = std::move(b);
  n->hash = node_hash(*n);
  return n;
}

bool structurally_equal(const ExprNode* a, const ExprNode* b) {
  if (a == b) return true;
  if (!a || !b) return false;
  if (a->hash != b->hash || a->op != b->op) return false;
  switch (a->op) {
    case ExprOp::Const:
      return a->value == b->value;
    case ExprOp::StateVar:
    case ExprOp::InputVar:
      return a->index == b->index;
    case ExprOp::IntPow:
      if (a->exponent != b->exponent) return false;
      break;
    default:
      break;
  }
  if (!structurally_equal(a->a.get(), b->a.get())) return false;
  return structurally_equal(a->b.get(), b->b.get());
}

bool is_const(const NodePtr& n, double v) { return n->op == ExprOp::Const && n->value == v; }
bool is_const(const NodePtr& n) { return n->op == ExprOp::Const; }

NodePtr constant_node(double v) { return make(ExprOp::Const, nullptr, nullptr, v); }

}  // namespace
}  // namespace detail

using detail::ExprNode;
using detail::NodePtr;

Expr::Expr() : node_(detail::constant_node(0.0)) {}

Expr Expr::constant(double v) { return Expr(detail::constant_node(v)); }

Expr Expr::state(int index) {
  if (index < 0) throw DomainError("negative state index");
  return Expr(detail::make(ExprOp::StateVar, nullptr, nullptr, 0.0, index));
}

Expr Expr::input(int index) {
  if (index < 0) throw DomainError("negative input index");
  return Expr(detail::make(ExprOp::InputVar, nullptr, nullptr, 0.0, index));
}

ExprOp Expr::op() const { return node_->op; }
double Expr::const_value() const { return node_->value; }
int Expr::var_index() const { return node_->index; }
int Expr::exponent() const { return node_->exponent; }
Expr Expr::child(int which) const { return Expr(which == 0 ? node_->a : node_->b); }
bool Expr::is_const(double v) const { return detail::is_const(node_, v); }
bool Expr::same_as(const Expr& other) const {
  return detail::structurally_equal(node_.get(), other.node_.get());
}

Expr operator+(const Expr& a, const Expr& b) {
  if (detail::is_const(a.node_) && detail::is_const(b.node_))
    return Expr::constant(a.node_->value + b.node_->value);
  if (detail::is_const(a.node_, 0.0)) return b;
  if (detail::is_const(b.node_, 0.0)) return a;
  return Expr(detail::make(ExprOp::Add, a.node_, b.node_));
}

Expr operator-(const Expr& a, const Expr& b) {
  if (detail::is_const(a.node_) && detail::is_const(b.node_))
    return Expr::constant(a.node_->value - b.node_->value);
  if (detail::is_const(b.node_, 0.0)) return a;
  if (detail::is_const(a.node_, 0.0)) return -b;
  if (detail::structurally_equal(a.node_.get(), b.node_.get())) return Expr::constant(0.0);
  return Expr(detail::make(ExprOp::Sub, a.node_, b.node_));
}

Expr operator*(const Expr& a, const Expr& b) {
  if (detail::is_const(a.node_) && detail::is_const(b.node_))
    return Expr::constant(a.node_->value * b.node_->value);
  if (detail::is_const(a.node_, 0.0) || detail::is_const(b.node_, 0.0)) return Expr::constant(0.0);
  if (detail::is_const(a.node_, 1.0)) return b;
  if (detail::is_const(b.node_, 1.0)) return a;
  return Expr(detail::make(ExprOp::Mul, a.node_, b.node_));
}

Expr operator/(const Expr& a, const Expr& b) {
  if (detail::is_const(b.node_) && b.node_->value != 0.0) {
    if (detail::is_const(a.node_)) return Expr::constant(a.node_->value / b.node_->value);
    if (b.node_->value == 1.0) return a;
  }
  return Expr(detail::make(ExprOp::Div, a.node_, b.node_));
}

Expr operator-(const Expr& a) {
  if (detail::is_const(a.node_)) return Expr::constant(-a.node_->value);
  if (a.node_->op == ExprOp::Neg) return Expr(a.node_->a);
  return Expr(detail::make(ExprOp::Neg, a.node_));
}

Expr pow_int(const Expr& a, int k) {
  if (k < 0) throw DomainError("negative exponent not supported");
  if (k == 0) return Expr::constant(1.0);
  if (k == 1) return a;
  if (detail::is_const(a.node_)) return Expr::constant(std::pow(a.node_->value, k));
  return Expr(detail::make(ExprOp::IntPow, a.node_, nullptr, 0.0, 0, k));
}

Expr sin(const Expr& a) {
  if (detail::is_const(a.node_)) return Expr::constant(std::sin(a.node_->value));
  return Expr(detail::make(ExprOp::Sin, a.node_));
}

Expr cos(const Expr& a) {
  if (detail::is_const(a.node_)) return Expr::constant(std::cos(a.node_->value));
  return Expr(detail::make(ExprOp::Cos, a.node_));
}

Expr exp(const Expr& a) {
  if (detail::is_const(a.node_)) return Expr::constant(std::exp(a.node_->value));
  return Expr(detail::make(ExprOp::Exp, a.node_));
}

Expr sqrt(const Expr& a) {
  if (detail::is_const(a.node_)) {
    if (a.node_->value < 0.0) throw DomainError("sqrt of negative constant");
    return Expr::constant(std::sqrt(a.node_->value));
  }
  return Expr(detail::make(ExprOp::Sqrt, a.node_));
}

namespace {

double eval_node(const ExprNode* n, std::span<const double> x, std::span<const double> u) {
  switch (n->op) {
    case ExprOp::Const:
      return n->value;
    case ExprOp::StateVar:
      if (static_cast<std::size_t>(n->index) >= x.size())
        throw DomainError("state index out of range in eval");
      return x[n->index];
    case ExprOp::InputVar:
      if (static_cast<std::size_t>(n->index) >= u.size())
        throw DomainError("input index out of range in eval");
      return u[n->index];
    case ExprOp::Add:
      return eval_node(n->a.get(), x, u) + eval_node(n->b.get(), x, u);
    case ExprOp::Sub:
      return eval_node(n->a.get(), x, u) - eval_node(n->b.get(), x, u);
    case ExprOp::Mul:
      return eval_node(n->a.get(), x, u) * eval_node(n->b.get(), x, u);
    case ExprOp::Div: {
      const double d = eval_node(n->b.get(), x, u);
      if (d == 0.0) throw DomainError("division by zero");
      return eval_node(n->a.get(), x, u) / d;
    }
    case ExprOp::Neg:
      return -eval_node(n->a.get(), x, u);
    case ExprOp::IntPow: {
      const double b = eval_node(n->a.get(), x, u);
      double r = 1.0, p = b;
      int k = n->exponent;
      while (k > 0) {
        if (k & 1) r *= p;
        p *= p;
        k >>= 1;
      }
      return r;
    }
    case ExprOp::Sin:
      return std::sin(eval_node(n->a.get(), x, u));
    case ExprOp::Cos:
      return std::cos(eval_node(n->a.get(), x, u));
    case ExprOp::Exp:
      return std::exp(eval_node(n->a.get(), x, u));
    case ExprOp::Sqrt: {
      const double v = eval_node(n->a.get(), x, u);
      if (v < 0.0) throw DomainError("sqrt of negative value");
      return std::sqrt(v);
    }
  }
  throw DomainError("corrupt expression node");
}

Interval ieval_node(const ExprNode* n, const Box& xb, const Box& ub) {
  switch (n->op) {
    case ExprOp::Const:
      return Interval::point(n->value);
    case ExprOp::StateVar:
      if (static_cast<std::size_t>(n->index) >= xb.dim())
        throw DomainError("state index out of range in interval eval");
      return xb.interval(n->index);
    case ExprOp::InputVar:
      if (static_cast<std::size_t>(n->index) >= ub.dim())
        throw DomainError("input index out of range in interval eval");
      return ub.interval(n->index);
    case ExprOp::Add:
      return ieval_node(n->a.get(), xb, ub) + ieval_node(n->b.get(), xb, ub);
    case ExprOp::Sub:
      return ieval_node(n->a.get(), xb, ub) - ieval_node(n->b.get(), xb, ub);
    case ExprOp::Mul:
      return ieval_node(n->a.get(), xb, ub) * ieval_node(n->b.get(), xb, ub);
    case ExprOp::Div:
      return ieval_node(n->a.get(), xb, ub) / ieval_node(n->b.get(), xb, ub);
    case ExprOp::Neg:
      return -ieval_node(n->a.get(), xb, ub);
    case ExprOp::IntPow:
      return pow_int(ieval_node(n->a.get(), xb, ub), n->exponent);
    case ExprOp::Sin:
      return sin_iv(ieval_node(n->a.get(), xb, ub));
    case ExprOp::Cos:
      return cos_iv(ieval_node(n->a.get(), xb, ub));
    case ExprOp::Exp:
      return exp_iv(ieval_node(n->a.get(), xb, ub));
    case ExprOp::Sqrt:
      return sqrt_iv(ieval_node(n->a.get(), xb, ub));
  }
  throw DomainError("corrupt expression node");
}

}  // namespace

double Expr::eval(std::span<const double> x, std::span<const double> u) const {
  return eval_node(node_.get(), x, u);
}

Interval Expr::eval_interval(const Box& xb, const Box& ub) const {
  return ieval_node(node_.get(), xb, ub);
}

Expr Expr::diff(VarRef v) const {
  const ExprNode* n = node_.get();
  const Expr zero = Expr::constant(0.0);
  switch (n->op) {
    case ExprOp::Const:
      return zero;
    case ExprOp::StateVar:
      return (!v.is_input && n->index == v.index) ? Expr::constant(1.0) : zero;
    case ExprOp::InputVar:
      return (v.is_input && n->index == v.index) ? Expr::constant(1.0) : zero;
    case ExprOp::Add:
      return child(0).diff(v) + child(1).diff(v);
    case ExprOp::Sub:
      return child(0).diff(v) - child(1).diff(v);
    case ExprOp::Mul:
      return child(0).diff(v) * child(1) + child(0) * child(1).diff(v);
    case ExprOp::Div: {
      const Expr a = child(0), b = child(1);
      return (a.diff(v) * b - a * b.diff(v)) / pow_int(b, 2);
    }
    case ExprOp::Neg:
      return -child(0).diff(v);
    case ExprOp::IntPow: {
      const Expr base = child(0);
      return Expr::constant(n->exponent) * pow_int(base, n->exponent - 1) * base.diff(v);
    }
    case ExprOp::Sin:
      return cos(child(0)) * child(0).diff(v);
    case ExprOp::Cos:
      return -sin(child(0)) * child(0).diff(v);
    case ExprOp::Exp:
      return exp(child(0)) * child(0).diff(v);
    case ExprOp::Sqrt:
      return child(0).diff(v) / (Expr::constant(2.0) * sqrt(child(0)));
  }
  throw DomainError("corrupt expression node");
}

Expr Expr::substitute(std::span<const std::optional<Expr>> state_subs,
                      std::span<const std::optional<Expr>> input_subs) const {
  const ExprNode* n = node_.get();
  switch (n->op) {
    case ExprOp::Const:
      return *this;
    case ExprOp::StateVar:
      if (static_cast<std::size_t>(n->index) < state_subs.size() && state_subs[n->index])
        return *state_subs[n->index];
      return *this;
    case ExprOp::InputVar:
      if (static_cast<std::size_t>(n->index) < input_subs.size() && input_subs[n->index])
        return *input_subs[n->index];
      return *this;
    case ExprOp::Add:
      return child(0).substitute(state_subs, input_subs) + child(1).substitute(state_subs, input_subs);
    case ExprOp::Sub:
      return child(0).substitute(state_subs, input_subs) - child(1).substitute(state_subs, input_subs);
    case ExprOp::Mul:
      return child(0).substitute(state_subs, input_subs) * child(1).substitute(state_subs, input_subs);
    case ExprOp::Div:
      return child(0).substitute(state_subs, input_subs) / child(1).substitute(state_subs, input_subs);
    case ExprOp::Neg:
      return -child(0).substitute(state_subs, input_subs);
    case ExprOp::IntPow:
      return pow_int(child(0).substitute(state_subs, input_subs), n->exponent);
    case ExprOp::Sin:
      return sin(child(0).substitute(state_subs, input_subs));
    case ExprOp::Cos:
      return cos(child(0).substitute(state_subs, input_subs));
    case ExprOp::Exp:
      return exp(child(0).substitute(state_subs, input_subs));
    case ExprOp::Sqrt:
      return sqrt(child(0).substitute(state_subs, input_subs));
  }
  throw DomainError("corrupt expression node");
}

namespace {

// Print precedence levels: additive 1, multiplicative 2, unary 3, power 4.
int precedence(ExprOp op) {
  switch (op) {
    case ExprOp::Add:
    case ExprOp::Sub:
      return 1;
    case ExprOp::Mul:
    case ExprOp::Div:
      return 2;
    case ExprOp::Neg:
      return 3;
    case ExprOp::IntPow:
      return 4;
    default:
      return 5;
  }
}

std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void print_node(const ExprNode* n, std::string& out, int parent_prec, bool right_side) {
  const int prec = precedence(n->op);
  const bool need_parens =
      prec < parent_prec ||
      (prec == parent_prec && right_side && (n->op == ExprOp::Sub || n->op == ExprOp::Div ||
                                             n->op == ExprOp::Add || n->op == ExprOp::Mul));
  if (need_parens) out += '(';
  switch (n->op) {
    case ExprOp::Const: {
      const double v = n->value;
      if (!std::isfinite(v)) throw DomainError("cannot print non-finite constant");
      if (v < 0.0 || (v == 0.0 && std::signbit(v))) {
        out += "-";
        out += format_double(-v);
      } else {
        out += format_double(v);
      }
      break;
    }
    case ExprOp::StateVar:
      out += "x" + std::to_string(n->index + 1);
      break;
    case ExprOp::InputVar:
      out += "u" + std::to_string(n->index + 1);
      break;
    case ExprOp::Add:
      print_node(n->a.get(), out, 1, false);
      out += " + ";
      print_node(n->b.get(), out, 1, true);
      break;
    case ExprOp::Sub:
      print_node(n->a.get(), out, 1, false);
      out += " - ";
      print_node(n->b.get(), out, 1, true);
      break;
    case ExprOp::Mul:
      print_node(n->a.get(), out, 2, false);
      out += "*";
      print_node(n->b.get(), out, 2, true);
      break;
    case ExprOp::Div:
      print_node(n->a.get(), out, 2, false);
      out += "/";
      print_node(n->b.get(), out, 2, true);
      break;
    case ExprOp::Neg:
      out += "-";
      print_node(n->a.get(), out, 3, true);
      break;
    case ExprOp::IntPow:
      print_node(n->a.get(), out, 5, false);  // base must bind tighter than ^
      out += "^" + std::to_string(n->exponent);
      break;
    case ExprOp::Sin:
      out += "sin(";
      print_node(n->a.get(), out, 0, false);
      out += ')';
      break;
    case ExprOp::Cos:
      out += "cos(";
      print_node(n->a.get(), out, 0, false);
      out += ')';
      break;
    case ExprOp::Exp:
      out += "exp(";
      print_node(n->a.get(), out, 0, false);
      out += ')';
      break;
    case ExprOp::Sqrt:
      out += "sqrt(";
      print_node(n->a.get(), out, 0, false);
      out += ')';
      break;
  }
  if (need_parens) out += ')';
}

}  // namespace

std::string Expr::to_string() const {
  std::string out;
  print_node(node_.get(), out, 0, false);
  return out;
}

namespace {

void walk_max_dims(const ExprNode* n, int& nmax, int& mmax) {
  if (!n) return;
  if (n->op == ExprOp::StateVar) nmax = std::max(nmax, n->index + 1);
  if (n->op == ExprOp::InputVar) mmax = std::max(mmax, n->index + 1);
  walk_max_dims(n->a.get(), nmax, mmax);
  walk_max_dims(n->b.get(), nmax, mmax);
}

void count_nodes(const ExprNode* n, std::size_t& count) {
  if (!n) return;
  ++count;
  count_nodes(n->a.get(), count);
  count_nodes(n->b.get(), count);
}

}  // namespace

int Expr::max_state_dim() const {
  int n = 0, m = 0;
  walk_max_dims(node_.get(), n, m);
  return n;
}

int Expr::max_input_dim() const {
  int n = 0, m = 0;
  walk_max_dims(node_.get(), n, m);
  return m;
}

std::size_t Expr::node_count() const {
  std::size_t c = 0;
  count_nodes(node_.get(), c);
  return c;
}

bool Expr::input_degree_at_most(int deg) const {
  const int m = max_input_dim();
  if (m == 0) return true;
  std::vector<Expr> frontier{*this};
  for (int order = 0; order <= deg; ++order) {
    std::vector<Expr> next;
    for (const Expr& e : frontier)
      for (int j = 0; j < m; ++j) next.push_back(e.diff(VarRef::input(j)));
    frontier = std::move(next);
  }
  for (const Expr& e : frontier)
    if (!e.is_const(0.0)) return false;
  return true;
}

Expr grad_norm_sq(const Expr& e, int n_states) {
  Expr acc = Expr::constant(0.0);
  for (int i = 0; i < n_states; ++i) acc = acc + pow_int(e.diff(VarRef::state(i)), 2);
  return acc;
}

// ---------------------------------------------------------------------------
// Parser

namespace {

struct Parser {
  const std::string& s;
  std::size_t pos = 0;
  int n, m;

  void skip_ws() {
    while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t' || s[pos] == '\n' || s[pos] == '\r'))
      ++pos;
  }

  bool at_end() {
    skip_ws();
    return pos >= s.size();
  }

  char peek() {
    skip_ws();
    return pos < s.size() ? s[pos] : '\0';
  }

  bool consume(char c) {
    skip_ws();
    if (pos < s.size() && s[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& msg) { throw ParseError(msg, pos); }

  Expr parse() {
    Expr e = expression();
    if (!at_end()) fail("unexpected trailing input");
    return e;
  }

  Expr expression() {
    Expr e = term();
    while (true) {
      if (consume('+'))
        e = e + term();
      else if (consume('-'))
        e = e - term();
      else
        return e;
    }
  }

  Expr term() {
    Expr e = factor();
    while (true) {
      if (consume('*'))
        e = e * factor();
      else if (consume('/'))
        e = e / factor();
      else
        return e;
    }
  }

  Expr factor() {
    if (consume('-')) return -factor();
    return power();
  }

  Expr power() {
    Expr base = atom();
    if (consume('^')) {
      skip_ws();
      const std::size_t start = pos;
      int k = 0;
      if (pos >= s.size() || !std::isdigit(static_cast<unsigned char>(s[pos])))
        fail("expected nonnegative integer exponent after '^'");
      while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
        k = k * 10 + (s[pos] - '0');
        if (k > 64) {
          pos = start;
          fail("exponent too large");
        }
        ++pos;
      }
      return pow_int(base, k);
    }
    return base;
  }

  Expr atom() {
    skip_ws();
    if (pos >= s.size()) fail("unexpected end of expression");
    const char c = s[pos];
    if (c == '(') {
      ++pos;
      Expr e = expression();
      if (!consume(')')) fail("expected ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c))) return identifier();
    fail(std::string("unexpected character '") + c + "'");
  }

  Expr number() {
    const std::size_t start = pos;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos < s.size() && s[pos] == '.') {
      ++pos;
      while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    if (pos < s.size() && (s[pos] == 'e' || s[pos] == 'E')) {
      std::size_t epos = pos + 1;
      if (epos < s.size() && (s[epos] == '+' || s[epos] == '-')) ++epos;
      if (epos < s.size() && std::isdigit(static_cast<unsigned char>(s[epos]))) {
        pos = epos;
        while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
      }
    }
    double v = 0.0;
    auto res = std::from_chars(s.data() + start, s.data() + pos, v);
    if (res.ec != std::errc() || res.ptr != s.data() + pos) {
      pos = start;
      fail("malformed number literal");
    }
    return Expr::constant(v);
  }

  Expr identifier() {
    const std::size_t start = pos;
    while (pos < s.size() && std::isalpha(static_cast<unsigned char>(s[pos]))) ++pos;
    const std::string name = s.substr(start, pos - start);
    if (name == "sin" || name == "cos" || name == "exp" || name == "sqrt") {
      if (!consume('(')) fail("expected '(' after function name");
      Expr arg = expression();
      if (!consume(')')) fail("expected ')'");
      if (name == "sin") return sin(arg);
      if (name == "cos") return cos(arg);
      if (name == "exp") return exp(arg);
      return sqrt(arg);
    }
    if (name == "x" || name == "u") {
      const std::size_t istart = pos;
      int idx = 0;
      while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
        idx = idx * 10 + (s[pos] - '0');
        ++pos;
      }
      if (pos == istart || idx == 0) {
        pos = start;
        fail("variable needs a 1-based index (x1, u2, ...)");
      }
      const int limit = name == "x" ? n : m;
      if (idx > limit) {
        pos = start;
        fail("unknown variable " + name + std::to_string(idx) + " (declared " +
             (name == "x" ? "n=" : "m=") + std::to_string(limit) + ")");
      }
      return name == "x" ? Expr::state(idx - 1) : Expr::input(idx - 1);
    }
    pos = start;
    fail("unknown identifier '" + name + "'");
  }
};

}  // namespace

Expr parse_expr(const std::string& text, int n_states, int n_inputs) {
  Parser p{text, 0, n_states, n_inputs};
  return p.parse();
}

}  // namespace cbf
