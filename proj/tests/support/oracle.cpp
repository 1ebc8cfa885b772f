#include "oracle.hpp"

#include <cctype>
#include <cmath>
#include <random>
#include <stdexcept>

namespace oracle {

using robustlaw::LossKind;

namespace {

long double xlogx(long double x) { return x == 0 ? 0.0L : x * std::log(x); }

}  // namespace

long double phi(const LossSpec& loss, const Vec& y) {
  long double s = 0;
  switch (loss.kind()) {
    case LossKind::Square:
      for (Eigen::Index i = 0; i < y.size(); ++i) s += static_cast<long double>(y[i]) * y[i];
      return s;
    case LossKind::Mahalanobis:
      for (Eigen::Index i = 0; i < y.size(); ++i)
        for (Eigen::Index j = 0; j < y.size(); ++j)
          s += static_cast<long double>(y[i]) * loss.matrix()(i, j) * y[j];
      return s;
    case LossKind::NegEntropy:
      for (Eigen::Index i = 0; i < y.size(); ++i) s += xlogx(y[i]);
      return s;
    case LossKind::BinaryEntropy:
      return xlogx(y[0]) + xlogx(1.0L - y[0]);
  }
  throw std::logic_error("unknown loss");
}

long double divergence(const LossSpec& loss, const Vec& a, const Vec& b) {
  long double s = 0;
  switch (loss.kind()) {
    case LossKind::Square:
      for (Eigen::Index i = 0; i < a.size(); ++i) {
        const long double t = static_cast<long double>(a[i]) - b[i];
        s += t * t;
      }
      return s;
    case LossKind::Mahalanobis:
      for (Eigen::Index i = 0; i < a.size(); ++i)
        for (Eigen::Index j = 0; j < a.size(); ++j)
          s += (static_cast<long double>(a[i]) - b[i]) * loss.matrix()(i, j) *
               (static_cast<long double>(a[j]) - b[j]);
      return s;
    case LossKind::NegEntropy:
      for (Eigen::Index i = 0; i < a.size(); ++i) {
        const long double ai = a[i], bi = b[i];
        s += (ai == 0 ? 0.0L : ai * std::log(ai / bi)) - ai + bi;
      }
      return s;
    case LossKind::BinaryEntropy: {
      const long double p = a[0], q = b[0];
      return (p == 0 ? 0.0L : p * std::log(p / q)) +
             (p == 1 ? 0.0L : (1 - p) * std::log((1 - p) / (1 - q)));
    }
  }
  throw std::logic_error("unknown loss");
}

Vec DiscreteModel::conditional_mean(std::size_t i) const {
  Vec m = Vec::Zero(y[i].front().size());
  for (std::size_t j = 0; j < y[i].size(); ++j) m += py[i][j] * y[i][j];
  return m;
}

std::vector<Vec> range_grid(const LossSpec& loss, double step) {
  const auto& r = loss.domain().r_region;
  const int K = loss.K();
  std::vector<Vec> grid;
  if (loss.kind() == LossKind::Square || loss.kind() == LossKind::Mahalanobis) {
    const int per = static_cast<int>(std::floor((r.hi - r.lo) / step + 1e-9)) + 1;
    std::vector<int> idx(K, 0);
    for (;;) {
      Vec v(K);
      for (int i = 0; i < K; ++i) v[i] = r.lo + idx[i] * step;
      grid.push_back(v);
      int k = 0;
      while (k < K && ++idx[k] == per) idx[k++] = 0;
      if (k == K) break;
    }
  } else if (loss.kind() == LossKind::BinaryEntropy) {
    for (double t = r.lo; t <= r.hi + 1e-12; t += step) grid.push_back(Vec::Constant(1, std::min(t, r.hi)));
  } else {
    // Simplex with floor: first K-1 coordinates on the grid, last one fills up.
    const double f = r.floor;
    const int per = static_cast<int>(std::floor((1.0 - K * f) / step + 1e-9)) + 1;
    std::vector<int> idx(K - 1, 0);
    for (;;) {
      Vec v(K);
      double used = 0.0;
      for (int i = 0; i < K - 1; ++i) {
        v[i] = f + idx[i] * step;
        used += v[i];
      }
      v[K - 1] = 1.0 - used;
      if (v[K - 1] >= f - 1e-12) grid.push_back(v);
      int k = 0;
      while (k < K - 1 && ++idx[k] == per) idx[k++] = 0;
      if (k == K - 1) break;
    }
  }
  return grid;
}

std::vector<AtomResult> brute_force(const LossSpec& loss, const DiscreteModel& model,
                                    const std::vector<Vec>& grid) {
  std::vector<AtomResult> out;
  for (std::size_t i = 0; i < model.px.size(); ++i) {
    auto objective = [&](const Vec& v) {
      long double s = 0;
      for (std::size_t j = 0; j < model.y[i].size(); ++j) s += model.py[i][j] * oracle::divergence(loss, model.y[i][j], v);
      return s;
    };
    AtomResult a;
    a.grid_min = INFINITY;
    for (const Vec& v : grid) {
      const long double o = objective(v);
      if (o < a.grid_min) {
        a.grid_min = o;
        a.grid_argmin = v;
      }
    }
    const Vec m = model.conditional_mean(i);
    a.at_mean = objective(m);
    a.distance = (a.grid_argmin - m).norm();
    out.push_back(a);
  }
  return out;
}

DiscreteModel random_discrete_model(const LossSpec& loss, std::size_t x_atoms, std::size_t y_atoms,
                                    std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto simplex = [&](std::size_t k) {
    std::vector<double> w(k);
    double s = 0;
    for (auto& x : w) s += (x = 0.05 + u(gen));
    for (auto& x : w) x /= s;
    return w;
  };
  const int K = loss.K();
  const double M = loss.params().M;
  const double alpha = loss.params().alpha;
  DiscreteModel m;
  m.px = simplex(x_atoms);
  for (std::size_t i = 0; i < x_atoms; ++i) {
    std::vector<Vec> ys;
    std::vector<double> ps;
    switch (loss.kind()) {
      case LossKind::Square:
      case LossKind::Mahalanobis:
        for (std::size_t j = 0; j < y_atoms; ++j) {
          Vec y(K);
          for (int k = 0; k < K; ++k) y[k] = M * (2.0 * u(gen) - 1.0);
          ys.push_back(y);
        }
        ps = simplex(y_atoms);
        break;
      case LossKind::NegEntropy: {
        // One-hot labels; class probabilities respect the floor alpha.
        std::vector<double> q = simplex(static_cast<std::size_t>(K));
        for (int k = 0; k < K; ++k) {
          Vec y = Vec::Zero(K);
          y[k] = 1.0;
          ys.push_back(y);
          ps.push_back(alpha + (1.0 - K * alpha) * q[k]);
        }
        break;
      }
      case LossKind::BinaryEntropy: {
        const double q = alpha + (1.0 - 2.0 * alpha) * u(gen);
        ys = {Vec::Constant(1, 1.0), Vec::Constant(1, 0.0)};
        ps = {q, 1.0 - q};
        break;
      }
    }
    m.y.push_back(ys);
    m.py.push_back(ps);
  }
  return m;
}

// ---- expression evaluator ----

namespace {

struct Parser {
  const std::string& s;
  const std::map<std::string, long double>& vars;
  std::size_t i = 0;

  void skip() {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  }
  bool eat(char c) {
    skip();
    if (i < s.size() && s[i] == c) {
      ++i;
      return true;
    }
    return false;
  }
  [[noreturn]] void fail(const std::string& what) {
    throw std::runtime_error("expression: " + what + " at offset " + std::to_string(i) + " in " + s);
  }

  long double expr() {
    long double v = term();
    for (;;) {
      if (eat('+')) v += term();
      else if (eat('-')) v -= term();
      else return v;
    }
  }
  long double term() {
    long double v = unary();
    for (;;) {
      if (eat('*')) v *= unary();
      else if (eat('/')) v /= unary();
      else return v;
    }
  }
  long double unary() {
    if (eat('-')) return -unary();
    if (eat('+')) return unary();
    return power();
  }
  long double power() {
    const long double base = primary();
    if (eat('^')) return std::pow(base, unary());  // right associative
    return base;
  }
  long double primary() {
    skip();
    if (eat('(')) {
      const long double v = expr();
      if (!eat(')')) fail("expected )");
      return v;
    }
    if (i < s.size() && (std::isdigit(static_cast<unsigned char>(s[i])) || s[i] == '.')) {
      std::size_t used = 0;
      const long double v = std::stold(s.substr(i), &used);
      i += used;
      return v;
    }
    if (i < s.size() && (std::isalpha(static_cast<unsigned char>(s[i])) || s[i] == '_')) {
      const std::size_t b = i;
      while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_')) ++i;
      const std::string name = s.substr(b, i - b);
      if (eat('(')) {
        const long double a = expr();
        if (name == "max") {
          if (!eat(',')) fail("max needs two arguments");
          const long double c = expr();
          if (!eat(')')) fail("expected )");
          return std::max(a, c);
        }
        if (!eat(')')) fail("expected )");
        if (name == "sqrt") return std::sqrt(a);
        if (name == "log") return std::log(a);
        if (name == "exp") return std::exp(a);
        if (name == "abs") return std::fabs(a);
        if (name == "ceil") return std::ceil(a);
        fail("unknown function " + name);
      }
      auto it = vars.find(name);
      if (it == vars.end()) fail("unbound name " + name);
      return it->second;
    }
    fail("unexpected character");
  }
};

}  // namespace

long double evaluate(const std::string& expr, const std::map<std::string, long double>& vars) {
  Parser p{expr, vars};
  const long double v = p.expr();
  p.skip();
  if (p.i != expr.size()) p.fail("trailing input");
  return v;
}

}  // namespace oracle
