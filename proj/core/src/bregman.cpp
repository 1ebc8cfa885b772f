#include "robustlaw/bregman.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdio>
#include <sstream>

namespace robustlaw {
namespace {

constexpr double kMembershipTol = 1e-9;

double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

// x log(x / y) with the 0 log 0 = 0 convention.
double xlog_ratio(double x, double y) { return x > 0.0 ? x * (std::log(x) - std::log(y)) : 0.0; }

[[noreturn]] void domain_violation(const char* op, const LossSpec& loss, const Region& region,
                                   const Vec& y) {
  std::ostringstream msg;
  msg << op << " (" << to_string(loss.kind()) << "): point outside " << region.describe();
  const int bad = region.first_violation(y, kMembershipTol);
  if (bad >= 0 && bad < y.size()) {
    msg << ", offending coordinate " << bad << " = " << y[bad];
  } else if (bad == y.size()) {
    msg << ", coordinates sum to " << y.sum();
  } else if (y.size() != region.dim) {
    msg << ", got dimension " << y.size() << " expected " << region.dim;
  }
  throw Error(ErrorCode::DomainViolation, msg.str());
}

void require_in(const char* op, const LossSpec& loss, const Region& region, const Vec& y) {
  if (!region.contains(y, kMembershipTol)) domain_violation(op, loss, region, y);
}

// Open-interior requirement for points where grad phi is evaluated.
void require_interior(const char* op, const LossSpec& loss, const Vec& y) {
  const Region& omega = loss.domain().omega;
  require_in(op, loss, omega, y);
  if (loss.kind() == LossKind::NegEntropy || loss.kind() == LossKind::BinaryEntropy) {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      if (!(y[i] > 0.0) || (loss.kind() == LossKind::BinaryEntropy && !(y[i] < 1.0))) {
        std::ostringstream msg;
        msg << op << " (" << to_string(loss.kind()) << "): point on the boundary of "
            << omega.describe() << ", offending coordinate " << i << " = " << y[i];
        throw Error(ErrorCode::DomainViolation, msg.str());
      }
    }
  }
}

double default_floor(int K, double M) { return std::exp(-2.0 * M) / K; }

}  // namespace

const char* to_string(LossKind kind) {
  switch (kind) {
    case LossKind::Square: return "square";
    case LossKind::Mahalanobis: return "mahalanobis";
    case LossKind::NegEntropy: return "neg_entropy";
    case LossKind::BinaryEntropy: return "binary_entropy";
  }
  return "unknown";
}

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "square") return LossKind::Square;
  if (name == "mahalanobis") return LossKind::Mahalanobis;
  if (name == "neg_entropy" || name == "cross_entropy" || name == "kl") return LossKind::NegEntropy;
  if (name == "binary_entropy" || name == "logistic") return LossKind::BinaryEntropy;
  throw Error(ErrorCode::ConfigError, "unknown loss.kind " + name);
}

Region Region::box(int dim, double lo, double hi) {
  Region r;
  r.kind = Kind::Box;
  r.dim = dim;
  r.lo = lo;
  r.hi = hi;
  return r;
}

Region Region::simplex(int dim, double floor) {
  Region r;
  r.kind = Kind::Simplex;
  r.dim = dim;
  r.lo = floor;
  r.hi = 1.0;
  r.floor = floor;
  return r;
}

int Region::first_violation(const Vec& y, double tol) const {
  if (y.size() != dim) return -2;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (!std::isfinite(y[i])) return static_cast<int>(i);
    const double lower = kind == Kind::Box ? lo : floor;
    const double upper = kind == Kind::Box ? hi : 1.0;
    if (y[i] < lower - tol || y[i] > upper + tol) return static_cast<int>(i);
  }
  if (kind == Kind::Simplex && std::abs(y.sum() - 1.0) > tol * std::max<double>(1.0, dim)) {
    return dim;
  }
  return -1;
}

bool Region::contains(const Vec& y, double tol) const { return first_violation(y, tol) == -1; }

std::string Region::describe() const {
  char buf[128];
  if (kind == Kind::Box) {
    std::snprintf(buf, sizeof buf, "box [%g, %g]^%d", lo, hi, dim);
  } else if (floor > 0.0) {
    std::snprintf(buf, sizeof buf, "simplex_%d with floor %g", dim, floor);
  } else {
    std::snprintf(buf, sizeof buf, "simplex_%d", dim);
  }
  return buf;
}

LossSpec LossSpec::square(int K, double M) {
  if (K < 1) throw Error(ErrorCode::ConfigError, "square loss needs K >= 1");
  LossSpec s;
  s.kind_ = LossKind::Square;
  s.K_ = K;
  s.params_.M = M;
  s.build_domain();
  return s;
}

LossSpec LossSpec::mahalanobis(const Mat& A, double M) {
  if (A.rows() != A.cols() || A.rows() < 1) {
    throw Error(ErrorCode::ConfigError, "mahalanobis matrix must be square and non-empty");
  }
  const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
  if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw Error(ErrorCode::ConfigError, "mahalanobis matrix must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Mat> eig(A, Eigen::EigenvaluesOnly);
  if (!(eig.eigenvalues().minCoeff() > 0.0)) {
    throw Error(ErrorCode::ConfigError, "mahalanobis matrix must be positive definite");
  }
  LossSpec s;
  s.kind_ = LossKind::Mahalanobis;
  s.K_ = static_cast<int>(A.rows());
  s.A_ = A;
  s.params_.M = M;
  s.build_domain();
  return s;
}

LossSpec LossSpec::neg_entropy(int K, double M, double alpha, double floor) {
  if (K < 2) throw Error(ErrorCode::ConfigError, "neg_entropy loss needs K >= 2");
  LossSpec s;
  s.kind_ = LossKind::NegEntropy;
  s.K_ = K;
  s.params_.M = M;
  s.params_.alpha = alpha;
  s.params_.floor = floor;
  s.build_domain();
  return s;
}

LossSpec LossSpec::binary_entropy(double M, double alpha) {
  LossSpec s;
  s.kind_ = LossKind::BinaryEntropy;
  s.K_ = 1;
  s.params_.M = M;
  s.params_.alpha = alpha;
  s.build_domain();
  return s;
}

void LossSpec::build_domain() {
  const double M = params_.M;
  if (!(M > 0.0)) throw Error(ErrorCode::DomainViolation, "loss.M must be positive");
  switch (kind_) {
    case LossKind::Square:
    case LossKind::Mahalanobis:
      domain_.omega = Region::box(K_, -M, M);
      domain_.a_region = domain_.omega;
      domain_.r_region = domain_.omega;
      break;
    case LossKind::NegEntropy: {
      const double alpha = params_.alpha;
      if (!(alpha > 0.0) || alpha * K_ > 1.0 + 1e-15) {
        throw Error(ErrorCode::DomainViolation, "neg_entropy needs alpha in (0, 1/K]");
      }
      const double floor = params_.floor > 0.0 ? params_.floor : default_floor(K_, M);
      if (floor * K_ > 1.0) throw Error(ErrorCode::DomainViolation, "simplex floor exceeds 1/K");
      params_.floor = floor;
      domain_.omega = Region::simplex(K_);
      domain_.a_region = Region::simplex(K_, alpha);
      domain_.r_region = Region::simplex(K_, floor);
      break;
    }
    case LossKind::BinaryEntropy: {
      const double alpha = params_.alpha;
      if (!(alpha > 0.0) || alpha * 2.0 > 1.0 + 1e-15) {
        throw Error(ErrorCode::DomainViolation, "binary_entropy needs alpha in (0, 1/2]");
      }
      // Two logits in [-M, M] give class probabilities >= exp(-2M)/2.
      const double floor = params_.floor > 0.0 ? params_.floor : default_floor(2, M);
      params_.floor = floor;
      domain_.omega = Region::box(1, 0.0, 1.0);
      domain_.a_region = Region::box(1, alpha, 1.0 - alpha);
      domain_.r_region = Region::box(1, floor, 1.0 - floor);
      break;
    }
  }
}

LossSpec LossSpec::from_config(const Config& cfg) {
  const LossKind kind = loss_kind_from_string(cfg.get_string("loss.kind"));
  const double M = cfg.get_double("loss.M", 1.0);
  switch (kind) {
    case LossKind::Square:
      return square(static_cast<int>(cfg.get_int("loss.K")), M);
    case LossKind::Mahalanobis: {
      const auto flat = cfg.get_list("loss.matrix");
      const auto K = static_cast<int>(std::lround(std::sqrt(static_cast<double>(flat.size()))));
      if (K * K != static_cast<int>(flat.size())) {
        throw Error(ErrorCode::ConfigError, "loss.matrix must have K*K entries");
      }
      if (cfg.has("loss.K") && cfg.get_int("loss.K") != K) {
        throw Error(ErrorCode::ConfigError, "loss.K disagrees with loss.matrix size");
      }
      Mat A(K, K);
      for (int i = 0; i < K; ++i)
        for (int j = 0; j < K; ++j) A(i, j) = flat[static_cast<std::size_t>(i * K + j)];
      return mahalanobis(A, M);
    }
    case LossKind::NegEntropy:
      return neg_entropy(static_cast<int>(cfg.get_int("loss.K")), M, cfg.get_double("loss.alpha"),
                         cfg.get_double("loss.floor", 0.0));
    case LossKind::BinaryEntropy:
      return binary_entropy(M, cfg.get_double("loss.alpha"));
  }
  throw Error(ErrorCode::ConfigError, "unreachable loss kind");
}

void LossSpec::to_config(Config& cfg) const {
  auto num = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  cfg.set("loss.kind", to_string(kind_));
  cfg.set("loss.K", std::to_string(K_));
  cfg.set("loss.M", num(params_.M));
  if (kind_ == LossKind::NegEntropy || kind_ == LossKind::BinaryEntropy) {
    cfg.set("loss.alpha", num(params_.alpha));
  }
  if (kind_ == LossKind::Mahalanobis) {
    std::string list = "[";
    for (int i = 0; i < K_; ++i)
      for (int j = 0; j < K_; ++j) {
        if (i || j) list += ", ";
        list += num(A_(i, j));
      }
    cfg.set("loss.matrix", list + "]");
  }
}

double phi_value(const LossSpec& loss, const Vec& y) {
  require_in("phi_value", loss, loss.domain().omega, y);
  switch (loss.kind()) {
    case LossKind::Square: return y.squaredNorm();
    case LossKind::Mahalanobis: return y.dot(loss.matrix() * y);
    case LossKind::NegEntropy: {
      double s = 0.0;
      for (Eigen::Index i = 0; i < y.size(); ++i) s += xlogx(y[i]);
      return s;
    }
    case LossKind::BinaryEntropy: return xlogx(y[0]) + xlogx(1.0 - y[0]);
  }
  return 0.0;
}

Vec phi_gradient(const LossSpec& loss, const Vec& y) {
  require_interior("phi_gradient", loss, y);
  switch (loss.kind()) {
    case LossKind::Square: return 2.0 * y;
    case LossKind::Mahalanobis: return 2.0 * (loss.matrix() * y);
    case LossKind::NegEntropy: return y.array().log() + 1.0;
    case LossKind::BinaryEntropy: {
      Vec g(1);
      g[0] = std::log(y[0]) - std::log1p(-y[0]);
      return g;
    }
  }
  return Vec();
}

Vec phi_hessian_times(const LossSpec& loss, const Vec& y, const Vec& v) {
  switch (loss.kind()) {
    case LossKind::Square: return 2.0 * v;
    case LossKind::Mahalanobis: return 2.0 * (loss.matrix() * v);
    case LossKind::NegEntropy: return v.cwiseQuotient(y);
    case LossKind::BinaryEntropy: {
      Vec out(1);
      out[0] = v[0] / (y[0] * (1.0 - y[0]));
      return out;
    }
  }
  return Vec();
}

double divergence(const LossSpec& loss, const Vec& y1, const Vec& y2) {
  require_in("divergence", loss, loss.domain().omega, y1);
  require_interior("divergence", loss, y2);
  switch (loss.kind()) {
    case LossKind::Square: return (y1 - y2).squaredNorm();
    case LossKind::Mahalanobis: {
      const Vec diff = y1 - y2;
      return diff.dot(loss.matrix() * diff);
    }
    case LossKind::NegEntropy: {
      // Generalized KL: sum y1 log(y1/y2) - y1 + y2. The linear terms cancel on
      // the simplex up to the membership tolerance; keeping them makes this
      // exactly the Bregman divergence of sum y log y.
      double s = 0.0;
      for (Eigen::Index i = 0; i < y1.size(); ++i) s += xlog_ratio(y1[i], y2[i]) - y1[i] + y2[i];
      return s;
    }
    case LossKind::BinaryEntropy: {
      const double p = y1[0];
      const double q = y2[0];
      return xlog_ratio(p, q) + xlog_ratio(1.0 - p, 1.0 - q);
    }
  }
  return 0.0;
}

double triangle_residual(const LossSpec& loss, const Vec& x, const Vec& y, const Vec& z) {
  const double lhs = divergence(loss, x, y);
  const double rhs = divergence(loss, x, z) + divergence(loss, z, y) -
                     (x - z).dot(phi_gradient(loss, y) - phi_gradient(loss, z));
  return lhs - rhs;
}

LossConstants loss_constants(const LossSpec& loss) { return loss_constants(loss, loss.params()); }

LossConstants loss_constants(const LossSpec& loss, const LossParams& params) {
  const double M = params.M;
  const double alpha = params.alpha;
  const int K = loss.K();
  if (!(M > 0.0)) throw Error(ErrorCode::DomainViolation, "loss_constants: M must be positive");
  const double sqrtK = std::sqrt(static_cast<double>(K));
  LossConstants c;
  c.K = K;
  std::ostringstream why;
  switch (loss.kind()) {
    case LossKind::Square:
      c.d_omega = 2.0 * M;
      c.L_g = 2.0;
      c.m0 = sqrtK * M;
      c.a0 = c.m0;
      c.m1 = K * M * M;
      c.m2 = c.m1;
      c.m3 = 2.0 * sqrtK * M;
      c.gamma = 2.0 * sqrtK * M;
      c.L_phi = 2.0 * sqrtK * M;
      why << "square on [-M,M]^K: d=2M, L_g=2, m0=a0=sqrt(K)M, m1=m2=KM^2, "
             "m3=gamma=L_phi=2sqrt(K)M";
      break;
    case LossKind::Mahalanobis: {
      Eigen::SelfAdjointEigenSolver<Mat> eig(loss.matrix(), Eigen::EigenvaluesOnly);
      const double lmax = eig.eigenvalues().maxCoeff();
      c.d_omega = 2.0 * M;
      c.L_g = 2.0 * lmax;
      c.m0 = sqrtK * M;
      c.a0 = c.m0;
      c.m1 = lmax * K * M * M;
      c.m2 = c.m1;
      c.m3 = 2.0 * lmax * c.m0;
      c.gamma = c.m3;
      c.L_phi = 2.0 * lmax * c.m0;
      why << "mahalanobis on [-M,M]^K via Hessian 2A (implementation-derived): "
             "L_g=2*lmax, L_phi=m3=gamma=2*lmax*m0, m1=m2=lmax*K*M^2, lmax="
          << lmax;
      break;
    }
    case LossKind::NegEntropy: {
      if (!(alpha > 0.0) || alpha * K > 1.0 + 1e-15) {
        throw Error(ErrorCode::DomainViolation, "loss_constants: alpha*K must lie in (0, 1]");
      }
      const double a = 1.0 + 2.0 * M + std::log(static_cast<double>(K));
      c.d_omega = 1.0;
      c.L_g = K * std::exp(2.0 * M);
      c.L_phi = sqrtK * a;
      c.gamma = sqrtK * a;
      c.m0 = 1.0;
      c.a0 = 1.0;
      c.m1 = std::log(static_cast<double>(K));
      c.m2 = c.m1;
      c.m3 = sqrtK * (1.0 + std::abs(std::log(alpha)));
      why << "neg-entropy on simplex, range B1 (coords >= exp(-2M)/K): d=1, L_g=K e^{2M}, "
             "L_phi=gamma=sqrt(K)(1+2M+log K), m0=a0=1, m1=m2=log K, m3=sqrt(K)(1+|log alpha|)";
      break;
    }
    case LossKind::BinaryEntropy: {
      if (!(alpha > 0.0) || alpha * 2.0 > 1.0 + 1e-15) {
        throw Error(ErrorCode::DomainViolation, "loss_constants: alpha must lie in (0, 1/2]");
      }
      const double s = params.floor > 0.0 ? params.floor : default_floor(2, M);
      const double logit = std::log((1.0 - s) / s);
      c.d_omega = 1.0;
      c.L_g = 1.0 / (s * (1.0 - s));
      c.L_phi = logit;
      c.gamma = logit;
      c.m0 = 1.0;
      c.a0 = 1.0 - alpha;
      c.m1 = std::log(2.0);
      c.m2 = std::log(2.0);
      c.m3 = std::log((1.0 - alpha) / alpha);
      why << "binary entropy on [0,1], range [s,1-s] with s=" << s
          << " (implementation-derived): L_g=1/(s(1-s)), L_phi=gamma=log((1-s)/s), m0=1, "
             "a0=1-alpha, m1=m2=log 2, m3=log((1-alpha)/alpha)";
      break;
    }
  }
  c.M0 = c.m1 + c.m2 + c.m3 * (c.m0 + c.a0);
  c.M1 = 2.0 * c.m3 * (c.m0 + c.a0);
  c.M2 = 6.0 * c.gamma * (c.m0 + c.a0);
  c.derivation = why.str();
  return c;
}

}  // namespace robustlaw
