#pragma once

#include "robustlaw/config.hpp"
#include "robustlaw/types.hpp"

#include <string>

namespace robustlaw {

enum class LossKind { Square, Mahalanobis, NegEntropy, BinaryEntropy };

const char* to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);

/// Compact convex region with a decidable membership predicate.
struct Region {
  enum class Kind {
    Box,      ///< [lo, hi]^K
    Simplex,  ///< probability simplex, every coordinate >= floor (floor may be 0)
  };

  Kind kind = Kind::Box;
  int dim = 1;
  double lo = 0.0;
  double hi = 0.0;
  double floor = 0.0;

  static Region box(int dim, double lo, double hi);
  static Region simplex(int dim, double floor = 0.0);

  bool contains(const Vec& y, double tol = 1e-9) const;
  /// Index of the first offending coordinate, or -1 (sum violations report dim).
  int first_violation(const Vec& y, double tol = 1e-9) const;
  std::string describe() const;
};

/// Omega is the loss domain; A holds the conditional means, R the range of the
/// function class. A and R are sub-regions of Omega.
struct DomainSpec {
  Region omega;
  Region a_region;
  Region r_region;
};

struct LossParams {
  double M = 1.0;      ///< box half-width / softmax pre-head bound
  double alpha = 0.0;  ///< label floor for classification losses
  double floor = 0.0;  ///< simplex floor of the range; <= 0 selects exp(-2M)/K
};

class LossSpec {
 public:
  static LossSpec square(int K, double M);
  static LossSpec mahalanobis(const Mat& A, double M);
  static LossSpec neg_entropy(int K, double M, double alpha, double floor = 0.0);
  /// Scalar logistic loss; labels in {0, 1}, predictions in (0, 1).
  static LossSpec binary_entropy(double M, double alpha);

  static LossSpec from_config(const Config& cfg);
  void to_config(Config& cfg) const;

  LossKind kind() const { return kind_; }
  int K() const { return K_; }
  const Mat& matrix() const { return A_; }
  const LossParams& params() const { return params_; }
  const DomainSpec& domain() const { return domain_; }

 private:
  LossSpec() = default;
  void build_domain();

  LossKind kind_ = LossKind::Square;
  int K_ = 1;
  Mat A_;
  LossParams params_;
  DomainSpec domain_;
};

/// Regularity constants consumed by every downstream bound.
struct LossConstants {
  int K = 1;
  double d_omega = 0.0;  ///< l_inf diameter of Omega
  double L_phi = 0.0;    ///< Lipschitz constant of phi on R
  double L_g = 0.0;      ///< per-coordinate Lipschitz constant of grad phi on R
  double gamma = 0.0;    ///< sup over the range of |grad phi|
  double m0 = 0.0;       ///< max |w| over Omega
  double a0 = 0.0;       ///< sup |a| over A
  double m1 = 0.0;       ///< max |phi| over Omega
  double m2 = 0.0;       ///< sup |phi| over A
  double m3 = 0.0;       ///< sup |grad phi| over A
  double M0 = 0.0;
  double M1 = 0.0;
  double M2 = 0.0;
  std::string derivation;
};

double phi_value(const LossSpec& loss, const Vec& y);
Vec phi_gradient(const LossSpec& loss, const Vec& y);

/// D(y1, y2). y1 may lie on the boundary of Omega (one-hot labels), y2 must be
/// strictly interior. The entropy losses use the 0 log 0 = 0 convention, which
/// for a one-hot y1 and y2 on the simplex is the cross-entropy -log(y2_k).
double divergence(const LossSpec& loss, const Vec& y1, const Vec& y2);

/// D(x,y) - D(x,z) - D(z,y) + <x - z, grad phi(y) - grad phi(z)>.
double triangle_residual(const LossSpec& loss, const Vec& x, const Vec& y, const Vec& z);

/// Hessian-vector product, used by the trainer's backward pass.
Vec phi_hessian_times(const LossSpec& loss, const Vec& y, const Vec& v);

LossConstants loss_constants(const LossSpec& loss);
/// Same constants with M / alpha overridden.
LossConstants loss_constants(const LossSpec& loss, const LossParams& params);

}  // namespace robustlaw
