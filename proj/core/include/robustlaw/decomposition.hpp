#pragma once

#include "robustlaw/bregman.hpp"
#include "robustlaw/rng.hpp"
#include "robustlaw/sampler.hpp"
#include "robustlaw/types.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace robustlaw {

/// Monte Carlo estimate of E[grad phi(f(X))], overall and per mixture component.
struct GradEstimate {
  Vec overall;
  Vec overall_stderr;
  Mat per_component;  ///< r x K, empty unless conditioned on the component
  Mat per_component_stderr;
  std::size_t n_mc = 0;
  std::string provenance;
};

struct DecompositionRecord {
  double z = 0.0;
  double phi1 = 0.0;
  double phi2 = 0.0;
  double gamma1 = 0.0;
  double gamma2 = 0.0;
  double gamma3 = 0.0;
  double sigma2 = 0.0;
  Vec e_grad_f;
  std::string e_grad_provenance;
  double residual = 0.0;      ///< z - sigma2 - (phi1 + phi2 + gamma1 + gamma2 + gamma3)
  double residual_rel = 0.0;  ///< |residual| / max(sum of |terms|, 1e-3)
};

/// Per-sample split of Z - sigma^2. sigma2 and e_grad_f are inputs so one
/// estimate is shared across a run.
DecompositionRecord decompose(const LossSpec& loss, const DataModel& model, const Predictor& f,
                              const Sample& s, double sigma2, const Vec& e_grad_f,
                              const std::string& e_grad_provenance = "caller");

GradEstimate mean_grad_f(const LossSpec& loss, const DataModel& model, const Predictor& f,
                         std::size_t n_mc, StreamId stream, bool condition_on_component);

/// sigma2 - (1/n) sum D(y_i, f(x_i)); f eps-overfits iff the result exceeds eps.
double empirical_overfit_gap(const LossSpec& loss, const Predictor& f,
                             const std::vector<Sample>& dataset, double sigma2);

/// Rows index samples, columns index output coordinates.
struct MixtureTermsRecord {
  Mat t;        ///< -(y - E[Y|X])
  Mat v;        ///< grad phi(f(x)) - E[grad phi(f(X))]
  Mat v_hat;    ///< grad phi(f(x)) - E[grad phi(f(X)) | G]
  Mat v_tilde;  ///< E[grad phi(f(X)) | G] - E[grad phi(f(X))]
  Mat u;        ///< t * v
  double split_residual = 0.0;    ///< max |v - v_hat - v_tilde|
  double product_residual = 0.0;  ///< max |u - t v|
};

MixtureTermsRecord mixture_terms(const LossSpec& loss, const DataModel& model, const Predictor& f,
                                 const std::vector<Sample>& samples, const GradEstimate& grads);

/// CSV columns i, z, phi1, phi2, gamma1, gamma2, gamma3, residual.
void write_decomposition_csv(std::ostream& out, const std::vector<DecompositionRecord>& records);

}  // namespace robustlaw
