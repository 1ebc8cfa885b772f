#pragma once

#include "robustlaw/bregman.hpp"
#include "robustlaw/decomposition.hpp"
#include "robustlaw/rng.hpp"
#include "robustlaw/sampler.hpp"
#include "robustlaw/types.hpp"

#include <string>
#include <vector>

namespace robustlaw {

enum class Statement {
  Obs33,         ///< lower tail of the mean of Phi_2
  Obs34,         ///< lower tail of the mean of Gamma_1
  Obs35,         ///< worst case over f of the mean of Gamma_2
  Lem36,         ///< mean of Gamma_3 for a fixed L-Lipschitz f, one component
  Lem51_vhat,    ///< mean of T * V_hat, any coordinate
  Lem52_vtilde,  ///< worst case over f of the mean of T * V_tilde, any coordinate
  Hoeffding,     ///< uniform [0, 1] samples
  VectorBD,      ///< uniform vectors on the sphere of radius b
  Azuma,         ///< +-c random-sign walk
};

const char* to_string(Statement s);
Statement statement_from_string(const std::string& name);

double hoeffding_bound(std::size_t n, double t, double range_width);
double vector_bd_bound(std::size_t n, double t, double b);
double azuma_bound(std::size_t n, double t, double c);

struct SubGaussEstimate {
  double sigma_hat = 0.0;
  std::vector<double> lambda_grid;
  std::vector<double> skipped;  ///< grid points whose MGF estimate overflowed
  std::string method = "MGF-grid";
};

SubGaussEstimate subgaussian_estimate(const std::vector<double>& samples);

/// Everything a tail check may need. f and L are only read by the statements
/// that evaluate a predictor; grads only by Lem36 / Lem51.
struct TailContext {
  TailContext(LossSpec loss_, DataModel model_);

  LossSpec loss;
  DataModel model;
  LossConstants constants;
  Predictor f;
  double L = 0.0;
  GradEstimate grads;
  double sigma2 = 0.0;
  double C = 2.0;  ///< multiplication constant for bounded times sub-Gaussian
  double c = 1.0;  ///< isoperimetry constant of the covariates
  double b = 1.0;  ///< vector radius for VectorBD
  int vector_dim = 3;
  double azuma_c = 1.0;
};

/// Natural unit for eps per statement (eps is swept as fractions of it).
double relevant_scale(Statement s, const TailContext& ctx);
/// Uncapped analytic bound on Pr[event] at (eps, n).
double analytic_bound(Statement s, const TailContext& ctx, double eps, std::size_t n);

struct TailReport {
  Statement statement = Statement::Obs33;
  double eps = 0.0;
  std::size_t n = 0;
  std::size_t trials = 0;
  double empirical_freq = 0.0;
  double analytic_bound = 0.0;  ///< capped at 1
  double analytic_bound_uncapped = 0.0;
  double mc_stderr = 0.0;
  double C = 0.0;
  bool pass = true;
  bool vacuous = false;
};

/// Runs `trials` independent experiments of n samples each (trial t uses
/// stream derive_stream(stream, t)) and reports one record per eps. Results
/// do not depend on `jobs`.
std::vector<TailReport> run_tail_check(Statement s, const TailContext& ctx,
                                       const std::vector<double>& eps, std::size_t n,
                                       std::size_t trials, std::uint64_t seed, StreamId stream,
                                       int jobs = 1);

enum class ProductZ { Zero, Constant, SignCoupled };

struct ProductCheck {
  double sigma_hat = 0.0;
  double M = 0.0;
  double sigma = 0.0;
  double ratio = 0.0;  ///< sigma_hat / (M sigma), 0 when Z vanishes
};

/// Sub-Gaussian parameter of Z X for |Z| <= M and X ~ N(0, sigma^2).
ProductCheck subgaussian_product_check(ProductZ z, double M, double sigma, std::size_t trials,
                                       std::uint64_t seed, StreamId stream);

std::string tail_report_json(const TailReport& r);

}  // namespace robustlaw
