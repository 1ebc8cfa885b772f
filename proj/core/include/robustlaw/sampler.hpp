#pragma once

#include "robustlaw/bregman.hpp"
#include "robustlaw/config.hpp"
#include "robustlaw/rng.hpp"
#include "robustlaw/types.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace robustlaw {

enum class LabelLaw { Regression, Classification };

enum class MeanMap {
  Zero,          ///< regression: g(x) = 0
  Tanh,          ///< regression: g_l(x) = a tanh(beta sqrt(d) x_{l mod d})
  Clip,          ///< regression: g_l(x) = clip(beta x_{l mod d}, -a, a)
  Constant,      ///< classification: q(x) = q
  SoftmaxFloor,  ///< classification: q(x) = alpha + (1 - K alpha) softmax(beta sqrt(d) x_{0..K-1})
};

enum class LabelEncoding { OneHot, Binary };

/// Mixture of normalized Gaussians N(mu_k, I/d) with a label law that depends
/// on x only, so Y is independent of the component label given X and
/// E[Y | X = x] is available in closed form.
struct DataModel {
  int d = 1;
  int r = 1;
  Vec weights;  ///< r-simplex
  Mat means;    ///< r x d, one component mean per row
  LabelLaw law = LabelLaw::Regression;
  MeanMap mean_map = MeanMap::Zero;
  int K = 1;          ///< label dimension as seen by the loss
  double M = 1.0;     ///< regression labels stay in [-M, M]^K
  double amplitude = 0.0;
  double beta = 1.0;
  double noise_scale = 0.0;  ///< half-width of the symmetric uniform label noise
  int classes = 2;
  double alpha = 0.0;
  Vec q_const;
  LabelEncoding encoding = LabelEncoding::OneHot;
  std::uint64_t seed = 0;

  /// Throws ConfigError on inconsistent fields.
  void validate() const;

  static DataModel from_config(const Config& cfg, const LossSpec& loss);
};

struct Sample {
  Vec x;
  Vec y;
  int g = 0;  ///< generating mixture component
};

std::vector<Sample> sample_batch(const DataModel& model, std::size_t n, StreamId stream);

/// Draws one covariate from component k.
Vec sample_component(const DataModel& model, int k, CounterRng& rng);
Sample sample_one(const DataModel& model, CounterRng& rng);

Vec conditional_mean(const DataModel& model, const Vec& x);

/// Class probabilities q(x) (length `classes`) for classification models.
Vec class_probabilities(const DataModel& model, const Vec& x);

/// Half-widths t_l(x) of the symmetric noise actually applied at x.
Vec noise_half_widths(const DataModel& model, const Vec& x);

struct NoiseFloor {
  double sigma2 = 0.0;
  double mc_stderr = 0.0;
  std::size_t n_mc = 0;
  std::string provenance;
};

/// sigma^2 = E[D(Y, E[Y|X])]. The inner expectation over Y | X is analytic for
/// every built-in label law; the outer one over X is Monte Carlo.
NoiseFloor noise_floor(const DataModel& model, const LossSpec& loss, std::size_t n_mc,
                       StreamId stream);

struct IsoperimetryWitness {
  double subgaussian_hat = 0.0;
  double bound = 0.0;  ///< L sqrt(c / d), c = 1 for normalized Gaussians
};

IsoperimetryWitness isoperimetry_witness(const DataModel& model,
                                         const std::function<double(const Vec&)>& f,
                                         double lipschitz, std::size_t n_mc, StreamId stream);

/// CSV columns g, x_0..x_{d-1}, y_0..y_{K-1}.
void write_samples_csv(std::ostream& out, const std::vector<Sample>& samples);

}  // namespace robustlaw
