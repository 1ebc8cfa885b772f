#pragma once

#include "robustlaw/bregman.hpp"
#include "robustlaw/config.hpp"
#include "robustlaw/rng.hpp"
#include "robustlaw/sampler.hpp"
#include "robustlaw/types.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace robustlaw {

enum class Head {
  IdentityClip,  ///< clip pre-head outputs to [-M, M]^K
  Softmax,       ///< clip pre-head outputs to [-M, M]^K, then softmax
};

enum class ClipMode { Hard, Smooth };

/// Axis-aligned parameter box.
struct ParamBox {
  Vec lo;
  Vec hi;

  Eigen::Index size() const { return lo.size(); }
  double diameter() const { return (hi - lo).norm(); }
  bool contains(const Vec& w, double tol = 0.0) const;
  Vec project(const Vec& w) const { return w.cwiseMax(lo).cwiseMin(hi); }
};

/// (p, J)-realistic class of ramp (ReLU) MLPs with box-bounded parameters.
/// Parameters are flattened layer by layer: W_k row-major, then b_k.
struct FunctionClass {
  std::vector<int> arch;            ///< [d, h_1, ..., K_out]
  std::vector<double> layer_bound;  ///< per-layer half-width of the parameter box
  Head head = Head::IdentityClip;
  ClipMode clip = ClipMode::Hard;
  double M = 1.0;
  double input_radius = 3.0;  ///< inputs are certified on the ball of this radius
  bool binary_output = false;  ///< Softmax head over 2 logits, report class-0 probability

  static FunctionClass from_config(const Config& cfg, const LossSpec& loss);
  void validate() const;

  int input_dim() const { return arch.front(); }
  int output_dim() const { return binary_output ? 1 : arch.back(); }
  int num_layers() const { return static_cast<int>(arch.size()) - 1; }
  std::size_t num_params() const;
  ParamBox box() const;
  double diameter() const { return box().diameter(); }
  /// Certified J with |tau(w1)(x) - tau(w2)(x)| <= J |w1 - w2| for |x| <= input_radius.
  double j_cert() const;
};

enum class ParamPolicy { Reject, Project };

/// Immutable realization tau(w). Cheap to copy (shared layer storage).
class Network {
 public:
  Network(const FunctionClass& cls, const Vec& params);

  Vec operator()(const Vec& x) const;
  /// Output of the last affine layer, before clip/softmax.
  Vec logits(const Vec& x) const;
  /// Batched forward pass, one sample per row.
  Mat forward(const Mat& X) const;

  /// Jacobian of the output (or of the pre-head logits) at x.
  Mat jacobian(const Vec& x, bool pre_head = false) const;

  const FunctionClass& function_class() const { return *cls_; }
  const Vec& params() const { return params_; }
  const std::vector<Mat>& weights() const { return *weights_; }
  const std::vector<Vec>& biases() const { return *biases_; }

  Predictor as_predictor() const;
  Predictor logits_predictor() const;

 private:
  Vec apply_head(const Vec& z) const;

  std::shared_ptr<const FunctionClass> cls_;
  Vec params_;
  std::shared_ptr<const std::vector<Mat>> weights_;
  std::shared_ptr<const std::vector<Vec>> biases_;
};

Network realize(const FunctionClass& cls, const Vec& w, ParamPolicy policy = ParamPolicy::Reject);

/// He-style initialization clamped to the box, biases zero.
Vec init_params(const FunctionClass& cls, std::uint64_t seed, StreamId stream);

double parameterization_lipschitz_estimate(const FunctionClass& cls, std::size_t trials,
                                           std::uint64_t seed, StreamId stream);

struct LipschitzUpper {
  double value = 0.0;
  bool converged = true;  ///< false if any layer fell back to its Frobenius norm
  std::vector<double> layer_norms;
};

/// Product of per-layer spectral norms (power iteration); ramp, clip and
/// softmax are 1-Lipschitz.
LipschitzUpper lipschitz_upper_bound(const Network& net);

/// Largest spectral norm of A by power iteration on A^T A.
struct SpectralNorm {
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
};
SpectralNorm spectral_norm(const Mat& A, int max_iterations = 1000, double rel_tol = 1e-13);

/// Max of genuine difference quotients |f(x) - f(x')| / |x - x'| over random
/// pairs and local top-singular directions of the Jacobian.
double lipschitz_lower_bound(const Network& net, std::size_t probes, std::uint64_t seed,
                             StreamId stream, bool pre_head = false);

struct NetSize {
  double log_count = 0.0;  ///< natural log of the bound
  /// Exact ceil((1 + 2W/eps')^p) when it fits in the configured bit budget.
  std::optional<boost::multiprecision::cpp_int> count;
};

NetSize epsilon_net_size(double W, std::size_t p, double eps_prime);

struct NetOfFunctions {
  std::vector<Vec> center_params;
  double param_radius = 0.0;  ///< eps' in parameter space
  double radius = 0.0;        ///< J eps' in sup-norm over functions
  std::size_t count = 0;
  double covering_rate = 0.0;  ///< fraction of probe points within eps' of a center
};

NetOfFunctions build_grid_net(const ParamBox& box, double eps_prime, double J,
                              std::size_t budget = 1'000'000, std::uint64_t seed = 0);
NetOfFunctions build_grid_net(const FunctionClass& cls, double eps_prime,
                              std::size_t budget = 1'000'000, std::uint64_t seed = 0);

struct TrainOptions {
  double lr = 0.05;
  std::size_t max_steps = 2000;
  bool project = true;
  std::size_t record_every = 10;
  /// Stop once the gap exceeds eps by this factor (0 disables early exit).
  double stop_margin = 0.0;
};

struct TrainResult {
  Vec w;
  double gap = 0.0;  ///< sigma2 - empirical loss of the best iterate
  bool achieved = false;
  bool infeasible = false;  ///< eps >= sigma2, overfitting is impossible
  std::size_t steps = 0;
  std::optional<ErrorCode> error;
  std::vector<std::pair<std::size_t, double>> history;  ///< (step, gap)
};

TrainResult train_overfit(const FunctionClass& cls, const LossSpec& loss,
                          const std::vector<Sample>& dataset, double sigma2, double eps,
                          const Vec& w0, const TrainOptions& opts);

/// nu (d_Omega L_g K + L_phi + gamma).
double net_perturbation_bound(const LossConstants& constants, double nu);

void write_params_binary(const std::filesystem::path& path, const Vec& w);
Vec read_params_binary(const std::filesystem::path& path);
std::string params_manifest(const FunctionClass& cls, std::uint64_t seed);

}  // namespace robustlaw
