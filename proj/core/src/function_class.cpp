#include "robustlaw/function_class.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace robustlaw {
namespace {

using boost::multiprecision::cpp_int;

// Exact-count budget for epsilon_net_size, in bits of the numerator power.
constexpr double kExactCountBits = 2.0e6;

[[noreturn]] void config_error(const std::string& what) {
  throw Error(ErrorCode::ConfigError, "function class: " + what);
}

std::string head_name(Head h) { return h == Head::Softmax ? "softmax" : "identity_clip"; }

Head head_from_string(const std::string& s) {
  if (s == "softmax") return Head::Softmax;
  if (s == "identity_clip" || s == "identity" || s == "clip") return Head::IdentityClip;
  config_error("unknown class.head " + s);
}

void unpack(const FunctionClass& cls, const Vec& w, std::vector<Mat>& W, std::vector<Vec>& b) {
  const int L = cls.num_layers();
  W.resize(L);
  b.resize(L);
  Eigen::Index off = 0;
  for (int k = 0; k < L; ++k) {
    const int in = cls.arch[k], out = cls.arch[k + 1];
    W[k] = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        w.data() + off, out, in);
    off += static_cast<Eigen::Index>(in) * out;
    b[k] = w.segment(off, out);
    off += out;
  }
}

void pack_into(const FunctionClass& cls, const std::vector<Mat>& W, const std::vector<Vec>& b,
               Vec& w) {
  w.resize(static_cast<Eigen::Index>(cls.num_params()));
  Eigen::Index off = 0;
  for (int k = 0; k < cls.num_layers(); ++k) {
    const int in = cls.arch[k], out = cls.arch[k + 1];
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        w.data() + off, out, in) = W[k];
    off += static_cast<Eigen::Index>(in) * out;
    w.segment(off, out) = b[k];
    off += out;
  }
}

double clip_value(const FunctionClass& cls, double z) {
  if (cls.clip == ClipMode::Smooth) return cls.M * std::tanh(z / cls.M);
  return std::clamp(z, -cls.M, cls.M);
}

double clip_slope(const FunctionClass& cls, double z) {
  if (cls.clip == ClipMode::Smooth) {
    const double t = std::tanh(z / cls.M);
    return 1.0 - t * t;
  }
  return (z > -cls.M && z < cls.M) ? 1.0 : 0.0;
}

Vec softmax(const Vec& c) {
  const double mx = c.maxCoeff();
  Vec e = (c.array() - mx).exp();
  return e / e.sum();
}

// Uniform direction scaled to a radius drawn uniformly from the ball.
Vec ball_point(int d, double R, CounterRng& rng) {
  Vec v = rng.normal_vector(d, 1.0);
  const double nv = v.norm();
  if (nv == 0.0) return Vec::Zero(d);
  return v * (R * std::pow(rng.uniform(), 1.0 / d) / nv);
}

Vec box_point(const ParamBox& box, CounterRng& rng) {
  Vec w(box.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng.uniform(box.lo[i], box.hi[i]);
  return w;
}

struct Rational {
  cpp_int num;
  int exp = 0;  // value = num * 2^exp
};

Rational exact(double x) {
  int e = 0;
  const double m = std::frexp(x, &e);
  Rational r;
  r.num = cpp_int(static_cast<long long>(std::ldexp(m, 53)));
  r.exp = e - 53;
  return r;
}

}  // namespace

bool ParamBox::contains(const Vec& w, double tol) const {
  if (w.size() != lo.size()) return false;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (!(w[i] >= lo[i] - tol && w[i] <= hi[i] + tol)) return false;
  }
  return true;
}

FunctionClass FunctionClass::from_config(const Config& cfg, const LossSpec& loss) {
  FunctionClass cls;
  for (double a : cfg.get_list("class.arch")) {
    if (a != std::floor(a) || a < 1) config_error("class.arch entries must be positive integers");
    cls.arch.push_back(static_cast<int>(a));
  }
  if (cls.arch.size() < 2) config_error("class.arch needs at least input and output widths");
  const int L = cls.num_layers();
  const auto boxes = cfg.get_list("class.param_box");
  if (boxes.size() == 1) {
    cls.layer_bound.assign(L, boxes[0]);
  } else if (static_cast<int>(boxes.size()) == L) {
    cls.layer_bound = boxes;
  } else {
    config_error("class.param_box needs one bound or one per layer");
  }
  const bool entropy =
      loss.kind() == LossKind::NegEntropy || loss.kind() == LossKind::BinaryEntropy;
  cls.head = head_from_string(cfg.get_string("class.head", entropy ? "softmax" : "identity_clip"));
  cls.M = cfg.get_double("class.M", loss.params().M);
  const std::string clip = cfg.get_string("class.clip", "hard");
  if (clip == "hard") {
    cls.clip = ClipMode::Hard;
  } else if (clip == "smooth") {
    cls.clip = ClipMode::Smooth;
  } else {
    config_error("class.clip must be hard or smooth");
  }
  cls.input_radius = cfg.get_double("class.input_radius", 3.0);
  cls.binary_output = loss.kind() == LossKind::BinaryEntropy;

  if (entropy != (cls.head == Head::Softmax)) {
    config_error("entropy losses need the softmax head, box losses the identity_clip head");
  }
  if (cls.M > loss.params().M * (1.0 + 1e-12)) {
    config_error("class.M exceeds the loss range bound M");
  }
  const int want = cls.binary_output ? 2 : loss.K();
  if (cls.arch.back() != want) {
    config_error("class.arch output width must be " + std::to_string(want));
  }
  cls.validate();
  return cls;
}

void FunctionClass::validate() const {
  if (arch.size() < 2) config_error("arch needs at least two widths");
  for (int a : arch) {
    if (a < 1) config_error("arch widths must be positive");
  }
  if (static_cast<int>(layer_bound.size()) != num_layers()) {
    config_error("one parameter bound per layer required");
  }
  for (double b : layer_bound) {
    if (!(b >= 0.0) || !std::isfinite(b)) config_error("parameter bounds must be finite and >= 0");
  }
  if (!(M > 0.0)) config_error("M must be positive");
  if (!(input_radius >= 0.0)) config_error("input_radius must be >= 0");
  if (binary_output && (head != Head::Softmax || arch.back() != 2)) {
    config_error("binary output needs a 2-logit softmax head");
  }
}

std::size_t FunctionClass::num_params() const {
  std::size_t p = 0;
  for (int k = 0; k < num_layers(); ++k) {
    p += static_cast<std::size_t>(arch[k]) * arch[k + 1] + arch[k + 1];
  }
  return p;
}

ParamBox FunctionClass::box() const {
  ParamBox box;
  const auto p = static_cast<Eigen::Index>(num_params());
  box.lo.resize(p);
  box.hi.resize(p);
  Eigen::Index off = 0;
  for (int k = 0; k < num_layers(); ++k) {
    const Eigen::Index n = static_cast<Eigen::Index>(arch[k]) * arch[k + 1] + arch[k + 1];
    box.lo.segment(off, n).setConstant(-layer_bound[k]);
    box.hi.segment(off, n).setConstant(layer_bound[k]);
    off += n;
  }
  return box;
}

// Layer k perturbation moves the pre-activation by at most
// |dW_k| a_{k-1} + |db_k| <= sqrt(a_{k-1}^2 + 1) |dtheta_k|, where a_{k-1} bounds
// the input norm of layer k; downstream layers amplify by at most their
// Frobenius bound s_j. Cauchy-Schwarz over layers gives J.
double FunctionClass::j_cert() const {
  const int L = num_layers();
  std::vector<double> s(L), a(L + 1);
  a[0] = input_radius;
  for (int k = 0; k < L; ++k) {
    const double out = arch[k + 1], in = arch[k];
    s[k] = layer_bound[k] * std::sqrt(out * in);
    a[k + 1] = s[k] * a[k] + layer_bound[k] * std::sqrt(out);
  }
  double sum = 0.0;
  for (int k = 0; k < L; ++k) {
    double amp = 1.0;
    for (int j = k + 1; j < L; ++j) amp *= s[j];
    const double c = amp * std::sqrt(a[k] * a[k] + 1.0);
    sum += c * c;
  }
  return std::sqrt(sum);
}

Network::Network(const FunctionClass& cls, const Vec& params)
    : cls_(std::make_shared<const FunctionClass>(cls)), params_(params) {
  cls.validate();
  if (static_cast<std::size_t>(params.size()) != cls.num_params()) {
    throw Error(ErrorCode::ParamOutOfDomain,
                "parameter vector has " + std::to_string(params.size()) + " entries, class has " +
                    std::to_string(cls.num_params()));
  }
  auto W = std::make_shared<std::vector<Mat>>();
  auto b = std::make_shared<std::vector<Vec>>();
  unpack(cls, params, *W, *b);
  weights_ = std::move(W);
  biases_ = std::move(b);
}

Vec Network::logits(const Vec& x) const {
  const auto& W = *weights_;
  const auto& b = *biases_;
  if (x.size() != cls_->input_dim()) {
    throw Error(ErrorCode::DomainViolation, "network input has wrong dimension");
  }
  Vec h = x;
  for (std::size_t k = 0; k < W.size(); ++k) {
    h = W[k] * h + b[k];
    if (k + 1 < W.size()) h = h.cwiseMax(0.0);
  }
  return h;
}

Vec Network::apply_head(const Vec& z) const {
  Vec c(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) c[i] = clip_value(*cls_, z[i]);
  if (cls_->head == Head::IdentityClip) return c;
  Vec p = softmax(c);
  if (cls_->binary_output) return p.head(1);
  return p;
}

Vec Network::operator()(const Vec& x) const { return apply_head(logits(x)); }

Mat Network::forward(const Mat& X) const {
  const auto& W = *weights_;
  const auto& b = *biases_;
  Mat H = X;
  for (std::size_t k = 0; k < W.size(); ++k) {
    Mat U = H * W[k].transpose();
    U.rowwise() += b[k].transpose();
    H = (k + 1 < W.size()) ? Mat(U.cwiseMax(0.0)) : U;
  }
  Mat out(H.rows(), cls_->output_dim());
  for (Eigen::Index i = 0; i < H.rows(); ++i) out.row(i) = apply_head(H.row(i).transpose());
  return out;
}

Mat Network::jacobian(const Vec& x, bool pre_head) const {
  const auto& W = *weights_;
  const auto& b = *biases_;
  Vec h = x;
  Mat J = Mat::Identity(x.size(), x.size());
  for (std::size_t k = 0; k < W.size(); ++k) {
    const Vec u = W[k] * h + b[k];
    J = W[k] * J;
    if (k + 1 < W.size()) {
      for (Eigen::Index i = 0; i < u.size(); ++i) {
        if (!(u[i] > 0.0)) J.row(i).setZero();
      }
      h = u.cwiseMax(0.0);
    } else {
      h = u;
    }
  }
  if (pre_head) return J;
  Vec c(h.size());
  for (Eigen::Index i = 0; i < h.size(); ++i) {
    c[i] = clip_value(*cls_, h[i]);
    J.row(i) *= clip_slope(*cls_, h[i]);
  }
  if (cls_->head == Head::IdentityClip) return J;
  const Vec p = softmax(c);
  Mat S = Mat(p.asDiagonal()) - p * p.transpose();
  Mat out = S * J;
  if (cls_->binary_output) return out.topRows(1);
  return out;
}

Predictor Network::as_predictor() const {
  Network self = *this;
  return [self](const Vec& x) { return self(x); };
}

Predictor Network::logits_predictor() const {
  Network self = *this;
  return [self](const Vec& x) { return self.logits(x); };
}

Network realize(const FunctionClass& cls, const Vec& w, ParamPolicy policy) {
  if (static_cast<std::size_t>(w.size()) != cls.num_params()) {
    throw Error(ErrorCode::ParamOutOfDomain, "parameter vector has wrong length");
  }
  const ParamBox box = cls.box();
  if (box.contains(w)) return Network(cls, w);
  if (policy == ParamPolicy::Project) return Network(cls, box.project(w));
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (!(w[i] >= box.lo[i] && w[i] <= box.hi[i])) {
      std::ostringstream msg;
      msg << "parameter " << i << " = " << w[i] << " outside [" << box.lo[i] << ", " << box.hi[i]
          << "]";
      throw Error(ErrorCode::ParamOutOfDomain, msg.str());
    }
  }
  throw Error(ErrorCode::ParamOutOfDomain, "parameter vector outside the box");
}

Vec init_params(const FunctionClass& cls, std::uint64_t seed, StreamId stream) {
  CounterRng rng(seed, stream);
  std::vector<Mat> W(cls.num_layers());
  std::vector<Vec> b(cls.num_layers());
  for (int k = 0; k < cls.num_layers(); ++k) {
    const int in = cls.arch[k], out = cls.arch[k + 1];
    const double sd = std::sqrt(2.0 / in);
    const double B = cls.layer_bound[k];
    W[k].resize(out, in);
    for (int i = 0; i < out; ++i)
      for (int j = 0; j < in; ++j) W[k](i, j) = std::clamp(sd * rng.normal(), -B, B);
    b[k] = Vec::Zero(out);
  }
  Vec w;
  pack_into(cls, W, b, w);
  return w;
}

double parameterization_lipschitz_estimate(const FunctionClass& cls, std::size_t trials,
                                           std::uint64_t seed, StreamId stream) {
  if (trials < 100) config_error("parameterization estimate needs at least 100 trials");
  const ParamBox box = cls.box();
  if (box.diameter() == 0.0) return 0.0;
  CounterRng rng(seed, stream);
  double best = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const Vec w1 = box_point(box, rng);
    Vec w2;
    if (t % 2 == 0) {
      w2 = box_point(box, rng);
    } else {
      w2 = box.project(w1 + rng.normal_vector(w1.size(), 1e-3 * box.diameter()));
    }
    const double dw = (w1 - w2).norm();
    if (dw == 0.0) continue;
    Vec x = ball_point(cls.input_dim(), cls.input_radius, rng);
    // Half the probes sit on the sphere, where the bias-free part is largest.
    if (t % 4 < 2 && x.norm() > 0.0) x *= cls.input_radius / x.norm();
    const Network f1(cls, w1), f2(cls, w2);
    best = std::max(best, (f1(x) - f2(x)).norm() / dw);
  }
  return best;
}

SpectralNorm spectral_norm(const Mat& A, int max_iterations, double rel_tol) {
  SpectralNorm out;
  if (A.size() == 0 || A.norm() == 0.0) {
    out.converged = true;
    return out;
  }
  // Deterministic start with every coordinate nonzero.
  Vec v(A.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = 1.0 + 0.37 * std::sin(1.0 + i);
  v.normalize();
  double prev = 0.0;
  for (int it = 1; it <= max_iterations; ++it) {
    Vec Av = A * v;
    const double sigma = Av.norm();
    Vec next = A.transpose() * Av;
    const double nn = next.norm();
    out.iterations = it;
    if (nn == 0.0) {
      // Start vector landed in the null space; restart from a coordinate axis.
      v.setZero();
      v[it % v.size()] = 1.0;
      continue;
    }
    v = next / nn;
    if (it > 1 && std::abs(sigma - prev) <= rel_tol * sigma) {
      out.value = std::max(sigma, (A * v).norm());
      out.converged = true;
      return out;
    }
    prev = sigma;
  }
  out.value = A.norm();
  out.converged = false;
  return out;
}

LipschitzUpper lipschitz_upper_bound(const Network& net) {
  LipschitzUpper out;
  out.value = 1.0;
  for (const Mat& W : net.weights()) {
    const SpectralNorm s = spectral_norm(W);
    out.layer_norms.push_back(s.value);
    out.converged = out.converged && s.converged;
    out.value *= s.value;
  }
  return out;
}

double lipschitz_lower_bound(const Network& net, std::size_t probes, std::uint64_t seed,
                             StreamId stream, bool pre_head) {
  if (probes < 100) config_error("lipschitz_lower_bound needs at least 100 probes");
  const int d = net.function_class().input_dim();
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  auto f = [&](const Vec& x) { return pre_head ? net.logits(x) : net(x); };
  CounterRng rng(seed, stream);
  double best = 0.0;
  for (std::size_t t = 0; t < probes; ++t) {
    const Vec x = rng.normal_vector(d, sd);
    const Vec fx = f(x);

    // Local direction of largest stretch.
    const Mat J = net.jacobian(x, pre_head);
    if (J.norm() > 0.0) {
      Eigen::JacobiSVD<Mat> svd(J, Eigen::ComputeThinV);
      const Vec v = svd.matrixV().col(0);
      for (double h : {1e-6, 1e-4}) {
        best = std::max(best, (f(x + h * v) - fx).norm() / h);
      }
    }

    Vec u = rng.normal_vector(d, 1.0);
    const double nu = u.norm();
    if (nu == 0.0) continue;
    u /= nu;
    const double step = std::pow(10.0, -3.0 + 3.0 * rng.uniform());
    best = std::max(best, (f(x + step * u) - fx).norm() / step);
  }
  return best;
}

NetSize epsilon_net_size(double W, std::size_t p, double eps_prime) {
  if (!(W >= 0.0) || !(eps_prime > 0.0) || !std::isfinite(W) || !std::isfinite(eps_prime)) {
    throw Error(ErrorCode::NumericError, "epsilon_net_size: need W >= 0 and eps' > 0");
  }
  NetSize out;
  // A single point of B_p is within W of every other point.
  if (p == 0 || eps_prime >= W) {
    out.log_count = 0.0;
    out.count = cpp_int(1);
    return out;
  }
  out.log_count = static_cast<double>(p) * std::log1p(2.0 * W / eps_prime);

  // base = (eps' + 2W) / eps' as an exact ratio of integers.
  const Rational a = exact(W), b = exact(eps_prime);
  const int e0 = std::min(a.exp + 1, b.exp);
  const cpp_int den = b.num << (b.exp - e0);
  const cpp_int num = den + (a.num << (a.exp + 1 - e0));
  const double bits = static_cast<double>(msb(num) + 1) * static_cast<double>(p);
  if (bits <= kExactCountBits) {
    const cpp_int np = pow(num, static_cast<unsigned>(p));
    const cpp_int dp = pow(den, static_cast<unsigned>(p));
    cpp_int q = np / dp;
    if (q * dp != np) q += 1;
    out.count = q;
  }
  return out;
}

NetOfFunctions build_grid_net(const ParamBox& box, double eps_prime, double J, std::size_t budget,
                              std::uint64_t seed) {
  if (!(eps_prime > 0.0)) throw Error(ErrorCode::NumericError, "build_grid_net: eps' must be > 0");
  NetOfFunctions net;
  net.param_radius = eps_prime;
  net.radius = J * eps_prime;
  const Eigen::Index p = box.size();
  if (p == 0 || eps_prime >= box.diameter()) {
    net.center_params.push_back((box.lo + box.hi) / 2.0);
    net.count = 1;
    net.covering_rate = 1.0;
    return net;
  }
  const double h = eps_prime / std::sqrt(static_cast<double>(p));
  std::vector<std::size_t> n(p);
  double total = 1.0;
  for (Eigen::Index i = 0; i < p; ++i) {
    const double w = box.hi[i] - box.lo[i];
    n[i] = w == 0.0 ? 1 : static_cast<std::size_t>(std::ceil(w / h - 1e-12)) + 1;
    total *= static_cast<double>(n[i]);
  }
  if (total > static_cast<double>(budget)) {
    std::ostringstream msg;
    msg << "grid net needs " << total << " points, budget is " << budget;
    throw Error(ErrorCode::NetBudgetExceeded, msg.str());
  }
  auto coord = [&](Eigen::Index i, std::size_t j) {
    return std::min(box.lo[i] + static_cast<double>(j) * h, box.hi[i]);
  };
  const auto count = static_cast<std::size_t>(total);
  net.center_params.reserve(count);
  std::vector<std::size_t> idx(p, 0);
  for (std::size_t c = 0; c < count; ++c) {
    Vec w(p);
    for (Eigen::Index i = 0; i < p; ++i) w[i] = coord(i, idx[i]);
    net.center_params.push_back(std::move(w));
    for (Eigen::Index i = 0; i < p; ++i) {
      if (++idx[i] < n[i]) break;
      idx[i] = 0;
    }
  }
  net.count = count;

  // Probe the covering property; the nearest grid point is found per axis.
  CounterRng rng(seed, derive_stream(0x6e6574ULL, 0));
  constexpr int kProbes = 1000;
  int covered = 0;
  for (int t = 0; t < kProbes; ++t) {
    const Vec w = box_point(box, rng);
    double dist2 = 0.0;
    for (Eigen::Index i = 0; i < p; ++i) {
      if (n[i] == 1) {
        dist2 += (w[i] - box.lo[i]) * (w[i] - box.lo[i]);
        continue;
      }
      const auto j = std::min<std::size_t>(
          static_cast<std::size_t>(std::floor((w[i] - box.lo[i]) / h)), n[i] - 1);
      double best = std::abs(w[i] - coord(i, j));
      if (j + 1 < n[i]) best = std::min(best, std::abs(w[i] - coord(i, j + 1)));
      dist2 += best * best;
    }
    if (std::sqrt(dist2) <= eps_prime) ++covered;
  }
  net.covering_rate = static_cast<double>(covered) / kProbes;
  return net;
}

NetOfFunctions build_grid_net(const FunctionClass& cls, double eps_prime, std::size_t budget,
                              std::uint64_t seed) {
  return build_grid_net(cls.box(), eps_prime, cls.j_cert(), budget, seed);
}

TrainResult train_overfit(const FunctionClass& cls, const LossSpec& loss,
                          const std::vector<Sample>& dataset, double sigma2, double eps,
                          const Vec& w0, const TrainOptions& opts) {
  if (dataset.empty()) throw Error(ErrorCode::ConfigError, "train_overfit: empty dataset");
  if (!(eps > 0.0)) throw Error(ErrorCode::ConfigError, "train_overfit: eps must be > 0");
  if (static_cast<std::size_t>(w0.size()) != cls.num_params()) {
    throw Error(ErrorCode::ParamOutOfDomain, "train_overfit: initial parameters have wrong length");
  }
  const ParamBox box = cls.box();
  const auto n = static_cast<Eigen::Index>(dataset.size());
  const int d = cls.input_dim();
  const int K = cls.output_dim();
  const int L = cls.num_layers();
  Mat X(n, d), Y(n, K);
  for (Eigen::Index i = 0; i < n; ++i) {
    X.row(i) = dataset[i].x.transpose();
    Y.row(i) = dataset[i].y.transpose();
  }

  TrainResult res;
  res.infeasible = eps >= sigma2;
  Vec w = opts.project ? box.project(w0) : w0;
  res.w = w;
  res.gap = -std::numeric_limits<double>::infinity();

  std::vector<Mat> W, gW(L);
  std::vector<Vec> b, gb(L);
  std::vector<Mat> U(L), H(L + 1);

  for (std::size_t step = 0;; ++step) {
    unpack(cls, w, W, b);
    H[0] = X;
    for (int k = 0; k < L; ++k) {
      U[k] = H[k] * W[k].transpose();
      U[k].rowwise() += b[k].transpose();
      H[k + 1] = (k + 1 < L) ? Mat(U[k].cwiseMax(0.0)) : U[k];
    }
    const Mat& Z = U[L - 1];

    double total = 0.0;
    Mat G(n, Z.cols());  // d(mean loss)/dZ
    for (Eigen::Index i = 0; i < n; ++i) {
      Vec c(Z.cols()), slope(Z.cols());
      for (Eigen::Index j = 0; j < Z.cols(); ++j) {
        c[j] = clip_value(cls, Z(i, j));
        slope[j] = clip_slope(cls, Z(i, j));
      }
      Vec f, gc;
      if (cls.head == Head::IdentityClip) {
        f = c;
      } else {
        const Vec p = softmax(c);
        f = cls.binary_output ? Vec(p.head(1)) : p;
      }
      const Vec yi = Y.row(i).transpose();
      total += divergence(loss, yi, f);
      const Vec gf = -phi_hessian_times(loss, f, yi - f) / static_cast<double>(n);
      if (cls.head == Head::IdentityClip) {
        gc = gf;
      } else {
        const Vec p = softmax(c);
        Vec gp = Vec::Zero(p.size());
        gp.head(gf.size()) = gf;
        gc = (p.array() * (gp.array() - gp.dot(p))).matrix();
      }
      G.row(i) = gc.cwiseProduct(slope).transpose();
    }
    const double mean_loss = total / static_cast<double>(n);
    if (!std::isfinite(mean_loss) || !G.allFinite()) {
      res.error = ErrorCode::NonFiniteLoss;
      break;
    }
    const double gap = sigma2 - mean_loss;
    if (gap > res.gap) {
      res.gap = gap;
      res.w = w;
    }
    if (opts.record_every > 0 && step % opts.record_every == 0) res.history.emplace_back(step, gap);
    res.steps = step;
    if (step >= opts.max_steps) break;
    if (opts.stop_margin > 0.0 && res.gap >= opts.stop_margin * eps) break;

    for (int k = L - 1; k >= 0; --k) {
      gW[k] = G.transpose() * H[k];
      gb[k] = G.colwise().sum().transpose();
      if (k > 0) {
        Mat GH = G * W[k];
        G = GH.cwiseProduct((U[k - 1].array() > 0.0).cast<double>().matrix());
      }
    }
    Vec grad;
    pack_into(cls, gW, gb, grad);
    w -= opts.lr * grad;
    if (opts.project) w = box.project(w);
  }
  if (res.history.empty() || res.history.back().first != res.steps) {
    if (std::isfinite(res.gap)) res.history.emplace_back(res.steps, res.gap);
  }
  res.achieved = res.gap > eps;
  return res;
}

double net_perturbation_bound(const LossConstants& c, double nu) {
  if (!(nu >= 0.0)) throw Error(ErrorCode::NumericError, "net_perturbation_bound: nu must be >= 0");
  return nu * (c.d_omega * c.L_g * c.K + c.L_phi + c.gamma);
}

void write_params_binary(const std::filesystem::path& path, const Vec& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::ConfigError, "cannot write " + path.string());
  auto put = [&](std::uint64_t bits) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(buf), 8);
  };
  put(static_cast<std::uint64_t>(w.size()));
  for (Eigen::Index i = 0; i < w.size(); ++i) put(std::bit_cast<std::uint64_t>(w[i]));
}

Vec read_params_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot read " + path.string());
  auto get = [&]() {
    unsigned char buf[8];
    if (!in.read(reinterpret_cast<char*>(buf), 8)) {
      throw Error(ErrorCode::ConfigError, "truncated parameter file " + path.string());
    }
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
  };
  const std::uint64_t n = get();
  Vec w(static_cast<Eigen::Index>(n));
  for (std::uint64_t i = 0; i < n; ++i) w[static_cast<Eigen::Index>(i)] = std::bit_cast<double>(get());
  return w;
}

std::string params_manifest(const FunctionClass& cls, std::uint64_t seed) {
  std::ostringstream out;
  out << "class.arch = [";
  for (std::size_t i = 0; i < cls.arch.size(); ++i) out << (i ? ", " : "") << cls.arch[i];
  out << "]\nclass.param_box = [";
  for (std::size_t i = 0; i < cls.layer_bound.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", cls.layer_bound[i]);
    out << (i ? ", " : "") << buf;
  }
  char m[32];
  std::snprintf(m, sizeof m, "%.17g", cls.M);
  out << "]\nclass.head = " << head_name(cls.head) << "\nclass.M = " << m
      << "\nclass.clip = " << (cls.clip == ClipMode::Smooth ? "smooth" : "hard")
      << "\nparams.count = " << cls.num_params() << "\nseed = " << seed << "\n";
  return out.str();
}

}  // namespace robustlaw
