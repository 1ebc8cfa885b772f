#include "robustlaw/sampler.hpp"

#include "robustlaw/concentration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace robustlaw {
namespace {

double entropy(const Vec& q) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i)
    if (q[i] > 0.0) h -= q[i] * std::log(q[i]);
  return h;
}

Vec softmax(const Vec& z) {
  const double zmax = z.maxCoeff();
  Vec e = (z.array() - zmax).exp();
  return e / e.sum();
}

MeanMap mean_map_from_string(const std::string& s) {
  if (s == "zero") return MeanMap::Zero;
  if (s == "tanh") return MeanMap::Tanh;
  if (s == "clip") return MeanMap::Clip;
  if (s == "constant") return MeanMap::Constant;
  if (s == "softmax") return MeanMap::SoftmaxFloor;
  throw Error(ErrorCode::ConfigError, "unknown model.mean_map " + s);
}

}  // namespace

void DataModel::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); };
  if (d < 1) fail("model.d must be >= 1");
  if (r < 1) fail("model.r must be >= 1");
  if (weights.size() != r) fail("model.weights must have r entries");
  if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-9) {
    fail("model.weights must be nonnegative and sum to 1");
  }
  if (means.rows() != r || means.cols() != d) fail("model.means must be r x d");
  if (K < 1) fail("label dimension must be >= 1");
  if (law == LabelLaw::Regression) {
    if (mean_map != MeanMap::Zero && mean_map != MeanMap::Tanh && mean_map != MeanMap::Clip) {
      fail("regression needs mean_map zero, tanh or clip");
    }
    if (!(M > 0.0)) fail("model.M must be positive");
    if (noise_scale < 0.0) fail("model.noise_scale must be >= 0");
    if (amplitude < 0.0 || amplitude > M) fail("model.amplitude must lie in [0, M]");
  } else {
    if (mean_map != MeanMap::Constant && mean_map != MeanMap::SoftmaxFloor) {
      fail("classification needs mean_map constant or softmax");
    }
    if (classes < 2) fail("classification needs at least 2 classes");
    if (!(alpha > 0.0) || alpha * classes > 1.0 + 1e-12) fail("model.alpha must lie in (0, 1/K]");
    if (encoding == LabelEncoding::OneHot && K != classes) fail("one-hot labels need K == classes");
    if (encoding == LabelEncoding::Binary && (K != 1 || classes != 2)) {
      fail("binary labels need K == 1 and 2 classes");
    }
    if (mean_map == MeanMap::Constant) {
      if (q_const.size() != classes) fail("model.q must have one entry per class");
      if (std::abs(q_const.sum() - 1.0) > 1e-9) fail("model.q must sum to 1");
      if (q_const.minCoeff() < alpha - 1e-12) fail("model.q violates the label floor alpha");
    }
  }
}

DataModel DataModel::from_config(const Config& cfg, const LossSpec& loss) {
  DataModel m;
  m.d = static_cast<int>(cfg.get_int("model.d"));
  m.r = static_cast<int>(cfg.get_int("model.r", 1));
  if (m.d < 1 || m.r < 1) throw Error(ErrorCode::ConfigError, "model.d and model.r must be >= 1");
  if (cfg.has("model.weights")) {
    const auto w = cfg.get_list("model.weights");
    m.weights = Eigen::Map<const Vec>(w.data(), static_cast<Eigen::Index>(w.size()));
  } else {
    m.weights = Vec::Constant(m.r, 1.0 / m.r);
  }
  m.means = Mat::Zero(m.r, m.d);
  const std::string means = cfg.get_string("model.means", "zero");
  if (means.rfind("spread:", 0) == 0) {
    const double R = std::stod(means.substr(7));
    for (int k = 0; k < m.r; ++k) {
      // Component k sits at distance R along axis k mod d (negated on wrap).
      if (m.r > 1) m.means(k, k % m.d) = ((k / m.d) % 2 == 0 ? 1.0 : -1.0) * R;
    }
  } else if (means != "zero") {
    const auto flat = cfg.get_list("model.means");
    if (flat.size() != static_cast<std::size_t>(m.r * m.d)) {
      throw Error(ErrorCode::ConfigError, "model.means must list r*d numbers");
    }
    for (int k = 0; k < m.r; ++k)
      for (int j = 0; j < m.d; ++j) m.means(k, j) = flat[static_cast<std::size_t>(k * m.d + j)];
  }

  const std::string law = cfg.get_string("model.label_law");
  m.K = loss.K();
  m.seed = cfg.get_u64("model.seed");
  m.beta = cfg.get_double("model.beta", 1.0);
  if (law == "regression") {
    if (loss.kind() != LossKind::Square && loss.kind() != LossKind::Mahalanobis) {
      throw Error(ErrorCode::ConfigError, "regression labels need a square or mahalanobis loss");
    }
    m.law = LabelLaw::Regression;
    m.M = loss.params().M;
    m.noise_scale = cfg.get_double("model.noise_scale", 0.0);
    m.mean_map = mean_map_from_string(cfg.get_string("model.mean_map", "tanh"));
    m.amplitude = cfg.get_double("model.amplitude", std::max(0.0, m.M - m.noise_scale));
  } else if (law == "classification") {
    m.law = LabelLaw::Classification;
    if (loss.kind() == LossKind::NegEntropy) {
      m.encoding = LabelEncoding::OneHot;
      m.classes = loss.K();
    } else if (loss.kind() == LossKind::BinaryEntropy) {
      m.encoding = LabelEncoding::Binary;
      m.classes = 2;
    } else {
      throw Error(ErrorCode::ConfigError, "classification labels need an entropy loss");
    }
    m.alpha = cfg.get_double("model.alpha", loss.params().alpha);
    m.mean_map = mean_map_from_string(cfg.get_string("model.mean_map", "softmax"));
    if (m.mean_map == MeanMap::Constant) {
      const auto q = cfg.get_list("model.q");
      m.q_const = Eigen::Map<const Vec>(q.data(), static_cast<Eigen::Index>(q.size()));
    }
  } else {
    throw Error(ErrorCode::ConfigError, "model.label_law must be regression or classification");
  }
  m.validate();
  return m;
}

Vec sample_component(const DataModel& model, int k, CounterRng& rng) {
  const double sd = 1.0 / std::sqrt(static_cast<double>(model.d));
  Vec x = model.means.row(k).transpose();
  for (int j = 0; j < model.d; ++j) x[j] += sd * rng.normal();
  return x;
}

Vec class_probabilities(const DataModel& model, const Vec& x) {
  if (model.mean_map == MeanMap::Constant) return model.q_const;
  const double scale = model.beta * std::sqrt(static_cast<double>(model.d));
  Vec z(model.classes);
  for (int l = 0; l < model.classes; ++l) z[l] = scale * x[l % model.d];
  return Vec::Constant(model.classes, model.alpha) +
         (1.0 - model.classes * model.alpha) * softmax(z);
}

Vec conditional_mean(const DataModel& model, const Vec& x) {
  if (model.law == LabelLaw::Classification) {
    Vec q = class_probabilities(model, x);
    if (model.encoding == LabelEncoding::Binary) return q.head(1);
    return q;
  }
  Vec g(model.K);
  const double a = model.amplitude;
  for (int l = 0; l < model.K; ++l) {
    const double xl = x[l % model.d];
    switch (model.mean_map) {
      case MeanMap::Tanh:
        g[l] = a * std::tanh(model.beta * std::sqrt(static_cast<double>(model.d)) * xl);
        break;
      case MeanMap::Clip: g[l] = std::clamp(model.beta * xl, -a, a); break;
      default: g[l] = 0.0; break;
    }
  }
  return g;
}

Vec noise_half_widths(const DataModel& model, const Vec& x) {
  const Vec g = conditional_mean(model, x);
  Vec t(model.K);
  for (int l = 0; l < model.K; ++l) t[l] = std::min(model.noise_scale, model.M - std::abs(g[l]));
  return t;
}

Sample sample_one(const DataModel& model, CounterRng& rng) {
  Sample s;
  s.g = model.r == 1 ? 0 : rng.categorical(model.weights);
  s.x = sample_component(model, s.g, rng);
  if (model.law == LabelLaw::Regression) {
    s.y = conditional_mean(model, s.x);
    if (model.noise_scale > 0.0) {
      // Noise is truncated to the largest symmetric window that keeps the
      // label inside the box, which preserves E[Y | X] = g(X).
      const Vec t = noise_half_widths(model, s.x);
      for (int l = 0; l < model.K; ++l) s.y[l] += rng.uniform(-t[l], t[l]);
    }
  } else {
    const Vec q = class_probabilities(model, s.x);
    const int label = rng.categorical(q);
    if (model.encoding == LabelEncoding::Binary) {
      s.y = Vec::Constant(1, label == 0 ? 1.0 : 0.0);
    } else {
      s.y = Vec::Zero(model.classes);
      s.y[label] = 1.0;
    }
  }
  return s;
}

std::vector<Sample> sample_batch(const DataModel& model, std::size_t n, StreamId stream) {
  if (n < 1) throw Error(ErrorCode::ConfigError, "sample_batch needs n >= 1");
  CounterRng rng(model.seed, stream);
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample_one(model, rng));
  return out;
}

NoiseFloor noise_floor(const DataModel& model, const LossSpec& loss, std::size_t n_mc,
                       StreamId stream) {
  if (n_mc < 1000) throw Error(ErrorCode::ConfigError, "noise_floor needs n_mc >= 1000");
  CounterRng rng(model.seed, stream);
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t i = 0; i < n_mc; ++i) {
    const int g = model.r == 1 ? 0 : rng.categorical(model.weights);
    const Vec x = sample_component(model, g, rng);
    double v = 0.0;
    if (model.law == LabelLaw::Regression) {
      // Uniform noise on [-t, t] has variance t^2 / 3 per coordinate and the
      // coordinates are independent, so E[(Y-g)^T A (Y-g) | x] = sum A_ll t_l^2 / 3.
      const Vec t = noise_half_widths(model, x);
      for (int l = 0; l < model.K; ++l) {
        const double weight = loss.kind() == LossKind::Mahalanobis ? loss.matrix()(l, l) : 1.0;
        v += weight * t[l] * t[l] / 3.0;
      }
    } else {
      // E[D(Y, q) | x] with one-hot Y is the entropy of q(x); the binary
      // encoding is the same two-class entropy.
      v = entropy(class_probabilities(model, x));
    }
    const double delta = v - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (v - mean);
  }
  NoiseFloor nf;
  nf.sigma2 = mean;
  nf.n_mc = n_mc;
  const double var = n_mc > 1 ? m2 / static_cast<double>(n_mc - 1) : 0.0;
  nf.mc_stderr = std::sqrt(std::max(0.0, var) / static_cast<double>(n_mc));
  nf.provenance = model.law == LabelLaw::Regression
                      ? "closed-form conditional variance, Monte-Carlo over X"
                      : "closed-form conditional entropy, Monte-Carlo over X";
  return nf;
}

IsoperimetryWitness isoperimetry_witness(const DataModel& model,
                                         const std::function<double(const Vec&)>& f,
                                         double lipschitz, std::size_t n_mc, StreamId stream) {
  if (model.r != 1) {
    throw Error(ErrorCode::MixtureNotSupported,
                "isoperimetry is a per-component property; use a single-component model");
  }
  CounterRng rng(model.seed, stream);
  std::vector<double> values;
  values.reserve(n_mc);
  for (std::size_t i = 0; i < n_mc; ++i) values.push_back(f(sample_component(model, 0, rng)));
  IsoperimetryWitness w;
  w.subgaussian_hat = subgaussian_estimate(values).sigma_hat;
  w.bound = lipschitz * std::sqrt(1.0 / static_cast<double>(model.d));
  return w;
}

void write_samples_csv(std::ostream& out, const std::vector<Sample>& samples) {
  if (samples.empty()) return;
  const auto d = samples.front().x.size();
  const auto K = samples.front().y.size();
  out << "g";
  for (Eigen::Index j = 0; j < d; ++j) out << ",x_" << j;
  for (Eigen::Index l = 0; l < K; ++l) out << ",y_" << l;
  out << '\n';
  char buf[40];
  for (const auto& s : samples) {
    out << s.g;
    for (Eigen::Index j = 0; j < d; ++j) {
      std::snprintf(buf, sizeof buf, ",%.17g", s.x[j]);
      out << buf;
    }
    for (Eigen::Index l = 0; l < K; ++l) {
      std::snprintf(buf, sizeof buf, ",%.17g", s.y[l]);
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace robustlaw
