#include "robustlaw/experiment.hpp"

#include "robustlaw/decomposition.hpp"
#include "robustlaw/sampler.hpp"
#include "robustlaw/svg.hpp"

#include <nlohmann/json.hpp>

#include <glob.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

namespace robustlaw {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// Stream indices under the run seed.
enum : std::uint64_t {
  kStreamData = 1,
  kStreamSigma = 2,
  kStreamInit = 3,
  kStreamLipschitz = 4,
  kStreamGrad = 5,
  kStreamIdentity = 6,
  kStreamTail = 7,
};

template <class Fn>
void parallel_for(std::size_t count, int jobs, Fn&& fn) {
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          next = count;
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json vec_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

// ---- random points for the identity suite ----

Vec random_omega_point(const LossSpec& loss, CounterRng& rng) {
  const Region& om = loss.domain().omega;
  const int K = loss.K();
  switch (loss.kind()) {
    case LossKind::Square:
    case LossKind::Mahalanobis: {
      Vec y(K);
      for (int i = 0; i < K; ++i) y[i] = rng.uniform(om.lo, om.hi);
      return y;
    }
    case LossKind::NegEntropy: {
      // One time in four a vertex (a one-hot label), otherwise a random point.
      if (rng.uniform() < 0.25) {
        Vec y = Vec::Zero(K);
        y[static_cast<int>(rng.uniform() * K) % K] = 1.0;
        return y;
      }
      Vec e(K);
      for (int i = 0; i < K; ++i) e[i] = -std::log(1.0 - rng.uniform());
      return e / e.sum();
    }
    case LossKind::BinaryEntropy: {
      Vec y(1);
      const double u = rng.uniform();
      y[0] = u < 0.125 ? 0.0 : (u < 0.25 ? 1.0 : rng.uniform());
      return y;
    }
  }
  return Vec();
}

// Point of the range region R, shrunk by `shrink` towards its center.
Vec random_range_point(const LossSpec& loss, CounterRng& rng, double shrink = 1.0) {
  const Region& rr = loss.domain().r_region;
  const int K = loss.K();
  switch (loss.kind()) {
    case LossKind::Square:
    case LossKind::Mahalanobis: {
      Vec y(K);
      for (int i = 0; i < K; ++i) y[i] = shrink * rng.uniform(rr.lo, rr.hi);
      return y;
    }
    case LossKind::NegEntropy: {
      Vec e(K);
      for (int i = 0; i < K; ++i) e[i] = -std::log(1.0 - rng.uniform());
      e /= e.sum();
      return Vec::Constant(K, rr.floor) + (1.0 - K * rr.floor) * e;
    }
    case LossKind::BinaryEntropy: {
      Vec y(1);
      y[0] = rng.uniform(rr.lo, rr.hi);
      return y;
    }
  }
  return Vec();
}

DataModel random_model(const LossSpec& loss, CounterRng& rng) {
  DataModel m;
  m.d = 2 + static_cast<int>(rng.uniform() * 5);
  m.r = 1 + static_cast<int>(rng.uniform() * 3);
  m.weights = Vec::Constant(m.r, 1.0 / m.r);
  m.means = Mat::Zero(m.r, m.d);
  for (int k = 0; k < m.r; ++k)
    for (int j = 0; j < m.d; ++j) m.means(k, j) = rng.uniform(-1.5, 1.5);
  m.K = loss.K();
  m.beta = rng.uniform(0.2, 2.0);
  if (loss.kind() == LossKind::Square || loss.kind() == LossKind::Mahalanobis) {
    m.law = LabelLaw::Regression;
    m.M = loss.params().M;
    m.mean_map = rng.uniform() < 0.5 ? MeanMap::Tanh : MeanMap::Clip;
    m.noise_scale = rng.uniform(0.0, 0.5 * m.M);
    m.amplitude = rng.uniform(0.0, m.M);
  } else {
    m.law = LabelLaw::Classification;
    m.mean_map = MeanMap::SoftmaxFloor;
    m.alpha = loss.params().alpha;
    if (loss.kind() == LossKind::BinaryEntropy) {
      m.classes = 2;
      m.encoding = LabelEncoding::Binary;
    } else {
      m.classes = loss.K();
      m.encoding = LabelEncoding::OneHot;
    }
  }
  m.seed = rng();
  m.validate();
  return m;
}

FunctionClass small_class(const LossSpec& loss, int d) {
  FunctionClass cls;
  const bool entropy = loss.kind() == LossKind::NegEntropy || loss.kind() == LossKind::BinaryEntropy;
  cls.arch = {d, 8, loss.kind() == LossKind::BinaryEntropy ? 2 : loss.K()};
  cls.layer_bound = {2.0, 2.0};
  cls.head = entropy ? Head::Softmax : Head::IdentityClip;
  cls.M = loss.params().M;
  cls.binary_output = loss.kind() == LossKind::BinaryEntropy;
  return cls;
}

std::string case_json(const std::string& loss, const std::string& check, std::size_t index,
                      double residual, std::initializer_list<std::pair<const char*, Vec>> vecs) {
  json j;
  j["loss"] = loss;
  j["check"] = check;
  j["index"] = index;
  j["residual"] = residual;
  for (const auto& [name, v] : vecs) j[name] = vec_json(v);
  return j.dump();
}

struct BlockOutcome {
  double max_residual = 0.0;
  double min_phi1 = 0.0;
  std::size_t cases = 0;
  std::string failure;
  std::string phi1_failure;
};

constexpr double kIdentityTol = 1e-9;
constexpr double kGradientTol = 1e-6;
constexpr std::size_t kBlock = 250;

void merge(IdentityCheck& chk, const std::vector<BlockOutcome>& blocks, bool phi1) {
  for (const auto& b : blocks) {
    chk.cases += b.cases;
    if (phi1) {
      chk.max_residual = std::max(chk.max_residual, -b.min_phi1);
      if (chk.first_failure.empty()) chk.first_failure = b.phi1_failure;
    } else {
      chk.max_residual = std::max(chk.max_residual, b.max_residual);
      if (chk.first_failure.empty()) chk.first_failure = b.failure;
    }
  }
  chk.pass = chk.first_failure.empty();
}

std::vector<std::string> expand_inputs(const std::vector<std::string>& inputs, std::ostream& err) {
  std::vector<std::string> files;
  for (const auto& in : inputs) {
    std::error_code ec;
    if (fs::is_directory(in, ec)) {
      for (const auto& e : fs::recursive_directory_iterator(in)) {
        if (e.is_regular_file() && e.path().filename() == "report.json") {
          files.push_back(e.path().string());
        }
      }
    } else if (in.find_first_of("*?[") != std::string::npos) {
      glob_t g{};
      if (::glob(in.c_str(), 0, nullptr, &g) == 0) {
        for (std::size_t i = 0; i < g.gl_pathc; ++i) files.emplace_back(g.gl_pathv[i]);
      } else {
        err << "warning: pattern matched nothing: " << in << "\n";
      }
      ::globfree(&g);
    } else {
      files.push_back(in);
    }
  }
  std::sort(files.begin(), files.end());
  files.erase(std::unique(files.begin(), files.end()), files.end());
  return files;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::ConfigError, "cannot write " + path.string());
  out << text;
}

template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::ConfigInfeasible:
    case ErrorCode::MixtureNotSupported:
    case ErrorCode::ParamOutOfDomain:
    case ErrorCode::NetBudgetExceeded:
      return 2;
    case ErrorCode::DomainViolation:
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::NumericError:
      return 3;
  }
  return 3;
}

// ---- identity suite ----

bool IdentitySuiteResult::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const IdentityCheck& c) { return c.pass; });
}

LossSpec builtin_loss(const std::string& name) {
  if (name == "square") return LossSpec::square(3, 2.0);
  if (name == "mahalanobis") {
    Mat A(3, 3);
    A << 2.0, 0.5, 0.0, 0.5, 1.0, 0.2, 0.0, 0.2, 1.5;
    return LossSpec::mahalanobis(A, 1.0);
  }
  if (name == "neg_entropy") return LossSpec::neg_entropy(3, 1.0, 0.1);
  if (name == "binary_entropy") return LossSpec::binary_entropy(1.0, 0.1);
  throw Error(ErrorCode::ConfigError, "unknown built-in loss " + name);
}

IdentitySuiteResult run_identity_suite(const IdentitySuiteOptions& opts) {
  if (opts.decomposition_draws == 0 || opts.triangle_cases == 0 || opts.gradient_cases == 0) {
    throw Error(ErrorCode::ConfigError, "identity suite: sample counts must be >= 1");
  }
  IdentitySuiteResult result;
  const std::vector<std::string> names = {"square", "mahalanobis", "neg_entropy", "binary_entropy"};
  for (std::size_t li = 0; li < names.size(); ++li) {
    const std::string& name = names[li];
    const LossSpec loss = builtin_loss(name);
    const StreamId base = derive_stream(kStreamIdentity, li);

    // Decomposition: a fresh model, predictor, sigma^2 and E[grad phi(f)] per block.
    const std::size_t nblocks = (opts.decomposition_draws + kBlock - 1) / kBlock;
    std::vector<BlockOutcome> dec(nblocks);
    parallel_for(nblocks, opts.jobs, [&](std::size_t b) {
      const StreamId bs = derive_stream(derive_stream(base, 0), b);
      CounterRng rng(opts.seed, bs);
      const DataModel model = random_model(loss, rng);
      const FunctionClass cls = small_class(loss, model.d);
      const ParamBox box = cls.box();
      Vec w(box.size());
      for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = 0.5 * rng.uniform(box.lo[i], box.hi[i]);
      const Predictor f = Network(cls, w).as_predictor();
      const double sigma2 = noise_floor(model, loss, 1000, derive_stream(bs, 1)).sigma2;
      const GradEstimate ge = mean_grad_f(loss, model, f, 1000, derive_stream(bs, 2), false);
      BlockOutcome& out = dec[b];
      const std::size_t count = std::min(kBlock, opts.decomposition_draws - b * kBlock);
      for (std::size_t i = 0; i < count; ++i) {
        const Sample s = sample_one(model, rng);
        const DecompositionRecord r = decompose(loss, model, f, s, sigma2, ge.overall, ge.provenance);
        double rel = r.residual_rel;
        if (opts.sabotage) {
          const double flipped = r.residual + 2.0 * r.gamma1;
          const double scale = std::abs(r.phi1) + std::abs(r.phi2) + std::abs(r.gamma1) +
                               std::abs(r.gamma2) + std::abs(r.gamma3) + std::abs(r.z) +
                               std::abs(r.sigma2);
          rel = std::abs(flipped) / std::max(scale, 1e-3);
        }
        ++out.cases;
        out.max_residual = std::max(out.max_residual, rel);
        out.min_phi1 = std::min(out.min_phi1, r.phi1);
        const std::size_t idx = b * kBlock + i;
        if (rel > kIdentityTol && out.failure.empty()) {
          out.failure = case_json(name, "decomposition", idx, rel,
                                  {{"x", s.x}, {"y", s.y}, {"f_x", f(s.x)}, {"e_grad_f", ge.overall}});
        }
        if (r.phi1 < -1e-12 && out.phi1_failure.empty()) {
          out.phi1_failure = case_json(name, "phi1_nonneg", idx, r.phi1, {{"x", s.x}, {"f_x", f(s.x)}});
        }
      }
    });
    IdentityCheck dchk{name, "decomposition", 0, 0.0, kIdentityTol, true, {}};
    merge(dchk, dec, false);
    IdentityCheck pchk{name, "phi1_nonneg", 0, 0.0, 1e-12, true, {}};
    merge(pchk, dec, true);
    result.checks.push_back(dchk);
    result.checks.push_back(pchk);

    // Three-point identity.
    const std::size_t tblocks = (opts.triangle_cases + kBlock - 1) / kBlock;
    std::vector<BlockOutcome> tri(tblocks);
    parallel_for(tblocks, opts.jobs, [&](std::size_t b) {
      CounterRng rng(opts.seed, derive_stream(derive_stream(base, 1), b));
      BlockOutcome& out = tri[b];
      const std::size_t count = std::min(kBlock, opts.triangle_cases - b * kBlock);
      for (std::size_t i = 0; i < count; ++i) {
        const Vec x = random_omega_point(loss, rng);
        const Vec y = random_range_point(loss, rng);
        const Vec z = random_range_point(loss, rng);
        const double dxy = divergence(loss, x, y), dxz = divergence(loss, x, z);
        const double dzy = divergence(loss, z, y);
        const double inner = (x - z).dot(phi_gradient(loss, y) - phi_gradient(loss, z));
        double res = triangle_residual(loss, x, y, z);
        if (opts.sabotage) res += 2.0 * inner;
        const double scale = std::abs(dxy) + std::abs(dxz) + std::abs(dzy) + std::abs(inner);
        const double rel = std::abs(res) / std::max(scale, 1e-3);
        ++out.cases;
        out.max_residual = std::max(out.max_residual, rel);
        if (rel > kIdentityTol && out.failure.empty()) {
          out.failure = case_json(name, "triangle", b * kBlock + i, rel, {{"x", x}, {"y", y}, {"z", z}});
        }
      }
    });
    IdentityCheck tchk{name, "triangle", 0, 0.0, kIdentityTol, true, {}};
    merge(tchk, tri, false);
    result.checks.push_back(tchk);

    // Gradient against central differences along random feasible directions.
    const std::size_t gblocks = (opts.gradient_cases + kBlock - 1) / kBlock;
    std::vector<BlockOutcome> grd(gblocks);
    parallel_for(gblocks, opts.jobs, [&](std::size_t b) {
      CounterRng rng(opts.seed, derive_stream(derive_stream(base, 2), b));
      BlockOutcome& out = grd[b];
      const std::size_t count = std::min(kBlock, opts.gradient_cases - b * kBlock);
      constexpr double h = 1e-5;
      for (std::size_t i = 0; i < count; ++i) {
        const Vec y = random_range_point(loss, rng, 0.9);
        Vec v = rng.normal_vector(loss.K(), 1.0);
        if (loss.kind() == LossKind::NegEntropy) v.array() -= v.mean();
        v.normalize();
        const Vec g = phi_gradient(loss, y);
        const double exact = g.dot(v);
        const double fd = (phi_value(loss, y + h * v) - phi_value(loss, y - h * v)) / (2.0 * h);
        const double rel = std::abs(fd - exact) / std::max({std::abs(exact), 1e-3 * g.norm(), 1e-12});
        ++out.cases;
        out.max_residual = std::max(out.max_residual, rel);
        if (rel > kGradientTol && out.failure.empty()) {
          out.failure = case_json(name, "gradient_fd", b * kBlock + i, rel, {{"y", y}, {"v", v}});
        }
      }
    });
    IdentityCheck gchk{name, "gradient_fd", 0, 0.0, kGradientTol, true, {}};
    merge(gchk, grd, false);
    result.checks.push_back(gchk);
  }
  return result;
}

// ---- concentration ----

ConcentrationOptions concentration_options(const Config& cfg) {
  ConcentrationOptions o;
  if (cfg.has("conc.statements")) {
    for (const auto& s : cfg.get_string_list("conc.statements")) {
      o.statements.push_back(statement_from_string(s));
    }
  } else {
    o.statements = {Statement::Obs33, Statement::Obs34, Statement::Obs35, Statement::Lem36};
  }
  if (cfg.has("conc.eps_fracs")) o.eps_fracs = cfg.get_list("conc.eps_fracs");
  o.n = static_cast<std::size_t>(cfg.get_int("conc.n", 200));
  o.trials = static_cast<std::size_t>(cfg.get_int("conc.trials", 10000));
  o.grad_mc = static_cast<std::size_t>(cfg.get_int("conc.grad_mc", 20000));
  o.sigma_mc = static_cast<std::size_t>(cfg.get_int("conc.sigma_mc", 100000));
  return o;
}

ConcentrationOutcome run_concentration(const Config& cfg_in, const ConcentrationOptions& opts) {
  Config cfg = cfg_in;
  const std::uint64_t seed = cfg.get_u64("run.seed");
  if (!cfg.has("model.seed")) cfg.set("model.seed", std::to_string(seed));
  const LossSpec loss = LossSpec::from_config(cfg);
  const DataModel model = DataModel::from_config(cfg, loss);

  FunctionClass cls;
  if (cfg.has("class.arch")) {
    cls = FunctionClass::from_config(cfg, loss);
  } else {
    cls = small_class(loss, model.d);
    cls.arch[1] = 16;
    cls.layer_bound = {1.0, 1.0};
  }
  const Network net(cls, init_params(cls, seed, kStreamInit));

  TailContext ctx(loss, model);
  ctx.f = net.as_predictor();
  ctx.L = lipschitz_upper_bound(net).value;
  ctx.C = cfg.get_double("bound.C", 2.0);
  ctx.c = cfg.get_double("bound.c", 1.0);
  ctx.sigma2 = noise_floor(model, loss, opts.sigma_mc, kStreamSigma).sigma2;
  ctx.grads = mean_grad_f(loss, model, ctx.f, opts.grad_mc, kStreamGrad, true);

  ConcentrationOutcome out;
  out.f_lipschitz = ctx.L;
  for (std::size_t si = 0; si < opts.statements.size(); ++si) {
    const Statement s = opts.statements[si];
    std::vector<double> eps;
    const double scale = relevant_scale(s, ctx);
    for (double f : opts.eps_fracs) eps.push_back(f * scale);
    try {
      auto reps = run_tail_check(s, ctx, eps, opts.n, opts.trials, seed,
                                 derive_stream(kStreamTail, static_cast<std::uint64_t>(s)), opts.jobs);
      out.reports.insert(out.reports.end(), reps.begin(), reps.end());
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ConfigInfeasible) throw;
      out.infeasible.emplace_back(s, e.what());
    }
  }
  return out;
}

// ---- bounds ----

// Absolute eps, or eps_rel times the noise floor.
static double resolve_eps(const Config& cfg, double sigma2) {
  if (cfg.has("run.eps")) return cfg.get_double("run.eps");
  const double eps = cfg.get_double("run.eps_rel", 0.25) * sigma2;
  return eps > 0.0 ? eps : cfg.get_double("run.eps_min", 1e-3);
}

BoundInputs bound_inputs_from_config(const Config& cfg) {
  const LossSpec loss = LossSpec::from_config(cfg);
  BoundInputs in;
  in.constants = loss_constants(loss);
  in.K = loss.K();
  in.d = static_cast<double>(cfg.get_int("model.d"));
  in.r = static_cast<int>(cfg.get_int("model.r", 1));
  if (cfg.has("class.arch")) {
    const FunctionClass cls = FunctionClass::from_config(cfg, loss);
    in.p = static_cast<double>(cls.num_params());
    in.J = cls.j_cert();
    in.W = cls.diameter();
  }
  in.p = cfg.get_double("bound.p", in.p);
  in.J = cfg.get_double("bound.J", in.J);
  in.W = cfg.get_double("bound.W", in.W);
  in.n = static_cast<double>(cfg.get_int("run.n"));
  if (cfg.has("run.eps")) {
    in.eps = cfg.get_double("run.eps");
  } else {
    // Same noise-floor estimate as run-experiment, so both report the same eps.
    Config c = cfg;
    if (!c.has("model.seed")) c.set("model.seed", std::to_string(c.get_u64("run.seed")));
    const auto sigma_mc = static_cast<std::size_t>(c.get_int("run.sigma_mc", 100000));
    in.eps = resolve_eps(c, noise_floor(DataModel::from_config(c, loss), loss, sigma_mc, kStreamSigma).sigma2);
  }
  in.delta = cfg.get_double("run.delta", 0.1);
  in.C = cfg.get_double("bound.C", 2.0);
  in.c = cfg.get_double("bound.c", 1.0);
  if (cfg.has("bound.L")) in.L = cfg.get_double("bound.L");
  in.pre_softmax = cfg.get_bool("bound.pre_softmax", false);
  in.validate();
  return in;
}

// ---- experiment ----

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Consistent: return "consistent";
    case Verdict::Violation: return "violation";
    case Verdict::NotApplicable: return "not-applicable";
  }
  return "?";
}

Verdict decide_verdict(bool achieved, bool n_ok, double L_ub, double L_floor) {
  if (!achieved) return Verdict::NotApplicable;
  if (n_ok && L_ub < L_floor) return Verdict::Violation;
  return Verdict::Consistent;
}

ExperimentResult run_experiment(const Config& cfg_in) {
  const auto t0 = std::chrono::steady_clock::now();
  Config cfg = cfg_in;
  const std::uint64_t seed = cfg.get_u64("run.seed");
  if (!cfg.has("model.seed")) cfg.set("model.seed", std::to_string(seed));

  const LossSpec loss = LossSpec::from_config(cfg);
  const DataModel model = DataModel::from_config(cfg, loss);
  const FunctionClass cls = FunctionClass::from_config(cfg, loss);
  if (cls.input_dim() != model.d) {
    throw Error(ErrorCode::ConfigError, "class.arch input width must equal model.d");
  }
  const auto n = static_cast<std::size_t>(cfg.get_int("run.n"));
  const auto sigma_mc = static_cast<std::size_t>(cfg.get_int("run.sigma_mc", 100000));
  const auto grad_mc = static_cast<std::size_t>(cfg.get_int("run.grad_mc", 2000));
  const auto probes = static_cast<std::size_t>(cfg.get_int("run.lipschitz_probes", 200));

  ExperimentResult res;
  res.config_canonical = cfg.canonical();
  res.config_hash = hex64(cfg.hash());

  const std::vector<Sample> data = sample_batch(model, n, kStreamData);
  const NoiseFloor nf = noise_floor(model, loss, sigma_mc, kStreamSigma);
  res.sigma2 = nf.sigma2;
  res.sigma2_stderr = nf.mc_stderr;
  res.sigma2_provenance = nf.provenance + ", n_mc=" + std::to_string(nf.n_mc);

  res.eps = resolve_eps(cfg, res.sigma2);

  TrainOptions topt;
  topt.lr = cfg.get_double("train.lr", topt.lr);
  topt.max_steps = static_cast<std::size_t>(cfg.get_int("train.max_steps", static_cast<std::int64_t>(topt.max_steps)));
  topt.project = cfg.get_bool("train.project", true);
  topt.record_every = static_cast<std::size_t>(cfg.get_int("train.record_every", 10));
  topt.stop_margin = cfg.get_double("train.stop_margin", 2.0);
  const Vec w0 = init_params(cls, seed, kStreamInit);
  res.training = train_overfit(cls, loss, data, res.sigma2, res.eps, w0, topt);
  if (res.training.error) {
    throw Error(*res.training.error, "training produced a non-finite loss");
  }

  const Network net = realize(cls, res.training.w, ParamPolicy::Project);
  const Predictor f = net.as_predictor();
  res.params = net.params();
  res.manifest = params_manifest(cls, seed);
  res.gap = empirical_overfit_gap(loss, f, data, res.sigma2);
  res.training.achieved = res.gap > res.eps;

  const LipschitzUpper ub = lipschitz_upper_bound(net);
  res.L_ub = ub.value;
  res.L_ub_converged = ub.converged;
  res.L_lb = lipschitz_lower_bound(net, probes, seed, kStreamLipschitz);

  BoundInputs in;
  in.constants = loss_constants(loss);
  in.K = loss.K();
  in.d = model.d;
  in.r = model.r;
  in.n = static_cast<double>(n);
  in.p = static_cast<double>(cls.num_params());
  in.J = cls.j_cert();
  in.W = cls.diameter();
  in.eps = res.eps;
  in.delta = cfg.get_double("run.delta", 0.1);
  in.C = cfg.get_double("bound.C", 2.0);
  in.c = cfg.get_double("bound.c", 1.0);
  in.L = res.L_ub;
  res.bound_inputs = in;
  res.bound = evaluate_bounds(in);

  if (loss.kind() == LossKind::Square) {
    CorollaryInputs ci;
    ci.K = in.K;
    ci.M = loss.params().M;
    ci.J = in.J;
    ci.W = in.W;
    ci.n = in.n;
    ci.d = in.d;
    ci.p = in.p;
    ci.eps = in.eps;
    ci.delta = in.delta;
    ci.c = in.c;
    ci.C = in.C;
    ci.r = in.r;
    res.corollary = regression_bound(ci);
    res.corollary_name = "regression";
  } else if (loss.kind() == LossKind::NegEntropy) {
    CorollaryInputs ci;
    ci.K = in.K;
    ci.M = loss.params().M;
    ci.alpha = loss.params().alpha;
    ci.J = in.J;
    ci.W = in.W;
    ci.n = in.n;
    ci.d = in.d;
    ci.p = in.p;
    ci.eps = in.eps;
    ci.delta = in.delta;
    ci.c = in.c;
    ci.C = in.C;
    ci.r = in.r;
    res.corollary = classification_bound(ci, false);
    res.corollary_name = "classification_generic";
  }

  res.verdict = decide_verdict(res.training.achieved, res.bound.n_ok, res.L_ub, res.bound.L_floor);

  const GradEstimate ge = mean_grad_f(loss, model, f, grad_mc, kStreamGrad, false);
  for (const Sample& s : data) {
    res.decomposition.push_back(decompose(loss, model, f, s, res.sigma2, ge.overall, ge.provenance));
    res.max_decomposition_residual =
        std::max(res.max_decomposition_residual, res.decomposition.back().residual_rel);
  }
  res.seconds_total =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

std::string ExperimentResult::json(bool with_timing) const {
  robustlaw::json j;
  j["schema"] = "robustlaw.report/1";
  j["config"] = config_canonical;
  j["config_hash"] = config_hash;
  j["sigma2"] = {{"value", sigma2}, {"mc_stderr", sigma2_stderr}, {"provenance", sigma2_provenance}};
  j["eps"] = eps;
  robustlaw::json tr;
  tr["achieved"] = training.achieved;
  tr["gap"] = gap;
  tr["steps"] = training.steps;
  tr["infeasible_target"] = training.infeasible;
  j["training"] = tr;
  j["lipschitz"] = {{"lower", L_lb}, {"upper", L_ub}, {"upper_converged", L_ub_converged}};
  robustlaw::json b;
  b["n"] = bound_inputs.n;
  b["d"] = bound_inputs.d;
  b["p"] = bound_inputs.p;
  b["K"] = bound_inputs.K;
  b["r"] = bound_inputs.r;
  b["J"] = bound_inputs.J;
  b["W"] = bound_inputs.W;
  b["delta"] = bound_inputs.delta;
  b["C"] = bound_inputs.C;
  b["c"] = bound_inputs.c;
  b["L_floor"] = bound.L_floor;
  b["n_required"] = bound.n_required;
  b["n_ok"] = bound.n_ok;
  b["delta_total_at_L_ub"] = bound.delta_total_uncapped;
  if (corollary) {
    b["corollary"] = {{"name", corollary_name},
                      {"value", corollary->value},
                      {"n_condition", corollary->n_condition},
                      {"C1", corollary->C1},
                      {"n_ok", corollary->n_ok}};
  }
  b["trace"] = bound.trace.render();
  j["bounds"] = b;
  j["max_decomposition_residual"] = max_decomposition_residual;
  j["verdict"] = to_string(verdict);
  if (with_timing) j["timing"] = {{"seconds_total", seconds_total}};
  return j.dump(2) + "\n";
}

void write_experiment_artifacts(const ExperimentResult& r, const std::string& dir,
                                const std::vector<std::string>& formats) {
  auto wants = [&](const char* f) {
    return std::find(formats.begin(), formats.end(), f) != formats.end();
  };
  const bool csv = formats.empty() || wants("csv");
  fs::create_directories(dir);
  const fs::path d(dir);
  write_params_binary(d / "params.bin", r.params);
  write_text(d / "params_manifest.txt", r.manifest);
  write_text(d / "report.json", r.json(true));
  if (csv) {
    std::ostringstream dec;
    write_decomposition_csv(dec, r.decomposition);
    write_text(d / "decomposition.csv", dec.str());
    std::ostringstream hist;
    hist << "step,gap\n";
    for (const auto& [step, gap] : r.training.history) hist << step << "," << num(gap) << "\n";
    write_text(d / "history.csv", hist.str());
  }
  if (wants("svg")) {
    PlotSpec gap;
    gap.title = "overfit gap during training";
    gap.xlabel = "step";
    gap.ylabel = "sigma^2 - train loss";
    gap.hlines = {r.eps};
    Series s{"gap", {}, {}, true};
    for (const auto& [step, g] : r.training.history) {
      s.x.push_back(static_cast<double>(step));
      s.y.push_back(g);
    }
    gap.series.push_back(s);
    write_text(d / "gap_vs_step.svg", render_svg(gap));

    PlotSpec lip;
    lip.title = "Lipschitz estimates vs floor";
    lip.xlabel = "quantity (1 = lower, 2 = upper, 3 = floor)";
    lip.ylabel = "value";
    lip.logy = true;
    lip.series.push_back(Series{"L_lb", {1.0}, {r.L_lb}, false});
    lip.series.push_back(Series{"L_ub", {2.0}, {r.L_ub}, false});
    lip.series.push_back(Series{"L_floor", {3.0}, {r.bound.L_floor}, false});
    write_text(d / "lipschitz_vs_floor.svg", render_svg(lip));
  }
}

// ---- commands ----

Config load_config(const CommandOptions& opts) {
  Config cfg = opts.config_path.empty() ? Config() : Config::load(opts.config_path);
  if (opts.seed) {
    cfg.set("run.seed", std::to_string(*opts.seed));
    cfg.set("model.seed", std::to_string(*opts.seed));
  }
  return cfg;
}

int cmd_verify_identities(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Config cfg = load_config(opts);
    IdentitySuiteOptions so;
    auto count = [&](const char* key, std::size_t fallback) {
      const std::int64_t v = cfg.get_int(key, static_cast<std::int64_t>(fallback));
      if (v < 1) throw Error(ErrorCode::ConfigError, std::string(key) + " must be >= 1");
      return static_cast<std::size_t>(v);
    };
    so.decomposition_draws = count("verify.samples", so.decomposition_draws);
    so.triangle_cases = count("verify.triangle_cases", so.triangle_cases);
    so.gradient_cases = count("verify.gradient_cases", so.gradient_cases);
    so.seed = cfg.has("run.seed") ? cfg.get_u64("run.seed") : so.seed;
    so.jobs = opts.jobs;
    so.sabotage = opts.sabotage;

    const IdentitySuiteResult r = run_identity_suite(so);
    fs::create_directories(opts.out_dir);
    std::ostringstream csv;
    csv << "loss,check,cases,max_residual,tolerance,pass\n";
    for (const auto& c : r.checks) {
      csv << c.loss << "," << c.check << "," << c.cases << "," << num(c.max_residual) << ","
          << num(c.tolerance) << "," << (c.pass ? "true" : "false") << "\n";
    }
    write_text(fs::path(opts.out_dir) / "verify_identities.csv", csv.str());
    out << csv.str();
    for (const auto& c : r.checks) {
      if (!c.pass) {
        write_text(fs::path(opts.out_dir) / "first_failure.json", c.first_failure + "\n");
        err << "first failing case: " << c.first_failure << "\n";
        return 1;
      }
    }
    return 0;
  });
}

int cmd_check_concentration(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Config cfg = load_config(opts);
    ConcentrationOptions co = concentration_options(cfg);
    if (!opts.statements.empty()) {
      co.statements.clear();
      for (const auto& s : opts.statements) co.statements.push_back(statement_from_string(s));
    }
    co.jobs = opts.jobs;
    const ConcentrationOutcome res = run_concentration(cfg, co);
    fs::create_directories(opts.out_dir);
    std::ofstream jl(fs::path(opts.out_dir) / "tail_reports.jsonl", std::ios::binary);
    bool failed = false;
    for (const auto& r : res.reports) {
      const std::string line = tail_report_json(r);
      jl << line << "\n";
      out << line << "\n";
      failed = failed || !r.pass;
    }
    for (const auto& [s, why] : res.infeasible) {
      err << "error [ConfigInfeasible]: " << why << "\n";
    }
    if (!res.infeasible.empty()) return 2;
    return failed ? 1 : 0;
  });
}

int cmd_compute_bound(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Config cfg = load_config(opts);
    const BoundInputs in = bound_inputs_from_config(cfg);
    const BoundReport rep = evaluate_bounds(in);
    const std::string js = bound_report_json(rep, in);
    fs::create_directories(opts.out_dir);
    write_text(fs::path(opts.out_dir) / "bound_report.json", js + "\n");
    out << js << "\n\n" << rep.trace.render();
    return 0;
  });
}

int cmd_run_experiment(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Config cfg = load_config(opts);
    const std::uint64_t seed = cfg.get_u64("run.seed");
    const auto repeats = static_cast<std::size_t>(cfg.get_int("run.repeats", 1));
    if (repeats < 1) throw Error(ErrorCode::ConfigError, "run.repeats must be >= 1");
    std::vector<ExperimentResult> results(repeats);
    parallel_for(repeats, opts.jobs, [&](std::size_t i) {
      Config c = cfg;
      c.set("run.seed", std::to_string(seed + i));
      c.set("model.seed", std::to_string(seed + i));
      results[i] = run_experiment(c);
    });
    bool violation = false;
    for (std::size_t i = 0; i < repeats; ++i) {
      const auto& r = results[i];
      const std::string dir =
          repeats == 1 ? opts.out_dir : (fs::path(opts.out_dir) / ("run_" + std::to_string(i))).string();
      write_experiment_artifacts(r, dir, opts.formats);
      out << "seed=" << seed + i << " sigma2=" << num(r.sigma2) << " eps=" << num(r.eps)
          << " achieved=" << (r.training.achieved ? "true" : "false") << " gap=" << num(r.gap)
          << " L_lb=" << num(r.L_lb) << " L_ub=" << num(r.L_ub)
          << " L_floor=" << num(r.bound.L_floor) << " verdict=" << to_string(r.verdict) << "\n";
      violation = violation || r.verdict == Verdict::Violation;
    }
    return violation ? 1 : 0;
  });
}

int cmd_report(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto files = expand_inputs(opts.inputs, err);
    std::ostringstream csv;
    csv << "file,config_hash,n,d,p,sigma2,eps,achieved,gap,L_lb,L_ub,L_floor,verdict\n";
    std::size_t valid = 0, skipped = 0;
    Series pts{"runs", {}, {}, false};
    for (const auto& file : files) {
      try {
        std::ifstream in(file);
        if (!in) throw std::runtime_error("cannot open");
        const auto j = json::parse(in);
        if (j.at("schema").get<std::string>() != "robustlaw.report/1") {
          throw std::runtime_error("unknown schema");
        }
        const auto& b = j.at("bounds");
        std::ostringstream row;
        row << file << "," << j.at("config_hash").get<std::string>() << ","
            << num(b.at("n").get<double>()) << "," << num(b.at("d").get<double>()) << ","
            << num(b.at("p").get<double>()) << "," << num(j.at("sigma2").at("value").get<double>())
            << "," << num(j.at("eps").get<double>()) << ","
            << (j.at("training").at("achieved").get<bool>() ? "true" : "false") << ","
            << num(j.at("training").at("gap").get<double>()) << ","
            << num(j.at("lipschitz").at("lower").get<double>()) << ","
            << num(j.at("lipschitz").at("upper").get<double>()) << ","
            << num(b.at("L_floor").get<double>()) << "," << j.at("verdict").get<std::string>()
            << "\n";
        csv << row.str();
        pts.x.push_back(b.at("L_floor").get<double>());
        pts.y.push_back(j.at("lipschitz").at("lower").get<double>());
        ++valid;
      } catch (const std::exception& e) {
        err << "warning: skipping " << file << ": " << e.what() << "\n";
        ++skipped;
      }
    }
    if (valid == 0) {
      throw Error(ErrorCode::ConfigError, "no valid report files (" + std::to_string(skipped) + " skipped)");
    }
    fs::create_directories(opts.out_dir);
    write_text(fs::path(opts.out_dir) / "report.csv", csv.str());
    if (std::find(opts.formats.begin(), opts.formats.end(), "svg") != opts.formats.end()) {
      PlotSpec p;
      p.title = "measured lower Lipschitz estimate vs theoretical floor";
      p.xlabel = "L_floor";
      p.ylabel = "L_lb";
      p.logx = p.logy = true;
      p.diagonal = true;
      p.series.push_back(pts);
      write_text(fs::path(opts.out_dir) / "report.svg", render_svg(p));
    }
    out << csv.str();
    out << "# " << valid << " reports aggregated, " << skipped << " skipped\n";
    return 0;
  });
}

}  // namespace robustlaw
