#include "robustlaw/concentration.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

namespace robustlaw {
namespace {

void require_positive(const char* op, double value, const char* what) {
  if (!(value > 0.0)) throw Error(ErrorCode::ConfigError, std::string(op) + ": " + what + " must be > 0");
}

std::vector<double> trial_statistics(Statement s, const TailContext& ctx, std::size_t n,
                                     CounterRng& rng) {
  const DataModel& model = ctx.model;
  const LossSpec& loss = ctx.loss;
  switch (s) {
    case Statement::Hoeffding: {
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) sum += rng.uniform();
      return {sum / static_cast<double>(n) - 0.5};
    }
    case Statement::VectorBD: {
      Vec sum = Vec::Zero(ctx.vector_dim);
      for (std::size_t i = 0; i < n; ++i) {
        Vec v = rng.normal_vector(ctx.vector_dim, 1.0);
        sum += v * (ctx.b / v.norm());
      }
      return {-(sum / static_cast<double>(n)).norm()};
    }
    case Statement::Azuma: {
      double y = 0.0;
      for (std::size_t i = 0; i < n; ++i) y += rng.uniform() < 0.5 ? ctx.azuma_c : -ctx.azuma_c;
      return {y / static_cast<double>(n)};
    }
    default: break;
  }

  std::vector<Sample> batch;
  batch.reserve(n);
  for (std::size_t i = 0; i < n; ++i) batch.push_back(sample_one(model, rng));
  const double inv_n = 1.0 / static_cast<double>(n);
  const int K = loss.K();

  switch (s) {
    case Statement::Obs33: {
      double sum = 0.0;
      for (const auto& smp : batch) {
        sum += divergence(loss, smp.y, conditional_mean(model, smp.x)) - ctx.sigma2;
      }
      return {sum * inv_n};
    }
    case Statement::Obs34: {
      double sum = 0.0;
      for (const auto& smp : batch) {
        const Vec m = conditional_mean(model, smp.x);
        sum += (smp.y - m).dot(phi_gradient(loss, m));
      }
      return {sum * inv_n};
    }
    case Statement::Obs35: {
      // inf over f of -<mean(Y - m), E grad phi(f)> with |E grad phi(f)| <= gamma.
      Vec v = Vec::Zero(K);
      for (const auto& smp : batch) v += smp.y - conditional_mean(model, smp.x);
      return {-ctx.constants.gamma * (v * inv_n).norm()};
    }
    case Statement::Lem36: {
      double sum = 0.0;
      for (const auto& smp : batch) {
        const Vec ym = smp.y - conditional_mean(model, smp.x);
        sum -= ym.dot(phi_gradient(loss, ctx.f(smp.x)) - ctx.grads.overall);
      }
      return {sum * inv_n};
    }
    case Statement::Lem51_vhat: {
      const MixtureTermsRecord rec = mixture_terms(loss, model, ctx.f, batch, ctx.grads);
      const Vec means = rec.t.cwiseProduct(rec.v_hat).colwise().sum().transpose() * inv_n;
      return {means.data(), means.data() + means.size()};
    }
    case Statement::Lem52_vtilde: {
      // inf over f of (1/n) sum_k V_tilde_k sum_{i in S_k} T_i with |V_tilde| <= 2 gamma.
      Mat per(model.r, K);
      per.setZero();
      for (const auto& smp : batch) {
        per.row(smp.g) -= (smp.y - conditional_mean(model, smp.x)).transpose();
      }
      std::vector<double> out(K);
      for (int l = 0; l < K; ++l) {
        out[l] = -2.0 * ctx.constants.gamma * per.col(l).cwiseAbs().sum() * inv_n;
      }
      return out;
    }
    default: break;
  }
  return {};
}

void check_preconditions(Statement s, const TailContext& ctx) {
  auto infeasible = [&](const std::string& why) {
    throw Error(ErrorCode::ConfigInfeasible, std::string(to_string(s)) + ": " + why);
  };
  switch (s) {
    case Statement::Obs33:
    case Statement::Obs34:
    case Statement::Obs35: break;
    case Statement::Lem36:
      if (ctx.model.r != 1) infeasible("needs a single-component model (r = 1)");
      if (!ctx.f || !(ctx.L > 0.0)) infeasible("needs a fixed predictor with certified L > 0");
      if (ctx.grads.overall.size() != ctx.loss.K()) infeasible("needs E[grad phi(f(X))]");
      break;
    case Statement::Lem51_vhat:
      if (!ctx.f || !(ctx.L > 0.0)) infeasible("needs a fixed predictor with certified L > 0");
      if (ctx.grads.per_component.rows() != ctx.model.r) {
        infeasible("needs per-component gradient means");
      }
      break;
    case Statement::Lem52_vtilde:
      if (ctx.model.r < 2) infeasible("needs a mixture with r >= 2");
      break;
    default: break;
  }
}

}  // namespace

const char* to_string(Statement s) {
  switch (s) {
    case Statement::Obs33: return "Obs33";
    case Statement::Obs34: return "Obs34";
    case Statement::Obs35: return "Obs35";
    case Statement::Lem36: return "Lem36";
    case Statement::Lem51_vhat: return "Lem51_vhat";
    case Statement::Lem52_vtilde: return "Lem52_vtilde";
    case Statement::Hoeffding: return "Hoeffding";
    case Statement::VectorBD: return "VectorBD";
    case Statement::Azuma: return "Azuma";
  }
  return "?";
}

Statement statement_from_string(const std::string& name) {
  for (Statement s : {Statement::Obs33, Statement::Obs34, Statement::Obs35, Statement::Lem36,
                      Statement::Lem51_vhat, Statement::Lem52_vtilde, Statement::Hoeffding,
                      Statement::VectorBD, Statement::Azuma}) {
    if (name == to_string(s)) return s;
  }
  if (name == "Lem51") return Statement::Lem51_vhat;
  if (name == "Lem52") return Statement::Lem52_vtilde;
  throw Error(ErrorCode::ConfigError, "unknown statement " + name);
}

double hoeffding_bound(std::size_t n, double t, double range_width) {
  if (n < 1) throw Error(ErrorCode::ConfigError, "hoeffding_bound: n must be >= 1");
  require_positive("hoeffding_bound", range_width, "range width");
  return std::exp(-2.0 * static_cast<double>(n) * t * t / (range_width * range_width));
}

double vector_bd_bound(std::size_t n, double t, double b) {
  if (n < 1) throw Error(ErrorCode::ConfigError, "vector_bd_bound: n must be >= 1");
  require_positive("vector_bd_bound", b, "b");
  return 2.0 * std::exp(-static_cast<double>(n) * t * t / (16.0 * b * b));
}

double azuma_bound(std::size_t n, double t, double c) {
  require_positive("azuma_bound", c, "c");
  return std::exp(-static_cast<double>(n) * t * t / (2.0 * c * c));
}

SubGaussEstimate subgaussian_estimate(const std::vector<double>& samples) {
  SubGaussEstimate est;
  if (samples.empty()) return est;
  const double n = static_cast<double>(samples.size());
  const double mu = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  double var = 0.0;
  for (double x : samples) var += (x - mu) * (x - mu);
  var /= n;
  const double sd = std::sqrt(var);
  if (!(sd > 0.0)) return est;
  for (double base : {0.5, 1.0, 2.0, 4.0, 8.0}) {
    for (double sign : {-1.0, 1.0}) {
      const double lambda = sign * base / sd;
      est.lambda_grid.push_back(lambda);
      // log-mean-exp, shifted by the largest exponent.
      double mx = -std::numeric_limits<double>::infinity();
      for (double x : samples) mx = std::max(mx, lambda * (x - mu));
      double acc = 0.0;
      for (double x : samples) acc += std::exp(lambda * (x - mu) - mx);
      const double log_mgf = mx + std::log(acc / n);
      if (!std::isfinite(log_mgf)) {
        est.skipped.push_back(lambda);
        continue;
      }
      est.sigma_hat = std::max(est.sigma_hat, std::sqrt(2.0 * std::max(0.0, log_mgf)) / std::abs(lambda));
    }
  }
  return est;
}

TailContext::TailContext(LossSpec loss_, DataModel model_)
    : loss(std::move(loss_)), model(std::move(model_)), constants(loss_constants(loss)) {}

double relevant_scale(Statement s, const TailContext& ctx) {
  const LossConstants& k = ctx.constants;
  const double sub = ctx.C * k.d_omega * ctx.L * k.L_g * std::sqrt(ctx.c / ctx.model.d);
  switch (s) {
    case Statement::Obs33: return k.M0;
    case Statement::Obs34: return k.M1;
    case Statement::Obs35: return k.M2;
    case Statement::Lem36: return ctx.loss.K() * sub;
    case Statement::Lem51_vhat: return sub;
    case Statement::Lem52_vtilde: return k.gamma * k.d_omega * std::sqrt(8.0 * ctx.model.r);
    case Statement::Hoeffding: return 1.0;
    case Statement::VectorBD: return ctx.b;
    case Statement::Azuma: return ctx.azuma_c;
  }
  return 1.0;
}

double analytic_bound(Statement s, const TailContext& ctx, double eps, std::size_t n) {
  const LossConstants& k = ctx.constants;
  const double nn = static_cast<double>(n);
  const double K = ctx.loss.K();
  const double d = ctx.model.d;
  const double r = ctx.model.r;
  const double sub2 = 2.0 * ctx.c * ctx.C * ctx.C * k.d_omega * k.d_omega * ctx.L * ctx.L * k.L_g * k.L_g;
  switch (s) {
    case Statement::Obs33: return std::exp(-2.0 * nn * eps * eps / (k.M0 * k.M0));
    case Statement::Obs34: return std::exp(-2.0 * nn * eps * eps / (k.M1 * k.M1));
    case Statement::Obs35: return 2.0 * std::exp(-2.0 * nn * eps * eps / (k.M2 * k.M2));
    case Statement::Lem36: return K * std::exp(-nn * d * eps * eps / (sub2 * K * K));
    // The per-coordinate lemmas are checked on the event "some coordinate
    // deviates", hence the factor K.
    case Statement::Lem51_vhat: return K * std::exp(-nn * d * eps * eps / sub2);
    case Statement::Lem52_vtilde:
      return K * 2.0 * r *
             std::exp(-nn * eps * eps / (8.0 * k.gamma * k.gamma * r * k.d_omega * k.d_omega));
    case Statement::Hoeffding: return hoeffding_bound(n, eps, 1.0);
    case Statement::VectorBD: return vector_bd_bound(n, eps, ctx.b);
    case Statement::Azuma: return azuma_bound(n, eps, ctx.azuma_c);
  }
  return 1.0;
}

std::vector<TailReport> run_tail_check(Statement s, const TailContext& ctx,
                                       const std::vector<double>& eps, std::size_t n,
                                       std::size_t trials, std::uint64_t seed, StreamId stream,
                                       int jobs) {
  if (n < 1 || trials < 1) throw Error(ErrorCode::ConfigError, "run_tail_check: n and trials must be >= 1");
  check_preconditions(s, ctx);

  std::vector<std::vector<double>> stats(trials);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t t = begin; t < end; ++t) {
      CounterRng rng(seed, derive_stream(stream, t));
      stats[t] = trial_statistics(s, ctx, n, rng);
    }
  };
  const auto workers = static_cast<std::size_t>(std::clamp(jobs, 1, 256));
  if (workers == 1) {
    work(0, trials);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t chunk = (trials + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t b = std::min(trials, w * chunk), e = std::min(trials, b + chunk);
      pool.emplace_back([&, w, b, e] {
        try {
          work(b, e);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& err : errors) {
      if (err) std::rethrow_exception(err);
    }
  }

  std::vector<TailReport> out;
  for (double e : eps) {
    std::size_t hits = 0;
    for (const auto& st : stats) {
      if (std::any_of(st.begin(), st.end(), [&](double v) { return v <= -e; })) ++hits;
    }
    TailReport r;
    r.statement = s;
    r.eps = e;
    r.n = n;
    r.trials = trials;
    r.C = ctx.C;
    r.empirical_freq = static_cast<double>(hits) / static_cast<double>(trials);
    r.mc_stderr = std::sqrt(r.empirical_freq * (1.0 - r.empirical_freq) / static_cast<double>(trials));
    r.analytic_bound_uncapped = analytic_bound(s, ctx, e, n);
    r.analytic_bound = std::min(1.0, r.analytic_bound_uncapped);
    r.vacuous = r.analytic_bound_uncapped >= 1.0;
    r.pass = r.empirical_freq <= r.analytic_bound + 3.0 * r.mc_stderr;
    out.push_back(r);
  }
  return out;
}

ProductCheck subgaussian_product_check(ProductZ z, double M, double sigma, std::size_t trials,
                                       std::uint64_t seed, StreamId stream) {
  CounterRng rng(seed, stream);
  // P(|X| < tau) = 1/2 for X ~ N(0, sigma^2).
  const double tau = 0.6744897501960817 * sigma;
  std::vector<double> prod;
  prod.reserve(trials);
  for (std::size_t i = 0; i < trials; ++i) {
    const double x = sigma * rng.normal();
    double zv = 0.0;
    switch (z) {
      case ProductZ::Zero: zv = 0.0; break;
      case ProductZ::Constant: zv = M; break;
      // Even in X, so E[Z X] = 0.
      case ProductZ::SignCoupled: zv = std::abs(x) < tau ? M : -M; break;
    }
    prod.push_back(zv * x);
  }
  ProductCheck out;
  out.M = M;
  out.sigma = sigma;
  out.sigma_hat = subgaussian_estimate(prod).sigma_hat;
  out.ratio = (M > 0.0 && sigma > 0.0) ? out.sigma_hat / (M * sigma) : 0.0;
  return out;
}

std::string tail_report_json(const TailReport& r) {
  nlohmann::ordered_json j;
  j["statement_id"] = to_string(r.statement);
  j["eps"] = r.eps;
  j["n"] = r.n;
  j["trials"] = r.trials;
  j["empirical_freq"] = r.empirical_freq;
  j["analytic_bound"] = r.analytic_bound;
  j["analytic_bound_uncapped"] = r.analytic_bound_uncapped;
  j["mc_stderr"] = r.mc_stderr;
  j["C"] = r.C;
  j["status"] = r.vacuous ? "vacuous" : (r.pass ? "pass" : "fail");
  j["pass"] = r.pass;
  j["vacuous"] = r.vacuous;
  return j.dump();
}

}  // namespace robustlaw
