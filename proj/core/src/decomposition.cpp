#include "robustlaw/decomposition.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace robustlaw {
namespace {

// Running mean and variance of a vector-valued sample.
struct Welford {
  Vec mean;
  Vec m2;
  std::size_t n = 0;

  void add(const Vec& v) {
    if (n == 0) {
      mean = Vec::Zero(v.size());
      m2 = Vec::Zero(v.size());
    }
    ++n;
    const Vec delta = v - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta.cwiseProduct(v - mean);
  }

  Vec stderr_() const {
    if (n < 2) return Vec::Zero(mean.size());
    return (m2 / static_cast<double>(n - 1) / static_cast<double>(n)).cwiseMax(0.0).cwiseSqrt();
  }
};

}  // namespace

DecompositionRecord decompose(const LossSpec& loss, const DataModel& model, const Predictor& f,
                              const Sample& s, double sigma2, const Vec& e_grad_f,
                              const std::string& e_grad_provenance) {
  const Vec fx = f(s.x);
  const Vec m = conditional_mean(model, s.x);
  if (!loss.domain().a_region.contains(m)) {
    throw Error(ErrorCode::DomainViolation,
                "decompose: conditional mean outside " + loss.domain().a_region.describe());
  }
  const Vec grad_f = phi_gradient(loss, fx);
  const Vec grad_m = phi_gradient(loss, m);
  const Vec ym = s.y - m;

  DecompositionRecord r;
  r.sigma2 = sigma2;
  r.e_grad_f = e_grad_f;
  r.e_grad_provenance = e_grad_provenance;
  r.z = divergence(loss, s.y, fx);
  r.phi1 = divergence(loss, m, fx);
  r.phi2 = divergence(loss, s.y, m) - sigma2;
  r.gamma1 = ym.dot(grad_m);
  r.gamma2 = -ym.dot(e_grad_f);
  r.gamma3 = -ym.dot(grad_f - e_grad_f);
  r.residual = r.z - sigma2 - (r.phi1 + r.phi2 + r.gamma1 + r.gamma2 + r.gamma3);
  const double scale = std::abs(r.z) + std::abs(sigma2) + std::abs(r.phi1) + std::abs(r.phi2) +
                       std::abs(r.gamma1) + std::abs(r.gamma2) + std::abs(r.gamma3);
  r.residual_rel = std::abs(r.residual) / std::max(scale, 1e-3);
  return r;
}

GradEstimate mean_grad_f(const LossSpec& loss, const DataModel& model, const Predictor& f,
                         std::size_t n_mc, StreamId stream, bool condition_on_component) {
  if (n_mc < 1000) throw Error(ErrorCode::ConfigError, "mean_grad_f needs n_mc >= 1000");
  GradEstimate out;
  out.n_mc = n_mc;

  Welford all;
  CounterRng rng(model.seed, derive_stream(stream, 0));
  for (std::size_t i = 0; i < n_mc; ++i) {
    const int g = model.r == 1 ? 0 : rng.categorical(model.weights);
    all.add(phi_gradient(loss, f(sample_component(model, g, rng))));
  }
  out.overall = all.mean;
  out.overall_stderr = all.stderr_();

  if (condition_on_component) {
    const auto K = out.overall.size();
    out.per_component.resize(model.r, K);
    out.per_component_stderr.resize(model.r, K);
    for (int k = 0; k < model.r; ++k) {
      Welford comp;
      CounterRng crng(model.seed, derive_stream(stream, static_cast<std::uint64_t>(k) + 1));
      for (std::size_t i = 0; i < n_mc; ++i) {
        comp.add(phi_gradient(loss, f(sample_component(model, k, crng))));
      }
      out.per_component.row(k) = comp.mean.transpose();
      out.per_component_stderr.row(k) = comp.stderr_().transpose();
    }
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "monte-carlo n=%zu stream=%016llx%s", n_mc,
                static_cast<unsigned long long>(stream),
                condition_on_component ? " per-component" : "");
  out.provenance = buf;
  return out;
}

double empirical_overfit_gap(const LossSpec& loss, const Predictor& f,
                             const std::vector<Sample>& dataset, double sigma2) {
  if (dataset.empty()) throw Error(ErrorCode::ConfigError, "empirical_overfit_gap: empty dataset");
  double total = 0.0;
  for (const auto& s : dataset) total += divergence(loss, s.y, f(s.x));
  return sigma2 - total / static_cast<double>(dataset.size());
}

MixtureTermsRecord mixture_terms(const LossSpec& loss, const DataModel& model, const Predictor& f,
                                 const std::vector<Sample>& samples, const GradEstimate& grads) {
  if (grads.per_component.rows() != model.r) {
    throw Error(ErrorCode::ConfigError,
                "mixture_terms needs per-component gradient means for every component");
  }
  const auto n = static_cast<Eigen::Index>(samples.size());
  const auto K = grads.overall.size();
  MixtureTermsRecord rec;
  rec.t.resize(n, K);
  rec.v.resize(n, K);
  rec.v_hat.resize(n, K);
  rec.v_tilde.resize(n, K);
  rec.u.resize(n, K);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Sample& s = samples[i];
    const Vec grad = phi_gradient(loss, f(s.x));
    const Vec m = conditional_mean(model, s.x);
    const Vec cond = grads.per_component.row(s.g).transpose();
    rec.t.row(i) = -(s.y - m).transpose();
    rec.v.row(i) = (grad - grads.overall).transpose();
    rec.v_hat.row(i) = (grad - cond).transpose();
    rec.v_tilde.row(i) = (cond - grads.overall).transpose();
  }
  rec.u = rec.t.cwiseProduct(rec.v);
  if (n > 0) {
    rec.split_residual = (rec.v - rec.v_hat - rec.v_tilde).cwiseAbs().maxCoeff();
    rec.product_residual = (rec.u - rec.t.cwiseProduct(rec.v)).cwiseAbs().maxCoeff();
  }
  return rec;
}

void write_decomposition_csv(std::ostream& out, const std::vector<DecompositionRecord>& records) {
  out << "i,z,phi1,phi2,gamma1,gamma2,gamma3,residual\n";
  char buf[256];
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", i, r.z,
                  r.phi1, r.phi2, r.gamma1, r.gamma2, r.gamma3, r.residual);
    out << buf;
  }
}

}  // namespace robustlaw
