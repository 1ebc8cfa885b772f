#include "robustlaw/bounds.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace robustlaw {
namespace {

using ld = long double;

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void add_step(FormulaTrace* trace, std::string name, std::string formula,
              std::vector<std::pair<std::string, double>> bindings, ld value,
              std::string note = {}) {
  if (!trace) return;
  trace->steps.push_back(TraceStep{std::move(name), std::move(formula), std::move(bindings),
                                   static_cast<double>(value), std::move(note)});
}

std::vector<std::pair<std::string, double>> constant_bindings(const BoundInputs& in) {
  const auto& k = in.constants;
  return {{"eps", in.eps},     {"delta", in.delta}, {"C", in.C},   {"c", in.c},
          {"K", in.K},         {"n", in.n},         {"d", in.d},   {"p", in.p},
          {"J", in.J},         {"W", in.W},         {"r", in.r},   {"d_omega", k.d_omega},
          {"L_g", k.L_g},      {"L_phi", k.L_phi},  {"gamma", k.gamma}};
}

// Factor multiplying L in the Gamma_3 sub-Gaussian parameter.
ld lipschitz_factor(const BoundInputs& in) {
  return in.pre_softmax ? 2.0L : static_cast<ld>(in.constants.L_g);
}

void check_corollary(const CorollaryInputs& in) {
  auto bad = [](const char* what) { throw Error(ErrorCode::NumericError, std::string("corollary: ") + what); };
  if (!(in.eps > 0.0 && in.eps < 1.0)) bad("eps must lie in (0, 1)");
  if (!(in.delta > 0.0 && in.delta < 1.0)) bad("delta must lie in (0, 1)");
  if (in.K < 1 || in.r < 1 || in.n < 1 || in.d < 1 || in.p < 1) bad("counts must be >= 1");
  if (!(in.M > 0.0 && in.c > 0.0 && in.C > 0.0 && in.J > 0.0 && in.W > 0.0)) {
    bad("M, c, C, J, W must be > 0");
  }
}

}  // namespace

const TraceStep* FormulaTrace::find(const std::string& name) const {
  for (const auto& s : steps) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

std::string FormulaTrace::render() const {
  std::ostringstream out;
  for (const auto& s : steps) {
    out << s.name << " = " << s.formula << "\n";
    if (!s.bindings.empty()) {
      out << "  where";
      for (std::size_t i = 0; i < s.bindings.size(); ++i) {
        out << (i ? ", " : " ") << s.bindings[i].first << " = " << num(s.bindings[i].second);
      }
      out << "\n";
    }
    out << "  = " << num(s.value) << "\n";
    if (!s.note.empty()) out << "  note: " << s.note << "\n";
  }
  return out.str();
}

void BoundInputs::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::NumericError, "bound inputs: " + what); };
  if (!(eps > 0.0 && eps < 1.0)) bad("eps must lie in (0, 1), got " + num(eps));
  if (!(delta > 0.0 && delta < 1.0)) bad("delta must lie in (0, 1), got " + num(delta));
  if (n < 1 || d < 1 || p < 1 || K < 1 || r < 1) bad("n, d, p, K, r must be >= 1");
  if (!(c > 0.0 && C > 0.0 && J > 0.0 && W > 0.0)) bad("c, C, J, W must be > 0");
  const auto& k = constants;
  for (double v : {k.d_omega, k.L_g, k.L_phi, k.gamma, k.m0, k.a0, k.m1, k.m2, k.m3}) {
    if (!std::isfinite(v) || v < 0.0) bad("loss constants must be finite and >= 0");
  }
  if (L && !(*L > 0.0)) bad("L must be > 0");
}

SampleSize sample_size_requirement(const BoundInputs& in, FormulaTrace* trace) {
  in.validate();
  const auto& k = in.constants;
  const ld eps2 = static_cast<ld>(in.eps) * in.eps;
  const ld inner = static_cast<ld>(k.m1) + k.m2 +
                   2.0L * std::max<ld>(3.0L * k.gamma, k.m3) * (static_cast<ld>(k.m0) + k.a0);
  SampleSize s;
  s.main_branch = 300.0L * std::log(10.0L * in.K / in.delta) / eps2 * inner * inner;
  s.mixture_branch = 2048.0L * in.K * in.K * static_cast<ld>(k.gamma) * k.gamma * in.r *
                     static_cast<ld>(k.d_omega) * k.d_omega *
                     std::log(10.0L * in.K * in.r / in.delta) / eps2;
  s.exact = std::max(s.main_branch, s.mixture_branch);
  s.count = static_cast<double>(std::ceil(s.exact));
  add_step(trace, "n_main",
           "300*log(10*K/delta)/eps^2*(m1 + m2 + 2*max(3*gamma, m3)*(m0 + a0))^2",
           {{"K", in.K}, {"delta", in.delta}, {"eps", in.eps}, {"m1", k.m1}, {"m2", k.m2},
            {"gamma", k.gamma}, {"m3", k.m3}, {"m0", k.m0}, {"a0", k.a0}},
           s.main_branch);
  add_step(trace, "n_mixture", "2048*K^2*gamma^2*r*d_omega^2*log(10*K*r/delta)/eps^2",
           {{"K", in.K}, {"gamma", k.gamma}, {"r", in.r}, {"d_omega", k.d_omega},
            {"delta", in.delta}, {"eps", in.eps}},
           s.mixture_branch);
  add_step(trace, "n_required", "ceil(max(n_main, n_mixture))",
           {{"n_main", static_cast<double>(s.main_branch)},
            {"n_mixture", static_cast<double>(s.mixture_branch)}},
           s.count);
  return s;
}

double robustness_lower_bound(const BoundInputs& in, FormulaTrace* trace) {
  in.validate();
  const auto& k = in.constants;
  const ld lg = lipschitz_factor(in);
  const ld spread = static_cast<ld>(k.d_omega) * k.L_g * in.K + k.L_phi + k.gamma;
  const ld denom = static_cast<ld>(in.p) * std::log1p(8.0L * in.J * in.W * spread / in.eps) +
                   std::log(5.0L * in.K / in.delta);
  const ld pref = static_cast<ld>(in.eps) /
                  (32.0L * in.C * in.K * k.d_omega * lg * std::sqrt(2.0L * in.c));
  const ld value = pref * std::sqrt(static_cast<ld>(in.n) * in.d / denom);
  auto b = constant_bindings(in);
  if (in.pre_softmax) {
    add_step(trace, "L_floor",
             "eps/(32*C*K*d_omega*2*sqrt(2*c))*sqrt(n*d/(p*log(1 + 8*J*W*(d_omega*L_g*K + L_phi + "
             "gamma)/eps) + log(5*K/delta)))",
             std::move(b), value, "L * L_g replaced by 2 L (pre-softmax Lipschitz constant)");
  } else {
    add_step(trace, "L_floor",
             "eps/(32*C*K*d_omega*L_g*sqrt(2*c))*sqrt(n*d/(p*log(1 + 8*J*W*(d_omega*L_g*K + L_phi "
             "+ gamma)/eps) + log(5*K/delta)))",
             std::move(b), value);
  }
  return static_cast<double>(value);
}

// Substituting the square-loss constants into the n-condition:
//   inner = 2KM^2 + 2*6sqrt(K)M*2sqrt(K)M = 26KM^2, 300*26^2 = 202800,
//   mixture branch 2048*K^2*4KM^2*r*4M^2 = 32768 K^3 M^4 r,
// and K^2 log(10K/delta) <= K^3 r log(10Kr/delta).
std::pair<double, std::string> default_c1_regression() {
  return {202800.0,
          "C1 = max(300*(2KM^2 + 24KM^2)^2/(K^2 M^4), 2048*4*4) = max(202800, 32768) = 202800, "
          "from square-loss constants in the theorem's n-condition"};
}

// Cross-entropy: with m = max(1 + 2M + log K, 1 + |log alpha|), log K <= sqrt(K) m and
// 2 max(3 gamma, m3)(m0 + a0) <= 12 sqrt(K) m, so inner^2 <= 196 K m^2;
// 300*196 = 58800 beats the mixture branch 2048.
std::pair<double, std::string> default_c1_classification() {
  return {58800.0,
          "C1 = max(300*(2sqrt(K)m + 12sqrt(K)m)^2/(K m^2), 2048) = max(58800, 2048) = 58800, "
          "m = max(1+2M+log K, 1+|log alpha|), from cross-entropy constants in the theorem's "
          "n-condition"};
}

CorollaryResult regression_bound(const CorollaryInputs& in, FormulaTrace* trace) {
  check_corollary(in);
  CorollaryResult out;
  const auto [c1_default, c1_why] = default_c1_regression();
  out.C1 = in.C1 > 0.0 ? in.C1 : c1_default;
  const ld M = in.M, K = in.K;
  const ld denom = static_cast<ld>(in.p) * std::log1p(64.0L * in.J * in.W * K * M / in.eps) +
                   std::log(5.0L * K / in.delta);
  const ld value = static_cast<ld>(in.eps) / (128.0L * in.C * K * M * std::sqrt(2.0L * in.c)) *
                   std::sqrt(static_cast<ld>(in.n) * in.d / denom);
  out.value = static_cast<double>(value);
  const ld ncond = static_cast<ld>(out.C1) * M * M * M * M * K * K * K * in.r *
                   std::log(10.0L * K * in.r / in.delta) / (static_cast<ld>(in.eps) * in.eps);
  out.n_condition = static_cast<double>(ncond);
  out.n_ok = in.n >= out.n_condition;
  add_step(trace, "L_regression",
           "eps/(128*C*K*M*sqrt(2*c))*sqrt(n*d/(p*log(1 + 64*J*W*K*M/eps) + log(5*K/delta)))",
           {{"eps", in.eps}, {"C", in.C}, {"K", in.K}, {"M", in.M}, {"c", in.c}, {"n", in.n},
            {"d", in.d}, {"p", in.p}, {"J", in.J}, {"W", in.W}, {"delta", in.delta}},
           value);
  add_step(trace, "n_regression", "C1*M^4*K^3*r*log(10*K*r/delta)/eps^2",
           {{"C1", out.C1}, {"M", in.M}, {"K", in.K}, {"r", in.r}, {"delta", in.delta},
            {"eps", in.eps}},
           ncond, c1_why);
  return out;
}

CorollaryResult classification_bound(const CorollaryInputs& in, bool improved,
                                     FormulaTrace* trace) {
  check_corollary(in);
  if (!(in.alpha > 0.0) || in.alpha * in.K > 1.0 + 1e-15) {
    throw Error(ErrorCode::NumericError, "classification_bound: alpha must lie in (0, 1/K]");
  }
  CorollaryResult out;
  const auto [c1_default, c1_why] = default_c1_classification();
  out.C1 = in.C1 > 0.0 ? in.C1 : c1_default;
  const ld M = in.M, K = in.K;
  const ld e2m = std::exp(2.0L * M);
  const ld a = 1.0L + 2.0L * M + std::log(K);
  const ld tail = (improved ? 1.0L : 2.0L) * std::sqrt(K) * a;
  const ld denom = static_cast<ld>(in.p) * std::log1p(8.0L * in.J * in.W * (e2m * K * K + tail) / in.eps) +
                   std::log(5.0L * K / in.delta);
  const ld pref = improved ? static_cast<ld>(in.eps) / (64.0L * in.C * K * std::sqrt(2.0L * in.c))
                           : static_cast<ld>(in.eps) / (32.0L * in.C * K * K * e2m * std::sqrt(2.0L * in.c));
  const ld value = pref * std::sqrt(static_cast<ld>(in.n) * in.d / denom);
  out.value = static_cast<double>(value);
  const ld m = std::max(a, 1.0L + std::abs(std::log(static_cast<ld>(in.alpha))));
  const ld ncond = static_cast<ld>(out.C1) * K * K * K * in.r *
                   std::log(10.0L * K * in.r / in.delta) / (static_cast<ld>(in.eps) * in.eps) * m * m;
  out.n_condition = static_cast<double>(ncond);
  out.n_ok = in.n >= out.n_condition;
  std::vector<std::pair<std::string, double>> b = {
      {"eps", in.eps}, {"C", in.C}, {"K", in.K}, {"M", in.M}, {"c", in.c},   {"n", in.n},
      {"d", in.d},     {"p", in.p}, {"J", in.J}, {"W", in.W}, {"delta", in.delta}};
  if (improved) {
    add_step(trace, "L_classification_improved",
             "eps/(64*C*K*sqrt(2*c))*sqrt(n*d/(p*log(1 + 8*J*W*(exp(2*M)*K^2 + sqrt(K)*(1 + 2*M + "
             "log(K)))/eps) + log(5*K/delta)))",
             std::move(b), value,
             "bounds the pre-softmax Lipschitz constant; log term carries sqrt(K)(1+2M+log K)");
  } else {
    add_step(trace, "L_classification_generic",
             "eps/(32*C*K^2*exp(2*M)*sqrt(2*c))*sqrt(n*d/(p*log(1 + 8*J*W*(exp(2*M)*K^2 + "
             "2*sqrt(K)*(1 + 2*M + log(K)))/eps) + log(5*K/delta)))",
             std::move(b), value,
             "log term carries 2sqrt(K)(1+2M+log K); the improved form carries sqrt(K)(1+2M+log K)");
  }
  add_step(trace, "n_classification",
           "C1*K^3*r*log(10*K*r/delta)/eps^2*max(1 + 2*M + log(K), 1 + abs(log(alpha)))^2",
           {{"C1", out.C1}, {"K", in.K}, {"r", in.r}, {"delta", in.delta}, {"eps", in.eps},
            {"M", in.M}, {"alpha", in.alpha}},
           ncond, c1_why);
  return out;
}

BoundReport failure_probability(const BoundInputs& in) {
  in.validate();
  if (!in.L) throw Error(ErrorCode::NumericError, "failure_probability: L must be supplied");
  const auto& k = in.constants;
  BoundReport rep;
  rep.L_used = *in.L;
  const ld K = in.K, n = in.n, eps = in.eps;
  const ld L = *in.L;
  const ld lg = lipschitz_factor(in);
  const ld spread = static_cast<ld>(k.d_omega) * k.L_g * K + k.L_phi + k.gamma;
  const ld nu = eps / (2.0L * spread);
  const ld net_log = static_cast<ld>(in.p) * std::log1p(4.0L * in.W * in.J / nu);
  rep.nu = static_cast<double>(nu);
  rep.net_log_size = static_cast<double>(net_log);
  add_step(&rep.trace, "nu", "eps/(2*(d_omega*L_g*K + L_phi + gamma))",
           {{"eps", in.eps}, {"d_omega", k.d_omega}, {"L_g", k.L_g}, {"K", in.K},
            {"L_phi", k.L_phi}, {"gamma", k.gamma}},
           nu);
  add_step(&rep.trace, "net_log_size", "p*log(1 + 4*W*J/nu)",
           {{"p", in.p}, {"W", in.W}, {"J", in.J}, {"nu", rep.nu}}, net_log);

  const ld e_net = in.r > 1 ? eps / 16.0L : eps / 8.0L;
  const std::string e_net_s = in.r > 1 ? "(eps/16)" : "(eps/8)";
  const std::string lg_s = in.pre_softmax ? "2^2" : "L_g^2";
  auto push = [&](const std::string& name, const std::string& formula,
                  std::vector<std::pair<std::string, double>> bindings, ld log_value) {
    FailureTerm t;
    t.name = name;
    t.log_value = static_cast<double>(log_value);
    t.value = static_cast<double>(std::exp(log_value));
    rep.terms.push_back(t);
    add_step(&rep.trace, name, formula, std::move(bindings), std::exp(log_value));
  };

  const ld net_exp = n * in.d * e_net * e_net /
                     (2.0L * in.c * in.C * in.C * K * K * k.d_omega * k.d_omega * L * L * lg * lg);
  push("term_net",
       "K*exp(net_log_size - n*d*" + e_net_s + "^2/(2*c*C^2*K^2*d_omega^2*L^2*" + lg_s + "))",
       {{"K", in.K}, {"net_log_size", rep.net_log_size}, {"n", in.n}, {"d", in.d},
        {"eps", in.eps}, {"c", in.c}, {"C", in.C}, {"d_omega", k.d_omega}, {"L", *in.L},
        {"L_g", k.L_g}},
       std::log(K) + net_log - net_exp);
  if (in.r > 1) {
    const ld e16 = eps / 16.0L;
    push("term_mixture", "2*K*r*exp(-n*(eps/16)^2/(8*K^2*gamma^2*r*d_omega^2))",
         {{"K", in.K}, {"r", in.r}, {"n", in.n}, {"eps", in.eps}, {"gamma", k.gamma},
          {"d_omega", k.d_omega}},
         std::log(2.0L * K * in.r) -
             n * e16 * e16 / (8.0L * K * K * k.gamma * k.gamma * in.r * k.d_omega * k.d_omega));
  }
  const ld e8 = eps / 8.0L;
  const double Ms[3] = {k.M0, k.M1, k.M2};
  for (int j = 0; j < 3; ++j) {
    const std::string mj = "M" + std::to_string(j);
    push("term_" + mj, "2*K*exp(-2*n*(eps/8)^2/" + mj + "^2)",
         {{"K", in.K}, {"n", in.n}, {"eps", in.eps}, {mj, Ms[j]}},
         std::log(2.0L * K) - 2.0L * n * e8 * e8 / (static_cast<ld>(Ms[j]) * Ms[j]));
  }
  ld total = 0.0L;
  for (const auto& t : rep.terms) total += std::exp(static_cast<ld>(t.log_value));
  rep.delta_total_uncapped = static_cast<double>(total);
  rep.delta_total = std::min(1.0, rep.delta_total_uncapped);
  rep.vacuous = rep.delta_total_uncapped >= 1.0;
  return rep;
}

BoundReport evaluate_bounds(const BoundInputs& in) {
  in.validate();
  FormulaTrace head;
  const SampleSize ss = sample_size_requirement(in, &head);
  const double floor = robustness_lower_bound(in, &head);
  BoundInputs at = in;
  if (!at.L) at.L = floor;
  BoundReport rep = failure_probability(at);
  head.steps.insert(head.steps.end(), rep.trace.steps.begin(), rep.trace.steps.end());
  rep.trace = std::move(head);
  rep.n_required = ss.count;
  rep.n_ok = in.n >= ss.count;
  rep.L_floor = floor;
  return rep;
}

std::string bound_report_json(const BoundReport& rep, const BoundInputs& in) {
  nlohmann::ordered_json j;
  j["n"] = in.n;
  j["d"] = in.d;
  j["p"] = in.p;
  j["K"] = in.K;
  j["r"] = in.r;
  j["eps"] = in.eps;
  j["delta"] = in.delta;
  j["C"] = in.C;
  j["c"] = in.c;
  j["J"] = in.J;
  j["W"] = in.W;
  j["n_required"] = rep.n_required;
  j["n_ok"] = rep.n_ok;
  j["L_floor"] = rep.L_floor;
  j["L_used"] = rep.L_used;
  j["nu"] = rep.nu;
  j["net_log_size"] = rep.net_log_size;
  nlohmann::ordered_json terms = nlohmann::ordered_json::array();
  for (const auto& t : rep.terms) {
    terms.push_back({{"name", t.name}, {"value", t.value}, {"log_value", t.log_value}});
  }
  j["terms"] = terms;
  j["delta_total_uncapped"] = rep.delta_total_uncapped;
  j["delta_total"] = rep.delta_total;
  j["vacuous"] = rep.vacuous;
  j["trace"] = rep.trace.render();
  return j.dump(2);
}

}  // namespace robustlaw
