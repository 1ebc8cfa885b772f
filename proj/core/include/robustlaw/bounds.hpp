#pragma once

#include "robustlaw/bregman.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace robustlaw {

/// One substituted formula. `formula` is a plain infix expression over the
/// names in `bindings` (operators + - * / ^, functions sqrt log exp max ceil).
struct TraceStep {
  std::string name;
  std::string formula;
  std::vector<std::pair<std::string, double>> bindings;
  double value = 0.0;
  std::string note;
};

struct FormulaTrace {
  std::vector<TraceStep> steps;

  const TraceStep* find(const std::string& name) const;
  std::string render() const;
};

struct BoundInputs {
  LossConstants constants;
  double n = 1;
  double d = 1;
  double p = 1;
  int K = 1;
  int r = 1;
  double eps = 0.5;
  double delta = 0.1;
  double c = 1.0;
  double C = 2.0;
  double J = 1.0;
  double W = 1.0;
  std::optional<double> L;
  /// Replace L * L_g by 2 L in the Gamma_3 terms (pre-softmax Lipschitz constant).
  bool pre_softmax = false;

  /// Throws NumericError on out-of-range inputs.
  void validate() const;
};

struct SampleSize {
  long double main_branch = 0;
  long double mixture_branch = 0;
  long double exact = 0;  ///< max of the two branches, before ceiling
  double count = 0;       ///< ceil(exact)
};

SampleSize sample_size_requirement(const BoundInputs& in, FormulaTrace* trace = nullptr);

double robustness_lower_bound(const BoundInputs& in, FormulaTrace* trace = nullptr);

struct CorollaryInputs {
  int K = 1;
  double M = 1.0;
  double alpha = 0.0;  ///< classification only
  double J = 1.0;
  double W = 1.0;
  double n = 1;
  double d = 1;
  double p = 1;
  double eps = 0.5;
  double delta = 0.1;
  double c = 1.0;
  double C = 2.0;
  int r = 1;
  double C1 = 0.0;  ///< <= 0 selects the default for the corollary
};

struct CorollaryResult {
  double value = 0.0;
  double n_condition = 0.0;  ///< required n for the corollary premise
  double C1 = 0.0;
  bool n_ok = false;
};

/// Default C1 for each corollary, with the derivation text.
std::pair<double, std::string> default_c1_regression();
std::pair<double, std::string> default_c1_classification();

CorollaryResult regression_bound(const CorollaryInputs& in, FormulaTrace* trace = nullptr);
CorollaryResult classification_bound(const CorollaryInputs& in, bool improved,
                                     FormulaTrace* trace = nullptr);

struct FailureTerm {
  std::string name;
  double value = 0.0;  ///< uncapped
  double log_value = 0.0;
};

struct BoundReport {
  double n_required = 0.0;
  bool n_ok = false;
  double L_floor = 0.0;
  double L_used = 0.0;  ///< L at which the failure terms were evaluated
  double nu = 0.0;
  double net_log_size = 0.0;
  std::vector<FailureTerm> terms;
  double delta_total_uncapped = 0.0;
  double delta_total = 0.0;  ///< capped at 1
  bool vacuous = false;
  FormulaTrace trace;
};

/// Failure terms at in.L (required).
BoundReport failure_probability(const BoundInputs& in);

/// n_required, L_floor and the failure terms at in.L, or at L_floor when L is unset.
BoundReport evaluate_bounds(const BoundInputs& in);

std::string bound_report_json(const BoundReport& report, const BoundInputs& in);

}  // namespace robustlaw
