#pragma once

#include "robustlaw/bounds.hpp"
#include "robustlaw/concentration.hpp"
#include "robustlaw/config.hpp"
#include "robustlaw/function_class.hpp"
#include "robustlaw/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace robustlaw {

/// Maps an error to the process exit code: 2 for configuration problems,
/// 3 for numeric ones.
int exit_code_for(ErrorCode code);

// ---- identity suite ------------------------------------------------------

struct IdentitySuiteOptions {
  std::size_t decomposition_draws = 25000;  ///< per loss
  std::size_t triangle_cases = 10000;       ///< per loss
  std::size_t gradient_cases = 1000;        ///< per loss
  std::uint64_t seed = 1;
  int jobs = 1;
  bool sabotage = false;  ///< flips the sign of Gamma_1 in the residual (negative control)
};

struct IdentityCheck {
  std::string loss;
  std::string check;  ///< decomposition | phi1_nonneg | triangle | gradient_fd
  std::size_t cases = 0;
  double max_residual = 0.0;
  double tolerance = 0.0;
  bool pass = true;
  std::string first_failure;  ///< JSON of the first failing case, empty if none
};

struct IdentitySuiteResult {
  std::vector<IdentityCheck> checks;
  bool all_pass() const;
};

IdentitySuiteResult run_identity_suite(const IdentitySuiteOptions& opts);

/// Built-in loss used by the identity suite ("square", "mahalanobis", "neg_entropy", "binary_entropy").
LossSpec builtin_loss(const std::string& name);

// ---- concentration -----------------------------------------------------------

struct ConcentrationOptions {
  std::vector<Statement> statements;
  std::vector<double> eps_fracs = {0.1, 0.2, 0.4};
  std::size_t n = 200;
  std::size_t trials = 10000;
  std::size_t grad_mc = 20000;
  std::size_t sigma_mc = 100000;
  int jobs = 1;
};

struct ConcentrationOutcome {
  std::vector<TailReport> reports;
  std::vector<std::pair<Statement, std::string>> infeasible;  ///< (statement, reason)
  double f_lipschitz = 0.0;
};

ConcentrationOptions concentration_options(const Config& cfg);
/// Builds the data model, a fixed certified predictor and the tail context from cfg.
ConcentrationOutcome run_concentration(const Config& cfg, const ConcentrationOptions& opts);

// ---- bounds ------------------------------------------------------------------

/// Bound inputs from the loss/model/class/run/bound blocks.
BoundInputs bound_inputs_from_config(const Config& cfg);

// ---- end-to-end experiment -----------------------------------------------------

enum class Verdict { Consistent, Violation, NotApplicable };
const char* to_string(Verdict v);

/// violation only if achieved, n_ok and the certified upper bound lies below the floor.
Verdict decide_verdict(bool achieved, bool n_ok, double L_ub, double L_floor);

struct ExperimentResult {
  std::string config_canonical;
  std::string config_hash;
  double sigma2 = 0.0;
  double sigma2_stderr = 0.0;
  std::string sigma2_provenance;
  double eps = 0.0;
  TrainResult training;
  double gap = 0.0;
  double L_lb = 0.0;
  double L_ub = 0.0;
  bool L_ub_converged = true;
  BoundReport bound;
  BoundInputs bound_inputs;
  std::optional<CorollaryResult> corollary;
  std::string corollary_name;
  Verdict verdict = Verdict::NotApplicable;
  double max_decomposition_residual = 0.0;
  std::vector<DecompositionRecord> decomposition;
  Vec params;
  std::string manifest;
  double seconds_total = 0.0;

  /// Report JSON; timing fields are only included when requested.
  std::string json(bool with_timing = true) const;
};

ExperimentResult run_experiment(const Config& cfg);

/// Writes params, manifest, decomposition CSV, history CSV, report JSON and
/// optional SVG plots to dir.
void write_experiment_artifacts(const ExperimentResult& r, const std::string& dir,
                                const std::vector<std::string>& formats);

// ---- command entry points ---------------------------------------------------------

struct CommandOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  int jobs = 1;
  std::vector<std::string> formats;
  bool sabotage = false;
  std::vector<std::string> statements;
  std::vector<std::string> inputs;  ///< report files, directories or glob patterns
};

/// Loads the config file and applies --seed.
Config load_config(const CommandOptions& opts);

int cmd_verify_identities(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_check_concentration(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_compute_bound(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_run_experiment(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_report(const CommandOptions& opts, std::ostream& out, std::ostream& err);

}  // namespace robustlaw
