#pragma once

#include "mbscore/nonlinear_score.hpp"

#include <string>

namespace mbs {

struct VerifyRow {
  std::string check;
  double value = 0;
  std::string target;  // human-readable bound, e.g. "<= 1e-06"
  bool pass = false;
};

struct VerifyReport {
  std::string suite;
  std::vector<VerifyRow> rows;
  std::string detail_csv;  // per-point values behind the rows

  bool passed() const;
  std::string table() const;  // one aligned line per row
  std::string csv() const;    // suite,check,value,target,pass
};

struct VerifyOptions {
  std::uint64_t seed = 0;
  std::size_t paths = 0;  // 0 selects the suite default
};

/// |a - b| / |b|, with |a - b| when b = 0 (so 0/0 counts as 0).
double relative_error(double a, double b);

/// Closed-form and quadrature linear scores against the transition-density
/// scores, plus closed-form gamma against quadrature with its order in dt.
VerifyReport verify_linear_equivalence(const VerifyOptions& opts);
/// Discrete covering identity M = I for m = 1, 2, 3.
VerifyReport verify_covering(const VerifyOptions& opts);
/// Pathwise Ito identity residual and its order in dt.
VerifyReport verify_ito_residual(const VerifyOptions& opts);
/// Log-log slopes of ||gamma^{-1}(t)|| near t = 0.
VerifyReport verify_singularity(const VerifyOptions& opts);
/// Fast vs reference Skorokhod engine, D_t gamma bump checks and the cubic
/// stationary score at reduced scale.
VerifyReport verify_nonlinear(const VerifyOptions& opts);

std::vector<std::string> suite_names();
VerifyReport run_suite(const std::string& name, const VerifyOptions& opts);

/// Relative Frobenius error of dgamma_malliavin against central differences
/// of gamma_T in the increment (k, l), step h.
double dgamma_bump_error(const SdeSpec<double>& spec, const TimeGrid<double>& grid, const VectorXd& x0,
                         const MatrixXd& increments, std::size_t k, Eigen::Index l, double h);

}  // namespace mbs
