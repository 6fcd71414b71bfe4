#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "duc/dataset.hpp"
#include "duc/duc_core.hpp"
#include "duc/shift_sim.hpp"

namespace duc {

enum class Loss { SquaredError, Logistic };

// Weighted empirical risk minimization: each dataset k contributes its rows
// with weight beta_k / n_k. The fitted parameter vector has the intercept
// first, then one coefficient per covariate.
struct WeightedFitSpec {
  Loss loss = Loss::SquaredError;
  Eigen::VectorXd beta;
  std::vector<const Dataset*> datasets;
  double ridge = 0.0;
};

Eigen::VectorXd weighted_fit(const WeightedFitSpec& spec);

double mse(const Eigen::VectorXd& theta, const Dataset& test);

struct RiskReport {
  double test_mse = 0.0;
  double excess_mse = 0.0;
  std::size_t n_test = 0;
};

// Excess risk against an oracle parameter fit on a large independent sample
// from the realized target distribution.
RiskReport excess_risk(const Eigen::VectorXd& theta_hat, const Dataset& test,
                       const Eigen::VectorXd& theta_oracle);

struct ValidationRow {
  std::string candidate_id;
  double duc = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double empirical_fraction = 0.0;
  int trials = 0;
};

struct ValidationResult {
  std::vector<ValidationRow> rows;
  double pearson = 0.0;
  double spearman = 0.0;
  double mean_abs_dev = 0.0;
  bool correlation_valid = false;  // false when trials < 2
  int trials = 0;
  double mean_excess_without = 0.0;
};

// Monte Carlo check that the covariate-only estimate predicts the fractional
// excess-risk reduction: per trial, a fresh task realization is fit with and
// without each candidate (each with its own optimal beta from the estimated
// combined covariance), and excess risks are averaged across trials.
ValidationResult validate_duc(const TaskConfig& cfg, int trials, double alpha,
                              std::uint64_t seed);

}  // namespace duc
