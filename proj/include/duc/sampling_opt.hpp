#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "duc/duc_core.hpp"

namespace duc {

// Per-observation prices and total budget for the two-source case.
struct BudgetSpec {
  double kappa1 = 1.0;
  double kappa2 = 1.0;
  double budget = 1.0;
};

struct SamplingPlan {
  enum class Constraint { Size, Budget };
  Constraint constraint = Constraint::Size;
  Eigen::VectorXd n_continuous;
  std::vector<long> n_integer;
  SourceWeights beta;
  double objective_value = 0.0;
  bool mixed_sign = false;        // size plan: optimal beta had mixed signs
  bool feasibility_warning = false;  // budget plan: no integer observation fits
};

// Size-constrained allocation: beta minimizes
//   beta^T (A Sigma^W A^T) beta + (sum_k |beta_k|)^2 / N  s.t.  beta^T 1 = 1,
// and n_k = |beta_k| N / sum |beta|. Sample sizes are treated as continuous;
// the integer plan floors and assigns the remainder greedily by marginal
// objective gain. wc covers sources 1..K in the same /m scaling as the
// c_k = 1/n_k convention used everywhere else.
SamplingPlan size_constrained_plan(const WeightCov& wc, double total_n);

// Budget-constrained allocation across target (price kappa1) and one source
// (price kappa2): maximizes the effective sample size
//   n1 + 1 / (v + 1/n2)   on   kappa1 n1 + kappa2 n2 = C,
// where v aggregates the weight variances (Sigma^W_22 + Sigma^W_11 -
// 2 Sigma^W_12, scaled). The objective is concave along the budget line, so
// the interior stationary point (v n2 + 1)^2 = kappa1/kappa2 is clamped to
// the feasible segment. Indifference is broken toward the target.
SamplingPlan budget_plan(double v, const BudgetSpec& spec);

double budget_objective(double v, const BudgetSpec& spec, double n2);

enum class BuyDecision { BuyTarget, BuySource };

struct IncrementalDecision {
  BuyDecision decision = BuyDecision::BuyTarget;
  double quantity = 0.0;  // (kappa2/kappa1) (sigma22 n2 + 1)^2
  double margin = 0.0;    // 1 - quantity
};

// Next-data-point rule: buy from the source iff
// (kappa2/kappa1) (sigma22 n2 + 1)^2 < 1; ties go to the target.
IncrementalDecision incremental_value(double kappa1, double kappa2,
                                      double sigma22, double n2);

}  // namespace duc
