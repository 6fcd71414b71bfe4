#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "duc/dataset.hpp"
#include "duc/duc_core.hpp"
#include "duc/rng.hpp"

namespace duc {

// Law of the region weights: i.i.d. positive, mean one, support bounded
// below by lower_bound > 0. Each family derives its lower bound from the
// requested variance.
struct WeightLaw {
  enum class Family { ShiftedExponential, TwoPoint, UniformAroundOne };
  Family family = Family::ShiftedExponential;
  double variance = 0.0;
  double lower_bound = 1.0;

  double sample(Rng& rng) const;
};

// shifted-exponential: W = w_f + (1 - w_f) Exp(1), w_f = 1 - sqrt(v).
WeightLaw shifted_exponential_law(double variance);
// two-point: W = 1 -+ sqrt(v) with probability 1/2 each.
WeightLaw two_point_law(double variance);
// uniform-around-one: W ~ Uniform(1 - h, 1 + h), h = sqrt(3 v).
WeightLaw uniform_around_one_law(double variance);

WeightLaw make_weight_law(const std::string& family, double variance);
std::string family_name(WeightLaw::Family f);

struct PartitionSpec {
  std::size_t m = 2;
};

Eigen::VectorXd draw_weights(const WeightLaw& law, const PartitionSpec& part,
                             std::uint64_t seed);

// Marginal distribution of one variable; rows are produced by inverse-CDF
// sampling of a uniform confined to the variable's (permuted) region bin.
struct Marginal {
  enum class Kind { Bernoulli, Normal, Uniform };
  Kind kind = Kind::Normal;
  double a = 0.0;  // Bernoulli: p; Uniform: lower
  double b = 0.0;  // Uniform: upper

  double quantile(double u) const;
  double mean() const;
};

// Outcome rule y = linear . x + sum_i x[squared_idx_i]^2 + eps.
struct OutcomeSpec {
  bool enabled = false;
  Eigen::VectorXd linear;
  std::vector<std::uint32_t> squared_idx;

  double value(const Eigen::VectorXd& x, double eps) const;
};

// The fixed map from region draws to rows, shared by every source of a task.
// Variable v reads the region through its own permutation pi_v, so each
// variable is fully loaded on the region index while the base marginals stay
// (near) independent. The permutations are part of the transform and are
// derived once from the task structure seed.
struct BaseTransform {
  std::size_t m = 2;
  std::vector<Marginal> covariates;
  Marginal noise;  // distribution of eps
  OutcomeSpec outcome;
  std::vector<std::vector<std::uint32_t>> perms;  // covariates then noise

  Eigen::Index dim() const { return static_cast<Eigen::Index>(covariates.size()); }
};

std::shared_ptr<const BaseTransform> make_base_transform(
    std::vector<Marginal> covariates, Marginal noise, OutcomeSpec outcome,
    std::size_t m, std::uint64_t structure_seed);

// One randomly perturbed source: region j is drawn with probability
// W_j / sum W, then each variable is drawn uniformly within its permuted bin.
struct PerturbedSource {
  Eigen::VectorXd weights;
  std::shared_ptr<const BaseTransform> base_transform;
  std::uint64_t seed = 0;
};

Dataset sample_perturbed(const PerturbedSource& src, std::size_t n);

// --- synthetic task ----------------------------------------------------------

// Cross-source weight correlation: W^(k) = (1 - lambda_k) V^(k) +
// lambda_k V^(shared), with V^(shared) drawn once per task realization.
struct SourceLawSpec {
  WeightLaw law;
  double shared_lambda = 0.0;
  std::size_t n = 0;
};

struct TaskConfig {
  std::vector<Marginal> covariates;
  Marginal noise;
  OutcomeSpec outcome;
  std::size_t m = 100;
  SourceLawSpec target;
  std::vector<SourceLawSpec> sources;
  std::vector<SourceLawSpec> candidates;
  WeightLaw shared_law;   // law of the shared component, if any lambda > 0
  std::size_t test_n = 20000;
  std::size_t oracle_n = 50000;
  std::uint64_t master_seed = 1;
};

// Mixed-tabular benchmark task: x1..x15 ~ randomly shifted Bern(0.5),
// x16..x30 ~ randomly shifted N(0,1), y = sum_{j<=15} x_j + x16^2 + x17^2 +
// sum_{j>=18} x_j + eps with eps ~ randomly shifted Uniform(-1,1). The target
// is fixed (zero-variance law) with 300 rows; one existing source has 400
// rows; 15 candidates span variances and sample sizes.
TaskConfig benchmark_task_config(std::uint64_t master_seed);

struct SyntheticTask {
  Dataset target;
  std::vector<Dataset> sources;
  std::vector<Dataset> candidates;
  Dataset test;    // held-out rows from the realized target distribution
  Dataset oracle;  // large independent target sample for the oracle fit
  PerturbedSource target_source;
  std::vector<PerturbedSource> source_sources;
  std::vector<PerturbedSource> candidate_sources;
};

SyntheticTask make_synthetic_task(const TaskConfig& cfg);

// Exact law-level weight covariance over [target, sources..., candidates...],
// from the declared laws and shared-component mixing. Raw Var(W) scale
// (divide by m to pair with c_k = 1/n_k).
WeightCov true_weight_cov(const TaskConfig& cfg);
WeightCov true_weight_cov(const std::vector<SourceLawSpec>& specs,
                          const WeightLaw& shared_law);

}  // namespace duc
