#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "duc/dataset.hpp"
#include "duc/summaries.hpp"

namespace duc {

// Covariance of distributional weights across sources. Entries are
// Cov(W^(k), W^(k')) / m when per_m is true (the scaled form paired with
// c_k = 1/n_k), or the raw limit form paired with c_k = m/n_k. The data
// usefulness coefficient is invariant to which convention is used, as long
// as it is consistent.
struct WeightCov {
  Eigen::MatrixXd matrix;
  bool per_m = true;
  bool variance_floored = false;
};

// c_k ratios balancing distributional against sampling uncertainty.
struct CRatios {
  Eigen::VectorXd c;
};

// Sigma^K = A Sigma^W A^T + Diag(c), the asymptotic covariance of the
// source-vs-target mean differences (first coordinate is the target itself).
struct CombinedCov {
  Eigen::MatrixXd matrix;
  Eigen::VectorXd c;  // the c's used by the builder; empty when estimated
  bool variance_floored = false;
};

enum class DucMethod {
  EmpiricalPartialCorrelation,
  PopulationFormula,
  IndependentWeightsFormula,
};

std::string method_name(DucMethod m);

struct DucEstimate {
  double rho2 = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  long length = 0;    // L, number of covariates behind the estimate
  double alpha = 0.05;
  DucMethod method = DucMethod::EmpiricalPartialCorrelation;
  int trials = 1;
};

enum class ApproxTarget { Target, Candidate };

// Data-set weights beta summing to one.
struct SourceWeights {
  Eigen::VectorXd beta;
  ApproxTarget target_of_approx = ApproxTarget::Target;
};

// --- population-side quantities -------------------------------------------

CombinedCov assemble_sigma_k(const WeightCov& wc, const CRatios& c);

// beta* = (Sigma^K)^{-1} 1 / (1^T (Sigma^K)^{-1} 1); minimizes
// beta^T Sigma^K beta subject to beta^T 1 = 1. A ridge of 1e-10 * trace/K is
// applied before inversion.
SourceWeights optimal_beta(const CombinedCov& sk);

// Full population formula: wc and c cover sources 1..K+1, with the candidate
// last. The returned estimate carries a point confidence interval.
DucEstimate duc_population(const WeightCov& wc, const CRatios& c);

// Closed form under independent weights with W^(1) == 1 (variances[0] must
// be zero). variances and c cover sources 1..K+1, candidate last.
DucEstimate duc_independent(const Eigen::VectorXd& variances, const CRatios& c);

// --- covariate-only estimation --------------------------------------------

// Empirical partial correlation of column Z^(1) and Z^(K+1) adjusted for
// Z^(2:K); residual regressions include an intercept. K = 1 reduces to plain
// Pearson correlation.
double partial_correlation(const ZMatrix& z);

DucEstimate estimate_duc(const ZMatrix& z, double alpha);

// Fisher-z interval for rho^2: g(rho^2) = atanh(rho) with rho = +sqrt(rho^2),
// endpoints tanh(g -+ z_{1-alpha/2}/sqrt(L))^2, lower endpoint clamped at 0.
std::pair<double, double> fisher_ci(double rho2_hat, long L, double alpha);

// Empirical covariance of the Z columns across covariates. Estimates the
// differenced weight covariance plus sampling terms, in /m scale. Note the
// target sampling noise 1/n_1 is shared by every column and therefore enters
// every entry; estimate_sigma_k removes it.
WeightCov estimate_weight_cov(const ZMatrix& z);

// Sigma^K estimate from the Z columns of sources 1..K: the shared 1/n_1 term
// is subtracted off and the first row/column is pinned to the Lemma-structure
// (1/n_1, 0, ..., 0). Negative diagonal entries are floored at zero and
// flagged.
CombinedCov estimate_sigma_k(const ZMatrix& z, std::size_t n1);

// --- ranking ---------------------------------------------------------------

struct RankedCandidate {
  std::string source_id;
  DucEstimate estimate;
};

// Each candidate is scored one at a time as the (K+1)-th source against the
// same existing set. Sorted by rho2 descending, ties by source_id ascending.
std::vector<RankedCandidate> rank_candidates(
    const TargetMoments& target, const SourceSummary& target_summary,
    const std::vector<SourceSummary>& existing,
    const std::vector<SourceSummary>& candidates, double alpha);

// Subsampling protocol: per trial, resample rows at the configured sizes,
// rebuild summaries and average the estimates across trials.
struct SubsampleSpec {
  int trials = 1000;
  std::size_t target_rows = 0;   // 0 = use all target rows
  std::size_t source_rows = 0;   // 0 = use all rows of each source/candidate
  std::size_t moment_rows = 0;   // >0: estimate target moments from a
                                 // disjoint target split of this size
  std::uint64_t seed = 0;
};

struct RankInputs {
  const Dataset* target = nullptr;
  std::vector<const Dataset*> existing;
  std::vector<const Dataset*> candidates;
  std::vector<std::string> candidate_ids;
  // Raw-coordinate target moments; when absent, moments are estimated from a
  // held-out target split per trial (moment_rows must be set).
  std::optional<Eigen::VectorXd> target_moments_raw;
  bool whiten_target_only = false;
};

std::vector<RankedCandidate> rank_candidates(const RankInputs& in, double alpha,
                                             const SubsampleSpec& spec);

}  // namespace duc
