#include "duc/erm.hpp"

#include <cmath>

#include "duc/errors.hpp"
#include "duc/parallel.hpp"
#include "duc/rng.hpp"
#include "duc/stats.hpp"
#include "duc/summaries.hpp"

namespace duc {

namespace {

Eigen::VectorXd fit_squared(const WeightedFitSpec& spec) {
  const Eigen::Index l = spec.datasets.front()->x.cols();
  const Eigen::Index p = l + 1;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(p);
  for (std::size_t k = 0; k < spec.datasets.size(); ++k) {
    const Dataset& d = *spec.datasets[k];
    const double w = spec.beta(static_cast<Eigen::Index>(k)) /
                     static_cast<double>(d.rows());
    if (w == 0.0) continue;
    Eigen::MatrixXd xt(d.x.rows(), p);
    xt.col(0).setOnes();
    xt.rightCols(l) = d.x;
    h += w * (xt.transpose() * xt);
    g += w * (xt.transpose() * d.y);
  }
  h.diagonal().array() += spec.ridge;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
  if (ldlt.info() != Eigen::Success)
    throw NumericError("weighted_fit: rank-deficient design");
  Eigen::VectorXd theta = ldlt.solve(g);
  if (!theta.allFinite() ||
      (h * theta - g).norm() > 1e-6 * (g.norm() + 1.0))
    throw NumericError("weighted_fit: rank-deficient design");
  return theta;
}

Eigen::VectorXd fit_logistic(const WeightedFitSpec& spec) {
  const Eigen::Index l = spec.datasets.front()->x.cols();
  const Eigen::Index p = l + 1;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(p);
  const double ridge = spec.ridge > 0.0 ? spec.ridge : 1e-8;
  for (int iter = 0; iter < 100; ++iter) {
    Eigen::VectorXd grad = ridge * theta;
    Eigen::MatrixXd hess = ridge * Eigen::MatrixXd::Identity(p, p);
    for (std::size_t k = 0; k < spec.datasets.size(); ++k) {
      const Dataset& d = *spec.datasets[k];
      const double w = spec.beta(static_cast<Eigen::Index>(k)) /
                       static_cast<double>(d.rows());
      if (w == 0.0) continue;
      for (Eigen::Index i = 0; i < d.x.rows(); ++i) {
        Eigen::VectorXd xi(p);
        xi(0) = 1.0;
        xi.tail(l) = d.x.row(i);
        const double eta = xi.dot(theta);
        const double prob = 1.0 / (1.0 + std::exp(-eta));
        grad += (w * (prob - d.y(i))) * xi;
        hess += (w * prob * (1.0 - prob)) * (xi * xi.transpose());
      }
    }
    if (grad.norm() <= 1e-8) return theta;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
    if (ldlt.info() != Eigen::Success)
      throw NumericError("weighted_fit: logistic Hessian not invertible");
    theta -= ldlt.solve(grad);
    if (!theta.allFinite())
      throw NumericError("weighted_fit: logistic update diverged");
  }
  throw NumericError("weighted_fit: logistic Newton did not converge in 100 "
                     "iterations");
}

}  // namespace

Eigen::VectorXd weighted_fit(const WeightedFitSpec& spec) {
  if (spec.datasets.empty()) throw DataError("weighted_fit: no datasets");
  if (spec.beta.size() != static_cast<Eigen::Index>(spec.datasets.size()))
    throw DataError("weighted_fit: beta count mismatch");
  if (std::abs(spec.beta.sum() - 1.0) > 1e-10)
    throw ConfigError("weighted_fit: beta must sum to 1");
  const Eigen::Index l = spec.datasets.front()->x.cols();
  for (const Dataset* d : spec.datasets) {
    if (!d->has_outcome) throw DataError("weighted_fit: dataset lacks outcome");
    if (d->x.cols() != l) throw DataError("weighted_fit: dimension mismatch");
    if (d->rows() == 0) throw DataError("weighted_fit: empty dataset");
  }
  return spec.loss == Loss::SquaredError ? fit_squared(spec)
                                         : fit_logistic(spec);
}

double mse(const Eigen::VectorXd& theta, const Dataset& test) {
  if (!test.has_outcome) throw DataError("mse: test set lacks outcome");
  if (theta.size() != test.x.cols() + 1)
    throw DataError("mse: parameter dimension mismatch");
  const Eigen::VectorXd pred =
      (test.x * theta.tail(test.x.cols())).array() + theta(0);
  return (pred - test.y).squaredNorm() / static_cast<double>(test.rows());
}

RiskReport excess_risk(const Eigen::VectorXd& theta_hat, const Dataset& test,
                       const Eigen::VectorXd& theta_oracle) {
  if (test.rows() < 1000)
    throw DataError("excess_risk: test set must have at least 1000 rows");
  RiskReport r;
  r.test_mse = mse(theta_hat, test);
  r.excess_mse = r.test_mse - mse(theta_oracle, test);
  r.n_test = test.rows();
  return r;
}

ValidationResult validate_duc(const TaskConfig& cfg, int trials, double alpha,
                              std::uint64_t seed) {
  if (trials < 1) throw ConfigError("validate_duc: trials must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ConfigError("validate_duc: alpha must be in (0,1)");
  if (cfg.candidates.empty()) throw ConfigError("validate_duc: no candidates");
  if (!cfg.outcome.enabled)
    throw ConfigError("validate_duc: task has no outcome");

  const std::size_t n_cand = cfg.candidates.size();
  const std::size_t t_count = static_cast<std::size_t>(trials);
  const Eigen::Index l = static_cast<Eigen::Index>(cfg.covariates.size());

  std::vector<std::vector<double>> duc_t(t_count, std::vector<double>(n_cand));
  std::vector<std::vector<double>> with_t(t_count, std::vector<double>(n_cand));
  std::vector<double> without_t(t_count);

  Eigen::VectorXd base_means(l);
  for (Eigen::Index v = 0; v < l; ++v)
    base_means(v) = cfg.covariates[static_cast<std::size_t>(v)].mean();
  const bool target_fixed = cfg.target.law.variance == 0.0;

  auto run_trial = [&](std::size_t t) {
    TaskConfig trial_cfg = cfg;
    trial_cfg.master_seed = derive_seed(seed, 0x7A5C, t);
    const SyntheticTask task = make_synthetic_task(trial_cfg);

    std::vector<const Dataset*> pooled_parts{&task.target};
    for (const auto& d : task.sources) pooled_parts.push_back(&d);
    for (const auto& d : task.candidates) pooled_parts.push_back(&d);
    Eigen::Index total = 0;
    for (const Dataset* d : pooled_parts) total += d->x.rows();
    Eigen::MatrixXd pooled(total, l);
    Eigen::Index at = 0;
    for (const Dataset* d : pooled_parts) {
      pooled.middleRows(at, d->x.rows()) = d->x;
      at += d->x.rows();
    }
    const Whitener whitener = fit_whitener(pooled);

    // Fixed target: population moments are the base moments. Random target:
    // the realized target means are estimated from the large oracle sample.
    TargetMoments moments;
    if (target_fixed) {
      moments.means = whitener.transform_point(base_means);
      moments.known_exactly = true;
    } else {
      moments.means = summarize(task.oracle, whitener, "oracle").means;
      moments.known_exactly = false;
    }

    const SourceSummary target_summary =
        summarize(task.target, whitener, "target");
    std::vector<SourceSummary> existing;
    for (std::size_t s = 0; s < task.sources.size(); ++s)
      existing.push_back(
          summarize(task.sources[s], whitener, "s" + std::to_string(s + 2)));

    // Oracle parameter for this realization.
    WeightedFitSpec oracle_spec;
    oracle_spec.beta = Eigen::VectorXd::Ones(1);
    oracle_spec.datasets = {&task.oracle};
    const Eigen::VectorXd theta_oracle = weighted_fit(oracle_spec);

    // Baseline fit without any candidate.
    const ZMatrix z_base = build_z(moments, target_summary, existing);
    const CombinedCov sk_base = estimate_sigma_k(z_base, task.target.rows());
    const SourceWeights beta_base = optimal_beta(sk_base);
    WeightedFitSpec fit_base;
    fit_base.beta = beta_base.beta;
    fit_base.datasets = {&task.target};
    for (const auto& d : task.sources) fit_base.datasets.push_back(&d);
    const Eigen::VectorXd theta_base = weighted_fit(fit_base);
    without_t[t] = excess_risk(theta_base, task.test, theta_oracle).excess_mse;

    for (std::size_t c = 0; c < n_cand; ++c) {
      std::vector<SourceSummary> sources = existing;
      sources.push_back(summarize(task.candidates[c], whitener,
                                  "c" + std::to_string(c + 1)));
      const ZMatrix z = build_z(moments, target_summary, sources);
      duc_t[t][c] = estimate_duc(z, alpha).rho2;

      const CombinedCov sk = estimate_sigma_k(z, task.target.rows());
      const SourceWeights beta = optimal_beta(sk);
      WeightedFitSpec fit = fit_base;
      fit.beta = beta.beta;
      fit.datasets.push_back(&task.candidates[c]);
      const Eigen::VectorXd theta = weighted_fit(fit);
      with_t[t][c] = excess_risk(theta, task.test, theta_oracle).excess_mse;
    }
  };

  parallel_for(t_count, run_trial);

  double mean_without = 0.0;
  for (std::size_t t = 0; t < t_count; ++t) mean_without += without_t[t];
  mean_without /= static_cast<double>(t_count);

  ValidationResult res;
  res.trials = trials;
  res.mean_excess_without = mean_without;
  std::vector<double> ducs(n_cand), fracs(n_cand);
  for (std::size_t c = 0; c < n_cand; ++c) {
    double duc_sum = 0.0, with_sum = 0.0;
    for (std::size_t t = 0; t < t_count; ++t) {
      duc_sum += duc_t[t][c];
      with_sum += with_t[t][c];
    }
    const double duc_mean = duc_sum / static_cast<double>(t_count);
    const double with_mean = with_sum / static_cast<double>(t_count);
    ValidationRow row;
    row.candidate_id = (n_cand >= 10 && c + 1 < 10)
                           ? "c0" + std::to_string(c + 1)
                           : "c" + std::to_string(c + 1);
    row.duc = duc_mean;
    row.trials = trials;
    if (duc_mean >= 1.0 - 1e-12) {
      row.ci_low = row.ci_high = 1.0;
    } else {
      const auto ci = fisher_ci(duc_mean, static_cast<long>(l), alpha);
      row.ci_low = ci.first;
      row.ci_high = ci.second;
    }
    row.empirical_fraction =
        mean_without != 0.0 ? (mean_without - with_mean) / mean_without : 0.0;
    ducs[c] = row.duc;
    fracs[c] = row.empirical_fraction;
    res.rows.push_back(std::move(row));
  }

  res.correlation_valid = trials >= 2 && n_cand >= 2;
  if (res.correlation_valid) {
    res.pearson = stats::pearson(ducs, fracs);
    res.spearman = stats::spearman(ducs, fracs);
  }
  double mad = 0.0;
  for (std::size_t c = 0; c < n_cand; ++c) mad += std::abs(ducs[c] - fracs[c]);
  res.mean_abs_dev = mad / static_cast<double>(n_cand);
  return res;
}

}  // namespace duc
