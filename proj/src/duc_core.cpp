#include "duc/duc_core.hpp"

#include <algorithm>
#include <cmath>

#include "duc/errors.hpp"
#include "duc/parallel.hpp"
#include "duc/rng.hpp"
#include "duc/stats.hpp"

namespace duc {

namespace {

void check_square_symmetric(const Eigen::MatrixXd& m, const char* what,
                            double tol) {
  if (m.rows() != m.cols()) throw DataError(std::string(what) + ": not square");
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = i + 1; j < m.cols(); ++j)
      if (std::abs(m(i, j) - m(j, i)) > tol)
        throw DataError(std::string(what) + ": not symmetric");
}

// Solves min_b b^T Q b - 2 b^T rhs subject to 1^T b = 1.
Eigen::VectorXd constrained_quadratic(const Eigen::MatrixXd& q,
                                      const Eigen::VectorXd& rhs) {
  const Eigen::Index k = q.rows();
  Eigen::MatrixXd qq = q;
  auto solve = [&](const Eigen::MatrixXd& m) -> std::optional<Eigen::VectorXd> {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
    if (ldlt.info() != Eigen::Success) return std::nullopt;
    const Eigen::VectorXd qb = ldlt.solve(rhs);
    const Eigen::VectorXd q1 = ldlt.solve(Eigen::VectorXd::Ones(k));
    const double denom = q1.sum();
    if (!(std::abs(denom) > 0.0) || !std::isfinite(denom)) return std::nullopt;
    const double nu = (1.0 - qb.sum()) / denom;
    Eigen::VectorXd b = qb + nu * q1;
    if (!b.allFinite()) return std::nullopt;
    return b;
  };
  if (auto b = solve(qq)) return *b;
  qq.diagonal().array() += 1e-10 * qq.trace() / static_cast<double>(k);
  if (auto b = solve(qq)) return *b;
  throw NumericError("constrained quadratic solve: singular system");
}

}  // namespace

std::string method_name(DucMethod m) {
  switch (m) {
    case DucMethod::EmpiricalPartialCorrelation:
      return "empirical-partial-correlation";
    case DucMethod::PopulationFormula:
      return "population-formula";
    case DucMethod::IndependentWeightsFormula:
      return "independent-weights-formula";
  }
  return "unknown";
}

CombinedCov assemble_sigma_k(const WeightCov& wc, const CRatios& c) {
  check_square_symmetric(wc.matrix, "weight covariance", 1e-10);
  const Eigen::Index k = wc.matrix.rows();
  if (c.c.size() != k)
    throw DataError("assemble_sigma_k: c ratio count mismatch");
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index i = 1; i < k; ++i) {
    a(i, 0) = -1.0;
    a(i, i) = 1.0;
  }
  CombinedCov out;
  out.matrix = a * wc.matrix * a.transpose();
  out.matrix.diagonal() += c.c;
  out.matrix = 0.5 * (out.matrix + out.matrix.transpose().eval());
  out.c = c.c;
  return out;
}

SourceWeights optimal_beta(const CombinedCov& sk) {
  check_square_symmetric(sk.matrix, "combined covariance", 1e-8);
  const Eigen::Index k = sk.matrix.rows();
  Eigen::MatrixXd m = sk.matrix;
  m.diagonal().array() += 1e-10 * m.trace() / static_cast<double>(k);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
  if (ldlt.info() != Eigen::Success)
    throw NumericError("optimal_beta: singular combined covariance");
  const Eigen::VectorXd q1 = ldlt.solve(Eigen::VectorXd::Ones(k));
  const double denom = q1.sum();
  if (!(denom > 0.0) || !std::isfinite(denom))
    throw NumericError("optimal_beta: singular combined covariance");
  SourceWeights w;
  w.beta = q1 / denom;
  w.target_of_approx = ApproxTarget::Target;
  return w;
}

DucEstimate duc_population(const WeightCov& wc, const CRatios& c) {
  check_square_symmetric(wc.matrix, "weight covariance", 1e-10);
  const Eigen::Index kp1 = wc.matrix.rows();
  if (kp1 < 2)
    throw DataError("duc_population: need at least target and one candidate");
  if (c.c.size() != kp1) throw DataError("duc_population: c ratio count mismatch");
  if ((c.c.array() < 0.0).any() || !c.c.allFinite())
    throw DataError("duc_population: c ratios must be nonnegative and finite");
  const Eigen::Index k = kp1 - 1;

  const Eigen::MatrixXd block = wc.matrix.topLeftCorner(k, k);
  const Eigen::VectorXd c_block = c.c.head(k);
  const Eigen::VectorXd b_target = block.col(0);
  const Eigen::VectorXd b_cand = wc.matrix.col(k).head(k);
  Eigen::MatrixXd q = block;
  q.diagonal() += c_block;

  const Eigen::VectorXd beta_star = constrained_quadratic(q, b_target);
  const Eigen::VectorXd beta_prime = constrained_quadratic(q, b_cand);

  // Var(W^(1) - W^{beta*}) + ||beta*||_C^2 and the candidate analogue; the
  // c_{K+1} term only enters the candidate side.
  const double var1 = wc.matrix(0, 0) - 2.0 * beta_star.dot(b_target) +
                      beta_star.dot(q * beta_star);
  const double varc = wc.matrix(k, k) - 2.0 * beta_prime.dot(b_cand) +
                      beta_prime.dot(q * beta_prime) + c.c(k);
  const double cov = wc.matrix(0, k) - beta_prime.dot(b_target) -
                     beta_star.dot(b_cand) + beta_star.dot(q * beta_prime);

  const double den = var1 * varc;
  if (!(den > 0.0))
    throw NumericError("duc_population: degenerate residual variance");
  double rho2 = cov * cov / den;
  if (rho2 > 1.0 + 1e-9)
    throw NumericError("duc_population: rho2 above 1 beyond tolerance");
  rho2 = std::clamp(rho2, 0.0, 1.0);

  DucEstimate e;
  e.rho2 = rho2;
  e.ci_low = rho2;
  e.ci_high = rho2;
  e.length = 0;
  e.method = DucMethod::PopulationFormula;
  return e;
}

DucEstimate duc_independent(const Eigen::VectorXd& variances, const CRatios& c) {
  const Eigen::Index kp1 = variances.size();
  if (kp1 < 2)
    throw DataError("duc_independent: need at least target and one candidate");
  if (c.c.size() != kp1)
    throw DataError("duc_independent: c ratio count mismatch");
  if (variances(0) != 0.0)
    throw ConfigError("duc_independent: requires W^(1) == 1, so the target "
                      "variance entry must be 0");
  if ((variances.array() < 0.0).any())
    throw ConfigError("duc_independent: negative variance");
  double denom = 0.0;
  for (Eigen::Index i = 0; i < kp1; ++i) {
    const double v = variances(i) + c.c(i);
    if (!(v > 0.0))
      throw NumericError("duc_independent: Var(W) + c is zero for source " +
                         std::to_string(i + 1));
    denom += 1.0 / v;
  }
  DucEstimate e;
  e.rho2 = (1.0 / (variances(kp1 - 1) + c.c(kp1 - 1))) / denom;
  e.ci_low = e.rho2;
  e.ci_high = e.rho2;
  e.length = 0;
  e.method = DucMethod::IndependentWeightsFormula;
  return e;
}

double partial_correlation(const ZMatrix& z) {
  const Eigen::Index l = z.length();
  const Eigen::Index cols = z.columns.cols();
  if (cols < 2) throw DataError("partial_correlation: need at least 2 columns");
  const Eigen::Index k = cols - 1;
  if (l <= k)
    throw DataError("partial_correlation: requires K < L; got K=" +
                    std::to_string(k) + ", L=" + std::to_string(l));

  const Eigen::Index ncond = cols - 2;
  Eigen::VectorXd r1, rc;
  if (ncond == 0) {
    r1 = z.columns.col(0).array() - z.columns.col(0).mean();
    rc = z.columns.col(1).array() - z.columns.col(1).mean();
  } else {
    Eigen::MatrixXd d(l, ncond + 1);
    d.col(0).setOnes();
    d.rightCols(ncond) = z.columns.middleCols(1, ncond);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(d);
    qr.setThreshold(1e-10);
    if (qr.rank() < d.cols())
      throw NumericError("partial_correlation: conditioning columns are "
                         "collinear");
    r1 = z.columns.col(0) - d * qr.solve(z.columns.col(0));
    rc = z.columns.col(cols - 1) - d * qr.solve(z.columns.col(cols - 1));
  }
  const double v1 = r1.squaredNorm() / static_cast<double>(l);
  const double vc = rc.squaredNorm() / static_cast<double>(l);
  if (v1 < 1e-12 || vc < 1e-12)
    throw NumericError("partial_correlation: degenerate residual variance");
  const double rho = r1.dot(rc) / std::sqrt(r1.squaredNorm() * rc.squaredNorm());
  return std::clamp(rho, -1.0, 1.0);
}

std::pair<double, double> fisher_ci(double rho2_hat, long L, double alpha) {
  if (L < 3) throw ConfigError("fisher_ci: L must be >= 3");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ConfigError("fisher_ci: alpha must be in (0,1)");
  if (rho2_hat < 0.0 || rho2_hat > 1.0)
    throw ConfigError("fisher_ci: rho2 outside [0,1]");
  if (rho2_hat == 1.0)
    throw NumericError("fisher_ci: rho2 at the boundary 1, transform infinite");
  const double rho = std::sqrt(rho2_hat);
  const double g = std::atanh(rho);
  const double delta =
      stats::normal_quantile(1.0 - alpha / 2.0) / std::sqrt(static_cast<double>(L));
  const double lo = std::max(0.0, std::tanh(g - delta));
  const double hi = std::min(1.0, std::tanh(g + delta));
  return {lo * lo, hi * hi};
}

DucEstimate estimate_duc(const ZMatrix& z, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ConfigError("estimate_duc: alpha must be in (0,1)");
  const double rho = partial_correlation(z);
  double rho2 = rho * rho;
  DucEstimate e;
  e.length = static_cast<long>(z.length());
  e.alpha = alpha;
  e.method = DucMethod::EmpiricalPartialCorrelation;
  if (rho2 >= 1.0 - 1e-12) {
    // Perfectly aligned columns: the Fisher transform is infinite, the
    // interval degenerates at 1.
    e.rho2 = 1.0;
    e.ci_low = 1.0;
    e.ci_high = 1.0;
    return e;
  }
  e.rho2 = rho2;
  const auto ci = fisher_ci(rho2, e.length, alpha);
  e.ci_low = ci.first;
  e.ci_high = ci.second;
  return e;
}

WeightCov estimate_weight_cov(const ZMatrix& z) {
  const Eigen::Index l = z.length();
  if (l < 2) throw DataError("estimate_weight_cov: need L >= 2");
  Eigen::MatrixXd centered =
      z.columns.rowwise() - z.columns.colwise().mean();
  WeightCov wc;
  wc.matrix = (centered.transpose() * centered) / static_cast<double>(l - 1);
  wc.matrix = 0.5 * (wc.matrix + wc.matrix.transpose().eval());
  wc.per_m = true;
  return wc;
}

CombinedCov estimate_sigma_k(const ZMatrix& z, std::size_t n1) {
  if (n1 == 0) throw DataError("estimate_sigma_k: n1 must be positive");
  const WeightCov raw = estimate_weight_cov(z);
  const Eigen::Index k = raw.matrix.rows();
  const double c1 = 1.0 / static_cast<double>(n1);
  CombinedCov out;
  out.matrix = (raw.matrix.array() - c1).matrix();
  out.matrix.row(0).setZero();
  out.matrix.col(0).setZero();
  out.matrix(0, 0) = c1;
  out.c = Eigen::VectorXd::Constant(1, c1);
  for (Eigen::Index i = 1; i < k; ++i) {
    if (out.matrix(i, i) < 0.0) {
      out.matrix(i, i) = 0.0;
      out.variance_floored = true;
    }
  }
  return out;
}

std::vector<RankedCandidate> rank_candidates(
    const TargetMoments& target, const SourceSummary& target_summary,
    const std::vector<SourceSummary>& existing,
    const std::vector<SourceSummary>& candidates, double alpha) {
  if (candidates.empty()) throw DataError("rank_candidates: no candidates");
  std::vector<RankedCandidate> out;
  out.reserve(candidates.size());
  for (const auto& cand : candidates) {
    std::vector<SourceSummary> sources = existing;
    sources.push_back(cand);
    const ZMatrix z = build_z(target, target_summary, sources);
    out.push_back({cand.source_id, estimate_duc(z, alpha)});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RankedCandidate& a, const RankedCandidate& b) {
                     if (a.estimate.rho2 != b.estimate.rho2)
                       return a.estimate.rho2 > b.estimate.rho2;
                     return a.source_id < b.source_id;
                   });
  return out;
}

std::vector<RankedCandidate> rank_candidates(const RankInputs& in, double alpha,
                                             const SubsampleSpec& spec) {
  if (in.target == nullptr) throw DataError("rank_candidates: missing target");
  if (in.candidates.empty()) throw DataError("rank_candidates: no candidates");
  if (in.candidate_ids.size() != in.candidates.size())
    throw DataError("rank_candidates: candidate id count mismatch");
  if (!in.target_moments_raw.has_value() && spec.moment_rows == 0)
    throw ConfigError("rank_candidates: target moments unknown and no "
                      "moment-estimation split configured");
  if (!in.target_moments_raw.has_value() &&
      spec.moment_rows + 2 > in.target->rows())
    throw ConfigError("rank_candidates: moment split larger than target");
  if (spec.trials < 1) throw ConfigError("rank_candidates: trials must be >= 1");

  const Eigen::Index l = in.target->x.cols();
  for (const Dataset* d : in.existing)
    if (d->x.cols() != l) throw DataError("rank_candidates: covariate count mismatch");
  for (const Dataset* d : in.candidates)
    if (d->x.cols() != l) throw DataError("rank_candidates: covariate count mismatch");

  // Whitener fit once on pooled data (or target only), shared across trials.
  Whitener whitener = [&]() {
    if (in.whiten_target_only) return fit_whitener(in.target->x);
    Eigen::Index total = in.target->x.rows();
    for (const Dataset* d : in.existing) total += d->x.rows();
    for (const Dataset* d : in.candidates) total += d->x.rows();
    Eigen::MatrixXd pooled(total, l);
    Eigen::Index at = 0;
    pooled.middleRows(at, in.target->x.rows()) = in.target->x;
    at += in.target->x.rows();
    for (const Dataset* d : in.existing) {
      pooled.middleRows(at, d->x.rows()) = d->x;
      at += d->x.rows();
    }
    for (const Dataset* d : in.candidates) {
      pooled.middleRows(at, d->x.rows()) = d->x;
      at += d->x.rows();
    }
    return fit_whitener(pooled);
  }();

  std::optional<TargetMoments> known_moments;
  if (in.target_moments_raw.has_value()) {
    known_moments = TargetMoments{
        whitener.transform_point(*in.target_moments_raw), true};
  }

  const std::size_t trials = static_cast<std::size_t>(spec.trials);
  const std::size_t n_cand = in.candidates.size();
  std::vector<double> rho2_sum(n_cand, 0.0);
  std::vector<std::vector<double>> rho2_by_trial(trials,
                                                 std::vector<double>(n_cand));

  auto run_trial = [&](std::size_t t) {
    Rng rng(derive_seed(spec.seed, 0xA11C, t));

    Dataset target_part;
    TargetMoments moments;
    if (known_moments.has_value()) {
      moments = *known_moments;
      if (spec.target_rows > 0 && spec.target_rows < in.target->rows()) {
        target_part = subset_rows(
            *in.target,
            rng.sample_without_replacement(in.target->rows(), spec.target_rows));
      } else {
        target_part = *in.target;
      }
    } else {
      const auto perm = rng.permutation(in.target->rows());
      std::vector<std::uint32_t> mom_idx(perm.begin(),
                                         perm.begin() + spec.moment_rows);
      std::size_t rest = in.target->rows() - spec.moment_rows;
      if (spec.target_rows > 0 && spec.target_rows < rest)
        rest = spec.target_rows;
      std::vector<std::uint32_t> tgt_idx(
          perm.begin() + spec.moment_rows,
          perm.begin() + spec.moment_rows + rest);
      const Dataset mom_part = subset_rows(*in.target, mom_idx);
      moments.means = summarize(mom_part, whitener, "target-moments").means;
      moments.known_exactly = false;
      target_part = subset_rows(*in.target, tgt_idx);
    }
    const SourceSummary target_summary =
        summarize(target_part, whitener, "target");

    auto subsample = [&](const Dataset& d) {
      if (spec.source_rows > 0 && spec.source_rows < d.rows())
        return subset_rows(
            d, rng.sample_without_replacement(d.rows(), spec.source_rows));
      return d;
    };

    std::vector<SourceSummary> existing;
    existing.reserve(in.existing.size());
    for (std::size_t s = 0; s < in.existing.size(); ++s)
      existing.push_back(summarize(subsample(*in.existing[s]), whitener,
                                   "s" + std::to_string(s + 2)));

    for (std::size_t ci = 0; ci < n_cand; ++ci) {
      std::vector<SourceSummary> sources = existing;
      sources.push_back(
          summarize(subsample(*in.candidates[ci]), whitener, in.candidate_ids[ci]));
      const ZMatrix z = build_z(moments, target_summary, sources);
      rho2_by_trial[t][ci] = estimate_duc(z, alpha).rho2;
    }
  };

  parallel_for(trials, run_trial);
  for (std::size_t t = 0; t < trials; ++t)
    for (std::size_t ci = 0; ci < n_cand; ++ci) rho2_sum[ci] += rho2_by_trial[t][ci];

  const long length = static_cast<long>(l);
  std::vector<RankedCandidate> out;
  out.reserve(n_cand);
  for (std::size_t ci = 0; ci < n_cand; ++ci) {
    DucEstimate e;
    e.rho2 = rho2_sum[ci] / static_cast<double>(trials);
    e.length = length;
    e.alpha = alpha;
    e.method = DucMethod::EmpiricalPartialCorrelation;
    e.trials = spec.trials;
    if (e.rho2 >= 1.0 - 1e-12) {
      e.ci_low = e.ci_high = 1.0;
    } else {
      const auto ci_pair = fisher_ci(e.rho2, length, alpha);
      e.ci_low = ci_pair.first;
      e.ci_high = ci_pair.second;
    }
    out.push_back({in.candidate_ids[ci], e});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RankedCandidate& a, const RankedCandidate& b) {
                     if (a.estimate.rho2 != b.estimate.rho2)
                       return a.estimate.rho2 > b.estimate.rho2;
                     return a.source_id < b.source_id;
                   });
  return out;
}

}  // namespace duc
