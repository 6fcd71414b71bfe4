#include "duc/sampling_opt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "duc/errors.hpp"
#include "duc/rng.hpp"

namespace duc {

namespace {

Eigen::MatrixXd difference_quadratic(const Eigen::MatrixXd& sigma_w) {
  const Eigen::Index k = sigma_w.rows();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index i = 1; i < k; ++i) {
    a(i, 0) = -1.0;
    a(i, i) = 1.0;
  }
  Eigen::MatrixXd g = a * sigma_w * a.transpose();
  return 0.5 * (g + g.transpose().eval());
}

double size_objective(const Eigen::MatrixXd& g, double n, const Eigen::VectorXd& b) {
  const double l1 = b.cwiseAbs().sum();
  return b.dot(g * b) + l1 * l1 / n;
}

void project_to_constraint(Eigen::VectorXd& b) {
  b.array() -= (b.sum() - 1.0) / static_cast<double>(b.size());
}

// Equality-constrained minimization of b^T (G + s s^T / N) b over the free
// coordinates with the rest pinned at zero; returns the full vector and the
// constraint multiplier.
bool solve_pattern(const Eigen::MatrixXd& g, double n,
                   const std::vector<int>& sign, Eigen::VectorXd* beta,
                   double* lambda) {
  const Eigen::Index k = g.rows();
  std::vector<Eigen::Index> free_idx;
  for (Eigen::Index i = 0; i < k; ++i)
    if (sign[static_cast<std::size_t>(i)] != 0) free_idx.push_back(i);
  const Eigen::Index f = static_cast<Eigen::Index>(free_idx.size());
  if (f == 0) return false;
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(f + 1, f + 1);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(f + 1);
  for (Eigen::Index a = 0; a < f; ++a) {
    const double sa = sign[static_cast<std::size_t>(free_idx[a])];
    for (Eigen::Index b = 0; b < f; ++b) {
      const double sb = sign[static_cast<std::size_t>(free_idx[b])];
      kkt(a, b) = 2.0 * (g(free_idx[a], free_idx[b]) + sa * sb / n);
    }
    kkt(a, f) = -1.0;
    kkt(f, a) = 1.0;
  }
  rhs(f) = 1.0;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
  if (!lu.isInvertible()) return false;
  const Eigen::VectorXd sol = lu.solve(rhs);
  if (!sol.allFinite()) return false;
  beta->setZero(k);
  for (Eigen::Index a = 0; a < f; ++a) (*beta)(free_idx[a]) = sol(a);
  *lambda = sol(f);
  return true;
}

}  // namespace

SamplingPlan size_constrained_plan(const WeightCov& wc, double total_n) {
  if (!(total_n > 0.0)) throw ConfigError("size plan: N must be positive");
  if (wc.matrix.rows() != wc.matrix.cols())
    throw DataError("size plan: weight covariance not square");
  const Eigen::Index k = wc.matrix.rows();
  const Eigen::MatrixXd g = difference_quadratic(wc.matrix);
  {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
    if (es.eigenvalues().minCoeff() < -1e-8 * std::max(1.0, g.norm()))
      throw NumericError("size plan: weight covariance is not PSD");
  }

  double best_obj = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_beta;

  auto consider = [&](const Eigen::VectorXd& b) {
    if (!b.allFinite()) return;
    Eigen::VectorXd p = b;
    project_to_constraint(p);
    const double val = size_objective(g, total_n, p);
    if (val < best_obj) {
      best_obj = val;
      best_beta = p;
    }
  };

  // Multi-start projected subgradient descent, then an active-set polish on
  // the detected sign pattern.
  std::vector<Eigen::VectorXd> starts;
  starts.push_back(Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k)));
  starts.push_back(Eigen::VectorXd::Unit(k, 0));
  {
    Eigen::VectorXd inv(k);
    for (Eigen::Index i = 0; i < k; ++i)
      inv(i) = 1.0 / (g(i, i) + 1.0 / total_n + 1e-12);
    starts.push_back(inv / inv.sum());
  }
  Rng rng(0xC0FFEEULL);
  for (int r = 0; r < 2; ++r) {
    Eigen::VectorXd b(k);
    for (Eigen::Index i = 0; i < k; ++i) b(i) = rng.uniform(-1.0, 2.0);
    starts.push_back(b);
  }

  const double scale = std::max(1.0, g.norm() + 1.0 / total_n);
  for (Eigen::VectorXd b : starts) {
    project_to_constraint(b);
    double t0 = 0.5 / scale;
    Eigen::VectorXd local_best = b;
    double local_best_obj = size_objective(g, total_n, b);
    for (int iter = 0; iter < 3000; ++iter) {
      Eigen::VectorXd sgn(k);
      for (Eigen::Index i = 0; i < k; ++i)
        sgn(i) = b(i) > 0.0 ? 1.0 : (b(i) < 0.0 ? -1.0 : 0.0);
      Eigen::VectorXd grad =
          2.0 * (g * b) + (2.0 * b.cwiseAbs().sum() / total_n) * sgn;
      grad.array() -= grad.mean();
      const double step = t0 / std::sqrt(static_cast<double>(iter) + 1.0);
      b -= step * grad;
      project_to_constraint(b);
      const double val = size_objective(g, total_n, b);
      if (val < local_best_obj) {
        local_best_obj = val;
        local_best = b;
      }
    }
    consider(local_best);

    // Active-set refinement from the subgradient solution.
    Eigen::VectorXd cur = local_best;
    std::set<std::vector<int>> seen;
    for (int round = 0; round < 64; ++round) {
      std::vector<int> sign(static_cast<std::size_t>(k), 0);
      const double tol = 1e-9 * std::max(1.0, cur.cwiseAbs().maxCoeff());
      for (Eigen::Index i = 0; i < k; ++i) {
        if (cur(i) > tol) sign[static_cast<std::size_t>(i)] = 1;
        else if (cur(i) < -tol) sign[static_cast<std::size_t>(i)] = -1;
      }
      if (std::all_of(sign.begin(), sign.end(), [](int s) { return s == 0; }))
        sign[0] = 1;
      if (!seen.insert(sign).second) break;

      Eigen::VectorXd beta;
      double lambda = 0.0;
      if (!solve_pattern(g, total_n, sign, &beta, &lambda)) break;
      consider(beta);

      // Re-derive the pattern; if a free coordinate flipped sign, iterate.
      bool consistent = true;
      for (Eigen::Index i = 0; i < k; ++i) {
        const int s = sign[static_cast<std::size_t>(i)];
        if (s != 0 && beta(i) * s < -1e-12) consistent = false;
      }
      // Pinned coordinates must satisfy the subgradient interval condition.
      const double slack = 2.0 * beta.cwiseAbs().sum() / total_n;
      const Eigen::VectorXd gb = 2.0 * (g * beta);
      Eigen::Index worst = -1;
      double worst_violation = 1e-9 * scale;
      for (Eigen::Index i = 0; i < k; ++i) {
        if (sign[static_cast<std::size_t>(i)] != 0) continue;
        const double viol = std::abs(gb(i) - lambda) - slack;
        if (viol > worst_violation) {
          worst_violation = viol;
          worst = i;
        }
      }
      if (consistent && worst < 0) break;
      cur = beta;
      if (worst >= 0 && std::abs(cur(worst)) <= 1e-12)
        cur(worst) = (gb(worst) - lambda < 0.0) ? 1e-6 : -1e-6;
    }
  }

  SamplingPlan plan;
  plan.constraint = SamplingPlan::Constraint::Size;
  plan.beta.beta = best_beta;
  plan.beta.target_of_approx = ApproxTarget::Target;
  plan.objective_value = best_obj;
  plan.mixed_sign = (best_beta.array() < -1e-12).any() &&
                    (best_beta.array() > 1e-12).any();

  const double l1 = best_beta.cwiseAbs().sum();
  plan.n_continuous = best_beta.cwiseAbs() * (total_n / l1);

  // Integer plan: floor, then hand out remaining units by marginal gain in
  // sum beta_k^2 / n_k.
  const long units = static_cast<long>(std::floor(total_n + 1e-9));
  std::vector<long> ni(static_cast<std::size_t>(k), 0);
  long used = 0;
  for (Eigen::Index i = 0; i < k; ++i) {
    ni[static_cast<std::size_t>(i)] = static_cast<long>(std::floor(plan.n_continuous(i) + 1e-12));
    used += ni[static_cast<std::size_t>(i)];
  }
  for (long r = used; r < units; ++r) {
    double best_gain = -1.0;
    Eigen::Index best_i = 0;
    for (Eigen::Index i = 0; i < k; ++i) {
      const double bk2 = best_beta(i) * best_beta(i);
      if (bk2 == 0.0) continue;
      const long cur_n = ni[static_cast<std::size_t>(i)];
      const double gain =
          cur_n == 0 ? std::numeric_limits<double>::infinity()
                     : bk2 * (1.0 / static_cast<double>(cur_n) -
                              1.0 / static_cast<double>(cur_n + 1));
      if (gain > best_gain) {
        best_gain = gain;
        best_i = i;
      }
    }
    ++ni[static_cast<std::size_t>(best_i)];
  }
  plan.n_integer = std::move(ni);
  return plan;
}

double budget_objective(double v, const BudgetSpec& spec, double n2) {
  const double n1 = (spec.budget - spec.kappa2 * n2) / spec.kappa1;
  const double eff = n2 > 0.0 ? 1.0 / (v + 1.0 / n2) : 0.0;
  return n1 + eff;
}

SamplingPlan budget_plan(double v, const BudgetSpec& spec) {
  if (!(v >= 0.0)) throw ConfigError("budget plan: v must be nonnegative");
  if (!(spec.kappa1 > 0.0 && spec.kappa2 > 0.0))
    throw ConfigError("budget plan: prices must be positive");
  if (!(spec.budget > 0.0)) throw ConfigError("budget plan: budget must be positive");

  const double n2_max = spec.budget / spec.kappa2;
  double n2;
  if (v == 0.0) {
    // Objective is linear along the budget line; ties go to the target.
    n2 = spec.kappa2 < spec.kappa1 ? n2_max : 0.0;
  } else {
    const double ratio = spec.kappa1 / spec.kappa2;
    n2 = ratio > 1.0 ? (std::sqrt(ratio) - 1.0) / v : 0.0;
    n2 = std::clamp(n2, 0.0, n2_max);
  }
  const double n1 = (spec.budget - spec.kappa2 * n2) / spec.kappa1;

  SamplingPlan plan;
  plan.constraint = SamplingPlan::Constraint::Budget;
  plan.n_continuous = Eigen::Vector2d(n1, n2);
  plan.objective_value = budget_objective(v, spec, n2);

  const double eff2 = n2 > 0.0 ? 1.0 / (v + 1.0 / n2) : 0.0;
  const double eff_total = n1 + eff2;
  plan.beta.beta = eff_total > 0.0
                       ? Eigen::Vector2d(n1 / eff_total, eff2 / eff_total)
                       : Eigen::Vector2d(1.0, 0.0);
  plan.beta.target_of_approx = ApproxTarget::Target;

  // Integer plan: floors, then spend the leftover greedily by gain per unit
  // cost; ties prefer the target.
  long i1 = static_cast<long>(std::floor(n1 + 1e-9));
  long i2 = static_cast<long>(std::floor(n2 + 1e-9));
  double spent = spec.kappa1 * static_cast<double>(i1) +
                 spec.kappa2 * static_cast<double>(i2);
  while (true) {
    const bool can1 = spent + spec.kappa1 <= spec.budget + 1e-9;
    const bool can2 = spent + spec.kappa2 <= spec.budget + 1e-9;
    if (!can1 && !can2) break;
    const double gain1 = 1.0 / spec.kappa1;
    const double eff_now =
        i2 > 0 ? 1.0 / (v + 1.0 / static_cast<double>(i2)) : 0.0;
    const double eff_next = 1.0 / (v + 1.0 / static_cast<double>(i2 + 1));
    const double gain2 = (eff_next - eff_now) / spec.kappa2;
    if (can1 && (!can2 || gain1 >= gain2)) {
      ++i1;
      spent += spec.kappa1;
    } else {
      ++i2;
      spent += spec.kappa2;
    }
  }
  plan.n_integer = {i1, i2};
  plan.feasibility_warning = (i1 == 0 && i2 == 0);
  return plan;
}

IncrementalDecision incremental_value(double kappa1, double kappa2,
                                      double sigma22, double n2) {
  if (!(kappa1 > 0.0 && kappa2 > 0.0))
    throw ConfigError("incremental value: prices must be positive");
  if (!(sigma22 >= 0.0) || !(n2 >= 0.0))
    throw ConfigError("incremental value: sigma22 and n2 must be nonnegative");
  IncrementalDecision d;
  const double t = sigma22 * n2 + 1.0;
  d.quantity = (kappa2 / kappa1) * t * t;
  d.margin = 1.0 - d.quantity;
  d.decision = d.quantity < 1.0 ? BuyDecision::BuySource : BuyDecision::BuyTarget;
  return d;
}

}  // namespace duc
