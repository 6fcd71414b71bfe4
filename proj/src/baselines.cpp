#include "duc/baselines.hpp"

#include <cmath>

#include "duc/errors.hpp"

namespace duc {

std::string baseline_method_name(BaselineScore::Method m) {
  switch (m) {
    case BaselineScore::Method::KlGaussian: return "kl-gaussian";
    case BaselineScore::Method::DomainClassifier: return "domain-classifier";
  }
  return "unknown";
}

BaselineScore kl_gaussian(const SourceSummary& source,
                          const SourceSummary& target) {
  if (!source.cov.has_value() || !target.cov.has_value())
    throw DataError("kl_gaussian: both summaries need a covariance");
  const Eigen::Index l = source.means.size();
  if (target.means.size() != l)
    throw DataError("kl_gaussian: dimension mismatch");
  Eigen::MatrixXd cs = *source.cov;
  Eigen::MatrixXd ct = *target.cov;
  const double ridge_s = 1e-8 * cs.trace() / static_cast<double>(l);
  const double ridge_t = 1e-8 * ct.trace() / static_cast<double>(l);
  cs.diagonal().array() += ridge_s;
  ct.diagonal().array() += ridge_t;

  Eigen::LLT<Eigen::MatrixXd> llt_t(ct);
  Eigen::LLT<Eigen::MatrixXd> llt_s(cs);
  if (llt_t.info() != Eigen::Success || llt_s.info() != Eigen::Success)
    throw NumericError("kl_gaussian: singular covariance");

  const Eigen::MatrixXd lt = llt_t.matrixL();
  const Eigen::MatrixXd ls = llt_s.matrixL();
  double logdet_t = 0.0, logdet_s = 0.0;
  for (Eigen::Index i = 0; i < l; ++i) {
    logdet_t += 2.0 * std::log(lt(i, i));
    logdet_s += 2.0 * std::log(ls(i, i));
  }
  const double trace_term = llt_t.solve(cs).trace();
  const Eigen::VectorXd d = target.means - source.means;
  const double maha = d.dot(llt_t.solve(d));

  BaselineScore score;
  score.source_id = source.source_id;
  score.method = BaselineScore::Method::KlGaussian;
  score.value = 0.5 * (trace_term + maha - static_cast<double>(l) +
                       logdet_t - logdet_s);
  return score;
}

BaselineScore domain_classifier_score(const Dataset& source_rows,
                                      const Dataset& target_rows,
                                      const std::string& source_id,
                                      double lambda) {
  if (source_rows.rows() == 0 || target_rows.rows() == 0)
    throw DataError("domain_classifier_score: empty dataset");
  if (source_rows.cols() != target_rows.cols())
    throw DataError("domain_classifier_score: dimension mismatch");

  const Eigen::Index ns = source_rows.x.rows();
  const Eigen::Index nt = target_rows.x.rows();
  const Eigen::Index l = source_rows.x.cols();

  Eigen::MatrixXd pooled(ns + nt, l);
  pooled.topRows(ns) = source_rows.x;
  pooled.bottomRows(nt) = target_rows.x;
  const Whitener wh = fit_whitener(pooled);
  const Eigen::MatrixXd z = wh.transform_rows(pooled);

  // Inverse-frequency weights balance the classes.
  const double n_total = static_cast<double>(ns + nt);
  const double w_s = n_total / (2.0 * static_cast<double>(ns));
  const double w_t = n_total / (2.0 * static_cast<double>(nt));

  const Eigen::Index p = l + 1;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(p);
  bool converged = false;
  for (int iter = 0; iter < 100; ++iter) {
    Eigen::VectorXd grad = lambda * theta;
    Eigen::MatrixXd hess = lambda * Eigen::MatrixXd::Identity(p, p);
    for (Eigen::Index i = 0; i < ns + nt; ++i) {
      Eigen::VectorXd xi(p);
      xi(0) = 1.0;
      xi.tail(l) = z.row(i);
      const double label = i < ns ? 1.0 : 0.0;
      const double w = i < ns ? w_s : w_t;
      const double prob = 1.0 / (1.0 + std::exp(-xi.dot(theta)));
      grad += (w * (prob - label)) * xi;
      hess += (w * prob * (1.0 - prob)) * (xi * xi.transpose());
    }
    if (grad.norm() <= 1e-8) {
      converged = true;
      break;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
    if (ldlt.info() != Eigen::Success)
      throw NumericError("domain_classifier_score: Hessian not invertible");
    theta -= ldlt.solve(grad);
    if (!theta.allFinite())
      throw NumericError("domain_classifier_score: fit diverged");
  }

  double mean_prob = 0.0;
  for (Eigen::Index i = 0; i < ns; ++i) {
    Eigen::VectorXd xi(p);
    xi(0) = 1.0;
    xi.tail(l) = z.row(i);
    mean_prob += 1.0 / (1.0 + std::exp(-xi.dot(theta)));
  }
  mean_prob /= static_cast<double>(ns);

  BaselineScore score;
  score.source_id = source_id;
  score.method = BaselineScore::Method::DomainClassifier;
  score.value = mean_prob;
  score.converged = converged;
  return score;
}

}  // namespace duc
