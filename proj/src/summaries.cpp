#include "duc/summaries.hpp"

#include <cmath>

#include "duc/errors.hpp"

namespace duc {

namespace {

// Cholesky with pivot inspection so rank deficiency can be reported by
// covariate index. Requires pivot^2 > rel_tol * diagonal entry.
Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& a, double rel_tol,
                               std::vector<Eigen::Index>* bad) {
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > rel_tol * std::abs(a(j, j)))) {
      if (bad) bad->push_back(j);
      d = std::max(d, 0.0);
    }
    const double pivot = std::sqrt(d);
    l(j, j) = pivot;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = pivot > 0.0 ? s / pivot : 0.0;
    }
  }
  return l;
}

}  // namespace

Whitener::Whitener(Eigen::VectorXd center, Eigen::MatrixXd factor)
    : center_(std::move(center)), factor_(std::move(factor)) {
  for (Eigen::Index i = 0; i < factor_.rows(); ++i) {
    if (!(factor_(i, i) > 0.0))
      throw NumericError("whitener factor not invertible at covariate x" +
                         std::to_string(i + 1));
  }
}

Eigen::VectorXd Whitener::transform_point(const Eigen::VectorXd& x) const {
  if (x.size() != center_.size())
    throw DataError("whitener: dimension mismatch");
  return factor_.triangularView<Eigen::Lower>().solve(x - center_);
}

Eigen::MatrixXd Whitener::transform_rows(const Eigen::MatrixXd& rows) const {
  if (rows.cols() != center_.size())
    throw DataError("whitener: dimension mismatch");
  Eigen::MatrixXd centered = rows.rowwise() - center_.transpose();
  return factor_.triangularView<Eigen::Lower>()
      .solve(centered.transpose())
      .transpose();
}

Whitener fit_whitener(const Eigen::MatrixXd& pooled_rows) {
  const Eigen::Index n = pooled_rows.rows();
  const Eigen::Index l = pooled_rows.cols();
  if (l < 1) throw DataError("fit_whitener: no covariates");
  if (n < l + 1)
    throw DataError("fit_whitener: need at least L+1 rows, got " +
                    std::to_string(n));

  const Eigen::VectorXd center = pooled_rows.colwise().mean();
  Eigen::MatrixXd centered = pooled_rows.rowwise() - center.transpose();
  Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(n - 1);

  const double ridge = 1e-8 * cov.trace() / static_cast<double>(l);
  cov.diagonal().array() += ridge;

  std::vector<Eigen::Index> bad;
  Eigen::MatrixXd factor = cholesky_lower(cov, 1e-6, &bad);
  if (!bad.empty()) {
    std::string names;
    for (std::size_t i = 0; i < bad.size(); ++i) {
      if (i) names += ", ";
      names += "x" + std::to_string(bad[i] + 1);
    }
    throw DataError("degenerate pooled covariance (collinear or constant): " +
                    names);
  }
  return Whitener(center, std::move(factor));
}

SourceSummary summarize(const Dataset& ds, const Whitener& w,
                        const std::string& source_id, bool with_cov) {
  if (ds.rows() == 0) throw DataError("summarize: empty dataset " + source_id);
  if (static_cast<Eigen::Index>(ds.cols()) != w.dim())
    throw DataError("summarize: covariate count mismatch for " + source_id);
  const Eigen::MatrixXd wh = w.transform_rows(ds.x);
  SourceSummary s;
  s.source_id = source_id;
  s.means = wh.colwise().mean();
  s.n = ds.rows();
  if (with_cov) {
    if (ds.rows() < 2) throw DataError("summarize: covariance needs >= 2 rows");
    Eigen::MatrixXd centered = wh.rowwise() - s.means.transpose();
    s.cov = (centered.transpose() * centered) /
            static_cast<double>(ds.rows() - 1);
  }
  return s;
}

ZMatrix build_z(const TargetMoments& target, const SourceSummary& target_summary,
                const std::vector<SourceSummary>& sources) {
  const Eigen::Index l = target_summary.means.size();
  if (target.means.size() != l)
    throw DataError("build_z: target moment dimension mismatch");
  const Eigen::Index k = static_cast<Eigen::Index>(sources.size()) + 1;
  if (l <= k - 1)
    throw DataError("build_z: requires more covariates than sources (K < L); "
                    "got K=" + std::to_string(k - 1) +
                    ", L=" + std::to_string(l));
  ZMatrix z;
  z.columns.resize(l, k);
  z.columns.col(0) = target.means - target_summary.means;
  for (std::size_t s = 0; s < sources.size(); ++s) {
    if (sources[s].means.size() != l)
      throw DataError("build_z: source " + sources[s].source_id +
                      " dimension mismatch");
    z.columns.col(static_cast<Eigen::Index>(s) + 1) =
        sources[s].means - target_summary.means;
  }
  return z;
}

}  // namespace duc
