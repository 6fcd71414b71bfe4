#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "duc/dataset.hpp"

namespace duc {

// Per-source covariate summary: the only input the downstream estimators
// need. Means are in whitened coordinates when produced by summarize().
struct SourceSummary {
  std::string source_id;
  Eigen::VectorXd means;
  std::size_t n = 0;
  std::optional<Eigen::MatrixXd> cov;
};

// Target population covariate means (e.g. census values), or an estimate
// from a held-out split when the population values are unknown.
struct TargetMoments {
  Eigen::VectorXd means;
  bool known_exactly = true;
};

// Affine transform x -> factor^{-1} (x - center) fitted so the pooled data
// has mean zero and identity covariance. factor is the lower-triangular
// Cholesky factor of the (ridge-repaired) pooled covariance.
class Whitener {
public:
  Whitener(Eigen::VectorXd center, Eigen::MatrixXd factor);

  Eigen::VectorXd transform_point(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd transform_rows(const Eigen::MatrixXd& rows) const;

  const Eigen::VectorXd& center() const { return center_; }
  const Eigen::MatrixXd& factor() const { return factor_; }
  Eigen::Index dim() const { return center_.size(); }

private:
  Eigen::VectorXd center_;
  Eigen::MatrixXd factor_;  // lower triangular
};

// The L x (K+1) matrix of mean-difference vectors. Column 0 is the
// target-moment column; columns 1..K are source-vs-target differences,
// in the caller's source order. Requires K < L.
struct ZMatrix {
  Eigen::MatrixXd columns;  // L x (K+1)
  Eigen::Index length() const { return columns.rows(); }         // L
  Eigen::Index num_sources() const { return columns.cols() - 1; }  // K
};

// Fits on the pooled sample covariance with a relative ridge of
// 1e-8 * trace/L. Throws DataError naming the offending covariate when the
// covariance is rank deficient beyond the ridge repair.
Whitener fit_whitener(const Eigen::MatrixXd& pooled_rows);

SourceSummary summarize(const Dataset& ds, const Whitener& w,
                        const std::string& source_id,
                        bool with_cov = false);

// Column 0: target moments minus target sample means. Column k: source k
// sample means minus target sample means.
ZMatrix build_z(const TargetMoments& target, const SourceSummary& target_summary,
                const std::vector<SourceSummary>& sources);

}  // namespace duc
