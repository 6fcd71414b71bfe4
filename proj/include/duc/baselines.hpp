#pragma once

#include <string>

#include "duc/dataset.hpp"
#include "duc/summaries.hpp"

namespace duc {

// Competing source-ranking scores; lower means more similar to the target.
struct BaselineScore {
  std::string source_id;
  enum class Method { KlGaussian, DomainClassifier };
  Method method = Method::KlGaussian;
  double value = 0.0;
  bool converged = true;  // domain classifier: false when the fit hit the
                          // iteration cap (e.g. perfect separation)
};

std::string baseline_method_name(BaselineScore::Method m);

// Closed-form Gaussian KL(source || target) from the summaries' means and
// covariances. Both summaries must carry a covariance.
BaselineScore kl_gaussian(const SourceSummary& source, const SourceSummary& target);

// Mean predicted source-probability over source rows of an L2-regularized
// logistic regression (source = 1, target = 0) on whitened covariates, with
// inverse-frequency class weights. Higher values mean greater dissimilarity.
BaselineScore domain_classifier_score(const Dataset& source_rows,
                                      const Dataset& target_rows,
                                      const std::string& source_id,
                                      double lambda = 1e-3);

}  // namespace duc
