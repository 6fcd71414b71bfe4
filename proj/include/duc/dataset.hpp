#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <string>
#include <vector>

namespace duc {

// Tabular dataset: covariate columns x1..xL plus an optional outcome column y.
// Rows with missing covariates are dropped at load time; the count is kept
// for reporting.
struct Dataset {
  Eigen::MatrixXd x;          // n x L
  Eigen::VectorXd y;          // empty when outcome absent
  bool has_outcome = false;
  std::size_t dropped_rows = 0;

  std::size_t rows() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(x.cols()); }
};

// CSV with a required header row. Column named "y" (if present) is the
// outcome; all other columns are covariates in file order.
Dataset read_csv(const std::string& path);
Dataset parse_csv(const std::string& text, const std::string& where);

// Deterministic writer: shortest round-trip formatting for doubles.
std::string to_csv(const Dataset& ds);
void write_csv(const Dataset& ds, const std::string& path);

Dataset subset_rows(const Dataset& ds, const std::vector<std::uint32_t>& idx);
Dataset vstack(const std::vector<const Dataset*>& parts);

}  // namespace duc
