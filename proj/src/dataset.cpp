#include "duc/dataset.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "duc/errors.hpp"

namespace duc {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

bool parse_double(const std::string& s, double* out) {
  if (s.empty()) return false;
  const char* b = s.data();
  const char* e = b + s.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  while (e > b && (*(e - 1) == ' ' || *(e - 1) == '\t')) --e;
  if (b == e) return false;
  std::string t(b, e);
  if (t == "NA" || t == "na" || t == "NaN" || t == "nan") {
    *out = std::nan("");
    return true;
  }
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size()) return false;
  *out = v;
  return true;
}

void format_double(std::string& buf, double v) {
  char tmp[32];
  const auto res = std::to_chars(tmp, tmp + sizeof(tmp), v);
  buf.append(tmp, res.ptr);
}

}  // namespace

Dataset parse_csv(const std::string& text, const std::string& where) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError(where + ": empty file");
  const auto header = split_line(line);
  if (header.empty()) throw DataError(where + ": missing header row");

  int y_col = -1;
  std::vector<int> x_cols;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == "y") {
      if (y_col >= 0) throw DataError(where + ": duplicate outcome column 'y'");
      y_col = static_cast<int>(j);
    } else {
      x_cols.push_back(static_cast<int>(j));
    }
  }
  if (x_cols.empty()) throw DataError(where + ": no covariate columns");

  std::vector<std::vector<double>> rows;
  std::vector<double> ys;
  std::size_t dropped = 0;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split_line(line);
    if (fields.size() != header.size()) {
      throw DataError(where + ":" + std::to_string(lineno) +
                      ": expected " + std::to_string(header.size()) +
                      " fields, got " + std::to_string(fields.size()));
    }
    std::vector<double> row(x_cols.size());
    bool missing = false;
    for (std::size_t j = 0; j < x_cols.size(); ++j) {
      double v;
      if (!parse_double(fields[static_cast<std::size_t>(x_cols[j])], &v)) {
        throw DataError(where + ":" + std::to_string(lineno) + ": column " +
                        std::to_string(x_cols[j] + 1) + ": not a number: '" +
                        fields[static_cast<std::size_t>(x_cols[j])] + "'");
      }
      if (std::isnan(v)) missing = true;
      row[j] = v;
    }
    double yv = 0.0;
    if (y_col >= 0) {
      if (!parse_double(fields[static_cast<std::size_t>(y_col)], &yv)) {
        throw DataError(where + ":" + std::to_string(lineno) +
                        ": outcome column: not a number");
      }
      if (std::isnan(yv)) missing = true;
    }
    if (missing) {
      ++dropped;
      continue;
    }
    rows.push_back(std::move(row));
    if (y_col >= 0) ys.push_back(yv);
  }

  Dataset ds;
  ds.has_outcome = (y_col >= 0);
  ds.dropped_rows = dropped;
  ds.x.resize(static_cast<Eigen::Index>(rows.size()),
              static_cast<Eigen::Index>(x_cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < x_cols.size(); ++j)
      ds.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  if (ds.has_outcome) {
    ds.y.resize(static_cast<Eigen::Index>(ys.size()));
    for (std::size_t i = 0; i < ys.size(); ++i)
      ds.y(static_cast<Eigen::Index>(i)) = ys[i];
  }
  return ds;
}

Dataset read_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_csv(ss.str(), path);
}

std::string to_csv(const Dataset& ds) {
  std::string out;
  out.reserve(ds.rows() * (ds.cols() + 1) * 12);
  for (std::size_t j = 0; j < ds.cols(); ++j) {
    if (j) out += ',';
    out += 'x';
    out += std::to_string(j + 1);
  }
  if (ds.has_outcome) out += ",y";
  out += '\n';
  for (Eigen::Index i = 0; i < ds.x.rows(); ++i) {
    for (Eigen::Index j = 0; j < ds.x.cols(); ++j) {
      if (j) out += ',';
      format_double(out, ds.x(i, j));
    }
    if (ds.has_outcome) {
      out += ',';
      format_double(out, ds.y(i));
    }
    out += '\n';
  }
  return out;
}

void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write file: " + path);
  f << to_csv(ds);
}

Dataset subset_rows(const Dataset& ds, const std::vector<std::uint32_t>& idx) {
  Dataset out;
  out.has_outcome = ds.has_outcome;
  out.x.resize(static_cast<Eigen::Index>(idx.size()), ds.x.cols());
  if (ds.has_outcome) out.y.resize(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.x.row(static_cast<Eigen::Index>(i)) = ds.x.row(idx[i]);
    if (ds.has_outcome) out.y(static_cast<Eigen::Index>(i)) = ds.y(idx[i]);
  }
  return out;
}

Dataset vstack(const std::vector<const Dataset*>& parts) {
  if (parts.empty()) throw DataError("vstack: no datasets");
  Eigen::Index total = 0;
  const Eigen::Index cols = parts.front()->x.cols();
  bool outcome = true;
  for (const Dataset* p : parts) {
    if (p->x.cols() != cols) throw DataError("vstack: covariate dimension mismatch");
    total += p->x.rows();
    outcome = outcome && p->has_outcome;
  }
  Dataset out;
  out.has_outcome = outcome;
  out.x.resize(total, cols);
  if (outcome) out.y.resize(total);
  Eigen::Index at = 0;
  for (const Dataset* p : parts) {
    out.x.middleRows(at, p->x.rows()) = p->x;
    if (outcome) out.y.segment(at, p->y.size()) = p->y;
    at += p->x.rows();
  }
  return out;
}

}  // namespace duc
