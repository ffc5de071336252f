#pragma once

#include <string>
#include <vector>

namespace sfb {

struct SpearmanResult {
  double rho = 0.0;
  bool degenerate = false;  // a constant input; rho reported as 0
};

/// Rank correlation with average ranks on ties. Lengths must match and be
/// at least 2.
SpearmanResult spearman(const std::vector<double>& xs, const std::vector<double>& ys);

double sample_mean(const std::vector<double>& xs);
/// n-1 normalized standard deviation; 0 for a single value.
double sample_sd(const std::vector<double>& xs);

/// Shortest decimal string that round-trips the value exactly. Infinities and
/// NaN render as inf/-inf/nan.
std::string format_double(double v);

/// One CSV line from already-formatted cells (comma separator, no quoting;
/// cells must not contain commas or newlines).
std::string csv_line(const std::vector<std::string>& cells);

}  // namespace sfb
