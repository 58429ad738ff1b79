#include "jmae/probe.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>

namespace jmae {

namespace {

// Minimizes reg*|w|^2 + mean_i max(0, 1 - y_i*(w.x_i + b))^2 for labels +-1.
// The bias rides along unregularized. Step size 1/L with L bounded by
// 2*reg + 2*mean(|x|^2 + 1), the curvature cap of the objective.
std::vector<double> train_binary(const std::vector<std::vector<double>>& x,
                                 const std::vector<double>& y, double reg) {
  const size_t n = x.size(), d = x[0].size();
  double mean_sq = 0.0;
  for (const auto& row : x) {
    double s = 1.0;
    for (double v : row) s += v * v;
    mean_sq += s;
  }
  mean_sq /= static_cast<double>(n);
  const double step = 1.0 / (2.0 * reg + 2.0 * mean_sq);

  std::vector<double> w(d + 1, 0.0);  // bias last
  std::vector<double> grad(d + 1);
  for (int iter = 0; iter < 10000; ++iter) {
    for (size_t j = 0; j < d; ++j) grad[j] = 2.0 * reg * w[j];
    grad[d] = 0.0;
    for (size_t i = 0; i < n; ++i) {
      double s = w[d];
      for (size_t j = 0; j < d; ++j) s += w[j] * x[i][j];
      const double margin = 1.0 - y[i] * s;
      if (margin <= 0.0) continue;
      const double coeff = -2.0 * y[i] * margin / static_cast<double>(n);
      for (size_t j = 0; j < d; ++j) grad[j] += coeff * x[i][j];
      grad[d] += coeff;
    }
    double norm = 0.0;
    for (double g : grad) norm += g * g;
    if (std::sqrt(norm) < 1e-6) break;
    for (size_t j = 0; j <= d; ++j) w[j] -= step * grad[j];
  }
  return w;
}

}  // namespace

ProbeResult linear_probe(const std::vector<std::vector<double>>& train_x,
                         const std::vector<int>& train_y,
                         const std::vector<std::vector<double>>& test_x,
                         const std::vector<int>& test_y, int num_classes, double reg) {
  if (train_x.empty() || train_x.size() != train_y.size())
    throw std::runtime_error("probe: training features and labels must pair up");
  if (test_x.size() != test_y.size())
    throw std::runtime_error("probe: test features and labels must pair up");
  if (reg <= 0.0) throw std::runtime_error("probe: regularization must be positive");
  const size_t d = train_x[0].size();
  for (const auto& row : train_x)
    if (row.size() != d) throw std::runtime_error("probe: ragged feature rows");
  std::set<int> seen(train_y.begin(), train_y.end());
  if (seen.size() < 2) throw std::runtime_error("probe: need at least 2 classes in training data");
  for (int y : train_y)
    if (y < 0 || y >= num_classes) throw std::runtime_error("probe: label out of range");

  ProbeResult out;
  for (int k = 0; k < num_classes; ++k) {
    std::vector<double> y(train_y.size());
    for (size_t i = 0; i < train_y.size(); ++i) y[i] = train_y[i] == k ? 1.0 : -1.0;
    out.weights.push_back(train_binary(train_x, y, reg));
  }

  out.total = static_cast<int>(test_x.size());
  for (size_t i = 0; i < test_x.size(); ++i) {
    if (test_x[i].size() != d) throw std::runtime_error("probe: ragged feature rows");
    int best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < num_classes; ++k) {
      double s = out.weights[k][d];
      for (size_t j = 0; j < d; ++j) s += out.weights[k][j] * test_x[i][j];
      if (s > best_score) {
        best_score = s;
        best = k;
      }
    }
    if (best == test_y[i]) ++out.correct;
  }
  out.accuracy = out.total > 0 ? static_cast<double>(out.correct) / out.total : 0.0;
  return out;
}

}  // namespace jmae
