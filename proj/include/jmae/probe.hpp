#pragma once

#include <vector>

namespace jmae {

struct ProbeResult {
  double accuracy = 0.0;  // fraction correct on the test split
  int correct = 0;
  int total = 0;
  std::vector<std::vector<double>> weights;  // per class, feature dim + bias last
};

/// One-vs-rest linear classifier trained per class on the squared hinge loss
/// with L2 weight regularization, by full-batch gradient descent at step 1/L
/// until the gradient norm drops under 1e-6 or 10000 iterations pass.
/// Deterministic: zero init, no data shuffling. Prediction is argmax of the
/// per-class scores, ties to the lower class index.
ProbeResult linear_probe(const std::vector<std::vector<double>>& train_x,
                         const std::vector<int>& train_y,
                         const std::vector<std::vector<double>>& test_x,
                         const std::vector<int>& test_y, int num_classes, double reg);

}  // namespace jmae
