#pragma once

#include <functional>
#include <string>
#include <vector>

#include "jmae/params.hpp"
#include "jmae/tensor.hpp"

namespace jmae {

struct GradCheckRow {
  std::string path;
  double max_rel_err = 0.0;
  int checked_elems = 0;
};

struct GradCheckReport {
  std::vector<GradCheckRow> rows;
  double tolerance = 0.0;
  bool pass = false;
  double worst() const;
};

/// Compares reverse-mode grads against central differences (absolute step
/// `step`) for every parameter in the tree. The builder must produce the same
/// scalar bit-for-bit when called twice on unchanged parameters; anything
/// else is reported as an error, since finite differences on a shifting
/// graph are meaningless. `max_elems_per_tensor` < 0 checks every element;
/// otherwise that many are sampled per tensor, seeded by `pick_seed`. Deep
/// stacks with layer-norm near its epsilon regime need a smaller step than
/// the 1e-5 default, since truncation error grows with the curvature.
GradCheckReport grad_check(ParameterTree& params,
                           const std::function<Tensor(const ParameterTree&)>& build,
                           double tolerance, int max_elems_per_tensor = -1,
                           uint64_t pick_seed = 0, double step = 1e-5);

std::string format_report(const GradCheckReport& report);

}  // namespace jmae
