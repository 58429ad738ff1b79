#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "jmae/checkpoint.hpp"
#include "jmae/params.hpp"

namespace jmae {

struct ScheduleConfig {
  double base_lr = 5e-5;
  double min_lr = 0.0;
  int warmup_epochs = 10;
  int total_epochs = 400;
};

/// Linear warmup from 0 to base over the warmup epochs, then half-cosine down
/// to min at total_epochs. Accepts fractional epochs so per-iteration values
/// move smoothly; clamps outside [0, total].
double lr_at_f(double epoch, const ScheduleConfig& cfg);
double lr_at(int epoch, const ScheduleConfig& cfg);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-2;
  double clip_norm = 10.0;  // global grad norm; <= 0 disables clipping
};

class AdamW {
 public:
  AdamW(ParameterTree& params, AdamWConfig cfg);

  /// One update over every parameter in the tree. Grads must be populated
  /// (an untouched grad buffer is an error naming the parameter); they are
  /// left in place for the caller to reset.
  void step(double lr);

  int64_t step_count() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

  // Moments travel inside checkpoints under opt.m.<path> / opt.v.<path>,
  // plus a scalar opt.t step counter.
  void export_state(Checkpoint& ck) const;
  void import_state(const Checkpoint& ck);

 private:
  ParameterTree& params_;
  AdamWConfig cfg_;
  int64_t t_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

}  // namespace jmae
