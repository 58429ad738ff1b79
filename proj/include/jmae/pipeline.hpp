#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "jmae/checkpoint.hpp"
#include "jmae/config.hpp"
#include "jmae/dataset.hpp"
#include "jmae/gradcheck.hpp"
#include "jmae/model.hpp"
#include "jmae/probe.hpp"

namespace jmae {

struct EpochRow {
  int epoch = 0;  // 1-based, matches the log file
  double loss3d = 0.0, loss2d = 0.0, loss_cross = 0.0;  // weighted means per sample
  double total = 0.0;                                   // always the sum of the three
  double lr = 0.0;                                      // applied at the epoch's first step
};

struct TrainResult {
  std::vector<EpochRow> rows;
  std::string checkpoint_path;  // final checkpoint
  std::string log_path;
};

/// Full pre-training run into cfg.out_dir: train_log.csv with one row per
/// epoch, a checkpoint every cfg.checkpoint_every epochs and a final one.
/// resume_path restarts from a saved checkpoint bit-exactly. threads > 1
/// splits each batch into contiguous chunks reduced in thread order, which
/// is deterministic per thread count but not across counts.
TrainResult pretrain(const RunConfig& cfg, const std::string& resume_path = "",
                     const std::function<void(const EpochRow&)>& on_epoch = {});

EpochRow parse_log_row(const std::string& line);
std::vector<EpochRow> read_train_log(const std::string& file);

struct ProbeRun {
  double accuracy = 0.0;  // fraction correct on the test split
  int correct = 0, total = 0;
};

/// Rebuilds the 3D-only encoder, optionally loads `state` (extra 2D-branch
/// entries are ignored), extracts features for the config's dataset and fits
/// the linear probe. The 2D tokenizer must never run here; that is asserted.
ProbeRun probe_features(const RunConfig& cfg,
                        const std::map<std::string, std::vector<double>>* state, double reg);

/// probe_features on a checkpoint's own config and weights; dataset_override
/// swaps the synthetic dataset the probe is fit and scored on.
ProbeRun probe_checkpoint(const std::string& checkpoint_path, double reg = 1e-3,
                          const DatasetSpec* dataset_override = nullptr);

/// Finite-difference check of the full masked-autoencoding stack at tiny
/// dimensions (width 32, 2 encoder blocks, 64 points in 8 groups of 8).
GradCheckReport model_grad_check(uint64_t seed, double tol, int elems_per_tensor = 3,
                                 double step = 1e-7);

struct AblateRow {
  std::string axis, arm;
  double accuracy = 0.0;
};

/// Pretrain + probe per arm of one ablation axis; writes
/// <out_dir>/ablate_<axis>.csv with header axis,arm,accuracy.
///   attention: the four local/global scheme pairs
///   views:     cross-projection rendering off / 1 view / 4 views
///   ratio:     mask ratio 0.6 / 0.7 / 0.75 / 0.8
std::vector<AblateRow> ablate(const std::string& axis, const RunConfig& base, double reg = 1e-3);

/// Masked-autoencoding artifacts for one cloud at the default view, written
/// into out_dir: input/centers/masked/reconstructed .xyz plus input and
/// reconstructed depth maps as .pgm.
void reconstruct_to_dir(const std::string& checkpoint_path, const std::string& input_file,
                        const std::string& out_dir);

}  // namespace jmae
