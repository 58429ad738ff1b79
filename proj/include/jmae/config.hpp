#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace jmae {

struct DatasetSpec {
  std::vector<std::string> classes{"sphere", "cube", "cylinder", "torus", "cone"};
  int train_per_class = 60;
  int test_per_class = 20;
  double deform_min = 0.7;
  double deform_max = 1.3;
  double noise_sigma = 0.01;
};

struct RunConfig {
  uint64_t seed = 1;
  std::string out_dir = "runs/desk";

  // data
  int num_points = 512;  // N
  int image_size = 64;   // H = W
  DatasetSpec dataset;

  // tokenizers
  int groups_stage1 = 64;  // G1
  int groups_final = 16;   // G2
  int knn_stage1 = 16;
  int knn_stage2 = 4;
  int embed3d_point = 24;   // point feature width before grouping
  int embed3d_stage1 = 48;  // stage-1 token width
  int embed2d_mid = 32;     // patch row width at H/4

  // transformer
  int width = 96;  // C
  int encoder_blocks = 4;
  int shared_blocks = 1;
  int heads = 6;

  // masking, attention, losses
  double mask_ratio = 0.75;
  bool local_3d_to_2d = true;
  bool local_2d_to_3d = true;
  int cross_views = 2;  // total rendered views; 0 disables the cross loss
  double sigma = 1.0;
  double hardness = 5.0;
  bool foreground_only = false;
  bool pooled_3d_loss = false;
  double w3d = 1.0, w2d = 1.0, wcross = 1.0;

  // optimization
  int epochs = 40;
  int warmup_epochs = 4;
  int batch_size = 16;
  double lr = 1e-3;
  double min_lr = 0.0;
  double weight_decay = 0.05;
  double clip_norm = 10.0;
  int checkpoint_every = 10;
  int threads = 1;  // >1 trades bit-exact reproducibility for speed

  // derived
  int final_grid() const { return (image_size / 16) * (image_size / 16); }
  int points_per_group() const { return num_points / groups_final; }

  /// Throws listing every violated constraint.
  void validate() const;
};

RunConfig config_from_json(const std::string& text);
std::string config_to_json(const RunConfig& cfg);
RunConfig load_config(const std::string& path);

/// Standalone dataset spec, same keys as the config's "dataset" section.
DatasetSpec dataset_from_json(const std::string& text);
DatasetSpec load_dataset_spec(const std::string& path);

}  // namespace jmae
