#pragma once

#include <cstdint>
#include <vector>

#include "jmae/attention.hpp"
#include "jmae/config.hpp"
#include "jmae/decoder.hpp"
#include "jmae/embedding.hpp"
#include "jmae/losses.hpp"
#include "jmae/params.hpp"

namespace jmae {

/// Which parameters to register. encoder3d is the inference subset: the 3D
/// tokenizer, 3D positional mlp, and encoder without the 2D modality vector.
/// Loading a full checkpoint into it ignores the extra entries.
enum class ModelParts { full, encoder3d };

struct Model {
  Embed3dParams emb3;
  Embed2dParams emb2;  // undefined members under encoder3d
  PosEnc pos;
  EncoderParams enc;
  DecoderParams dec;  // undefined members under encoder3d
  Embed3dDims dims3;
  int heads = 0;
  int grid_h = 0, grid_w = 0;
};

Model build_model(ParameterTree& pt, const RunConfig& cfg, ModelParts parts = ModelParts::full);

/// Everything one masked forward pass produces; the loss terms and the
/// reconstruction dumps both read from it.
struct SampleRun {
  DepthMap map;
  MaskPlan plan;
  TokenSet3D t3;
  TokenSet2D t2;
  std::vector<int> vis3, masked3, vis2, masked2;
  std::vector<Vec3> vis_centers, masked_centers;
  Tensor pred3;  // [num masked groups * points_per_group, 3]
  Tensor pred2;  // [num masked cells, 256]
};

/// Tokenize both modalities of an already-prepared cloud at the given view,
/// mask with mask_seed, encode under the correlation mask, decode, and run
/// both reconstruction heads.
SampleRun run_sample(const Model& m, const RunConfig& cfg, const Cloud& cloud,
                     const ViewSpec& view, uint64_t mask_seed);

struct ForwardResult {
  Tensor total;  // scalar, differentiable
  LossBreakdown parts;
};

/// One pre-training sample: augment, render, tokenize both modalities, mask,
/// encode with the correlation mask, decode, and score the three losses.
/// sample_seed drives every random choice for the sample.
ForwardResult pretrain_forward(const Model& m, const RunConfig& cfg, const Cloud& cloud,
                               uint64_t sample_seed);

/// Pooled 3D-branch representation: encode with no masking and no 2D tokens,
/// then elementwise max over tokens plus mean over tokens, summed. Length C.
std::vector<double> extract_features(const Model& m, const RunConfig& cfg, const Cloud& cloud);

}  // namespace jmae
