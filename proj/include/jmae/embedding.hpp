#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <vector>

#include "jmae/geometry.hpp"
#include "jmae/params.hpp"
#include "jmae/tensor.hpp"

namespace jmae {

struct MaskPlan {
  double ratio = 0.0;
  uint64_t seed = 0;
  std::vector<bool> mask3d;       // final-scale groups, true = masked
  std::vector<bool> mask2d;       // final-grid cells, true = masked
  std::vector<bool> fine_mask3d;  // stage-1 groups, derived from mask3d
};

/// Exactly round(ratio*G) positions masked per modality. 3D masks final-scale
/// groups uniformly; 2D masks final-grid cells uniformly, each cell standing
/// for one 16x16 pixel block.
MaskPlan make_mask_plan(double ratio, int g2, int gi, uint64_t seed);

/// Multi-scale rule: a stage-1 group inherits the mask bit of its nearest
/// final-scale center (ties to the lowest index).
std::vector<bool> derive_fine_mask(const std::vector<Vec3>& stage_centers,
                                   const std::vector<Vec3>& final_centers,
                                   const std::vector<bool>& mask3d);

struct TokenSet3D {
  Tensor tokens;                      // [G2, C]
  std::vector<Vec3> centers;          // G2 final centers, a subset of the input
  std::vector<Vec3> stage_centers;    // G1
  std::vector<int> group_assignment;  // input point -> nearest final group
  std::vector<bool> visible;          // G2
  std::vector<bool> fine_masked;      // G1, nearest-center rule
};

struct TokenSet2D {
  Tensor tokens;  // [GI, C], row-major over the final grid
  int grid_h = 0, grid_w = 0;
  std::vector<bool> visible;  // GI
};

struct GroupStageParams {
  Tensor lin1_w, lin1_b;  // (3 + d_in) -> d_out
  Tensor ln_g, ln_b;
  Tensor lin2_w, lin2_b;  // d_out -> d_out
};

struct Embed3dParams {
  Tensor point_w, point_b;  // 3 -> d0
  GroupStageParams stage1, stage2;
};

struct Embed2dParams {
  Tensor patch_w, patch_b;    // 16 -> c4
  Tensor conv1_w, conv1_b;    // c4 -> C, stride 2
  Tensor ln1_g, ln1_b;
  Tensor conv2_w, conv2_b;    // C -> C, stride 2
  Tensor ln2_g, ln2_b;
};

Embed3dParams make_embed3d_params(ParameterTree& pt, const std::string& prefix, int d0, int c1,
                                  int c);
Embed2dParams make_embed2d_params(ParameterTree& pt, const std::string& prefix, int c4, int c);

struct Embed3dDims {
  int g1, g2, k1, k2;
};

/// Two cascaded FPS+kNN grouping stages; the full hierarchy is embedded and
/// the plan's mask only tags visibility (masked tokens are dropped later, not
/// zeroed). Empty mask3d means all-visible.
TokenSet3D embed_3d(const Cloud& cloud, const Embed3dParams& p, const Embed3dDims& dims,
                    const std::vector<bool>& mask3d);

/// 4x4 patchify + linear to the H/4 grid, then two stride-2 conv blocks.
/// After each block, features at cells whose final-grid token is masked are
/// zeroed (mask upsampled to the block's grid). Empty mask2d = all-visible.
TokenSet2D embed_2d(const DepthMap& map, const Embed2dParams& p,
                    const std::vector<bool>& mask2d);

/// How many times embed_2d ran in this process; the probe path asserts 0.
std::atomic<uint64_t>& embed_2d_call_count();

struct VisibleRows {
  Tensor rows;               // [V, C]
  std::vector<int> indices;  // original token indices, ascending
};

VisibleRows visible_tokens(const Tensor& tokens, const std::vector<bool>& visible);

}  // namespace jmae
