#pragma once

#include <string>
#include <vector>

#include "jmae/attention.hpp"
#include "jmae/params.hpp"
#include "jmae/tensor.hpp"

namespace jmae {

struct RowId {
  bool is3d = false;
  int index = 0;  // token index in its modality's original order
  bool masked = false;
};

struct DecoderParams {
  std::vector<BlockParams> shared;
  BlockParams spec3d, spec2d;
  Tensor mask3d_tok, mask2d_tok;  // [1,C]
  Tensor head3d_w, head3d_b;      // C -> s*3
  Tensor head2d_w, head2d_b;      // C -> 256
  int heads = 6;
};

DecoderParams make_decoder_params(ParameterTree& pt, const std::string& prefix, int shared_blocks,
                                  int c, int heads, int points_per_group);

struct DecodedFeatures {
  Tensor d3d, d2d;                    // per-modality rows after the shared stage
  std::vector<RowId> rows3d, rows2d;  // row identity, in row order
};

/// Shared stage: rows = [visible 3D, visible 2D, mask3d tokens,
/// mask2d tokens]; every row gets its positional encoding (visible rows
/// re-receive theirs), then full-attention blocks, then a split by modality
/// with visible rows first.
DecodedFeatures shared_decode(const Tensor& e3d, const std::vector<int>& vis3d_indices,
                              const std::vector<Vec3>& vis3d_centers, const Tensor& e2d,
                              const std::vector<int>& vis2d_cells,
                              const std::vector<int>& masked3d_indices,
                              const std::vector<Vec3>& masked3d_centers,
                              const std::vector<int>& masked2d_cells, const PosEnc& pos,
                              const DecoderParams& p);

/// Specific stage: one cross-attention block per modality,
/// queries = that modality's decoded rows, keys/values = its visible encoder
/// features.
Tensor specific_decode_3d(const Tensor& d3d, const Tensor& ev3d, const DecoderParams& p);
Tensor specific_decode_2d(const Tensor& d2d, const Tensor& ev2d, const DecoderParams& p);

/// Masked-group point predictions: per masked row, s offsets added onto the
/// group center. Returns [M*s, 3] in the order of `rows`.
Tensor rec_head_3d(const Tensor& dprime3d, const std::vector<RowId>& rows,
                   const std::vector<Vec3>& all_centers, const DecoderParams& p);

/// Masked-patch depth predictions, [M, 256], one 16x16 patch per masked row.
Tensor rec_head_2d(const Tensor& dprime2d, const std::vector<RowId>& rows,
                   const DecoderParams& p);

}  // namespace jmae
