#pragma once

#include <string>
#include <vector>

#include "jmae/geometry.hpp"
#include "jmae/params.hpp"
#include "jmae/tensor.hpp"

namespace jmae {

/// Per-direction cross-modal attention scheme; false = global (all pairs
/// valid in that direction).
struct AttnScheme {
  bool local_3d_to_2d = true;
  bool local_2d_to_3d = true;
};

/// Square validity matrix over one attention call's token order:
/// the 3D block first, then the 2D block.
struct Validity {
  int n3d = 0, n2d = 0;
  std::vector<bool> valid;  // (n3d+n2d)^2, row = query, col = key

  int total() const { return n3d + n2d; }
  bool at(int q, int k) const { return valid[static_cast<size_t>(q) * total() + k]; }
};

/// Cross-modal pairs are valid iff the 3D center's projected pixel falls in
/// the 2D token's 16x16 footprint; a center projecting out of frame
/// correlates with nothing. Within-modality entries are always valid.
/// `cells2d` holds final-grid indices (row-major, width grid_w).
Validity correlation_mask(const std::vector<Vec3>& centers3d, const std::vector<int>& cells2d,
                          int grid_w, const ViewSpec& view, const AttnScheme& scheme);

struct BlockParams {
  Tensor ln1_g, ln1_b;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_g, ln2_b;
  Tensor mlp1_w, mlp1_b, mlp2_w, mlp2_b;
};

BlockParams make_block_params(ParameterTree& pt, const std::string& prefix, int c);

/// Captured internals of one attention call, for inspection in tests and the
/// ablation fixtures. Values are detached copies.
struct AttnTrace {
  std::vector<std::vector<double>> head_weights;  // per head, T*T row-major
  std::vector<double> values;                     // concat V, T*C
  std::vector<double> attended;                   // pre-output-projection, T*C
};

/// Pre-norm residual transformer block: x + Attn(LN x), then x + MLP(LN x).
/// validity == nullptr means full attention.
Tensor transformer_block(const Tensor& x, const BlockParams& p, int heads,
                         const Validity* validity, AttnTrace* trace = nullptr);

/// Cross-attention variant: queries from x (pre-normed), keys/values straight
/// from kv; full attention, then the MLP half. Residuals on x.
Tensor cross_block(const Tensor& x, const Tensor& kv, const BlockParams& p, int heads,
                   AttnTrace* trace = nullptr);

struct PosEnc {
  Tensor pe2d;  // [GI, C] table, sine-cosine initialized, learnable
  Tensor mlp1_w, mlp1_b, mlp2_w, mlp2_b;  // 3 -> C/2 -> C
};

/// with_2d=false registers only the 3D branch (pe2d stays undefined), for
/// inference paths that drop every 2D-only parameter.
PosEnc make_pos_enc(ParameterTree& pt, const std::string& prefix, int grid_h, int grid_w, int c,
                    bool with_2d = true);

/// Frozen sine-cosine table for a grid, also the pe2d init (C % 4 == 0).
std::vector<double> sincos_grid(int grid_h, int grid_w, int c);

Tensor positional_for_3d(const std::vector<Vec3>& coords, const PosEnc& p);
Tensor positional_for_2d(const std::vector<int>& cells, const PosEnc& p);

struct EncoderParams {
  std::vector<BlockParams> blocks;
  Tensor m3d, m2d;  // modality encodings, [1,C]
  int heads = 6;
};

/// with_2d=false skips the 2D modality encoding (m2d stays undefined).
EncoderParams make_encoder_params(ParameterTree& pt, const std::string& prefix, int num_blocks,
                                  int c, int heads, bool with_2d = true);

struct EncodeResult {
  Tensor joint;      // [V3+V2, C]
  Tensor e3d, e2d;   // splits in input order; e2d undefined when no 2D tokens
};

/// Joint encoder. Positional and modality encodings are added to the visible
/// tokens here, then the concatenated sequence runs through the blocks.
/// vis2d/pos2d may be undefined for the 3D-only path, where attention
/// degenerates to 3D self-attention.
EncodeResult encode(const Tensor& vis3d, const Tensor& pos3d, const Tensor& vis2d,
                    const Tensor& pos2d, const EncoderParams& p, const Validity& validity,
                    std::vector<AttnTrace>* traces = nullptr);

}  // namespace jmae
