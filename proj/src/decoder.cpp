#include "jmae/decoder.hpp"

#include <stdexcept>

namespace jmae {

DecoderParams make_decoder_params(ParameterTree& pt, const std::string& prefix, int shared_blocks,
                                  int c, int heads, int points_per_group) {
  DecoderParams p;
  p.heads = heads;
  for (int b = 0; b < shared_blocks; ++b)
    p.shared.push_back(make_block_params(pt, prefix + ".shared" + std::to_string(b), c));
  p.spec3d = make_block_params(pt, prefix + ".spec3d", c);
  p.spec2d = make_block_params(pt, prefix + ".spec2d", c);
  p.mask3d_tok = pt.add_normal(prefix + ".mask3d", {1, c}, 0.02);
  p.mask2d_tok = pt.add_normal(prefix + ".mask2d", {1, c}, 0.02);
  p.head3d_w = pt.add_fan_in(prefix + ".head3d.w", {c, points_per_group * 3}, c);
  p.head3d_b = pt.add_zeros(prefix + ".head3d.b", {points_per_group * 3});
  p.head2d_w = pt.add_fan_in(prefix + ".head2d.w", {c, 256}, c);
  p.head2d_b = pt.add_zeros(prefix + ".head2d.b", {256});
  return p;
}

DecodedFeatures shared_decode(const Tensor& e3d, const std::vector<int>& vis3d_indices,
                              const std::vector<Vec3>& vis3d_centers, const Tensor& e2d,
                              const std::vector<int>& vis2d_cells,
                              const std::vector<int>& masked3d_indices,
                              const std::vector<Vec3>& masked3d_centers,
                              const std::vector<int>& masked2d_cells, const PosEnc& pos,
                              const DecoderParams& p) {
  const int v3 = e3d.dim(0);
  const int v2 = e2d.defined() ? e2d.dim(0) : 0;
  const int m3 = static_cast<int>(masked3d_indices.size());
  const int m2 = static_cast<int>(masked2d_cells.size());
  if (static_cast<int>(vis3d_indices.size()) != v3 ||
      static_cast<int>(vis3d_centers.size()) != v3)
    throw std::runtime_error("shared_decode: visible 3D metadata mismatch");
  if (static_cast<int>(vis2d_cells.size()) != v2)
    throw std::runtime_error("shared_decode: visible 2D metadata mismatch");
  if (static_cast<int>(masked3d_centers.size()) != m3)
    throw std::runtime_error("shared_decode: masked 3D metadata mismatch");

  std::vector<Tensor> parts{add(e3d, positional_for_3d(vis3d_centers, pos))};
  if (v2 > 0) parts.push_back(add(e2d, positional_for_2d(vis2d_cells, pos)));
  if (m3 > 0)
    parts.push_back(
        add(broadcast_rows(p.mask3d_tok, m3), positional_for_3d(masked3d_centers, pos)));
  if (m2 > 0)
    parts.push_back(add(broadcast_rows(p.mask2d_tok, m2), positional_for_2d(masked2d_cells, pos)));
  Tensor x = parts.size() == 1 ? parts[0] : concat(parts, 0);

  for (const auto& block : p.shared) x = transformer_block(x, block, p.heads, nullptr);

  DecodedFeatures out;
  // gather per-modality rows: visible first, then masked, original order kept
  std::vector<int> rows3, rows2;
  for (int i = 0; i < v3; ++i) {
    rows3.push_back(i);
    out.rows3d.push_back({true, vis3d_indices[i], false});
  }
  for (int i = 0; i < m3; ++i) {
    rows3.push_back(v3 + v2 + i);
    out.rows3d.push_back({true, masked3d_indices[i], true});
  }
  for (int i = 0; i < v2; ++i) {
    rows2.push_back(v3 + i);
    out.rows2d.push_back({false, vis2d_cells[i], false});
  }
  for (int i = 0; i < m2; ++i) {
    rows2.push_back(v3 + v2 + m3 + i);
    out.rows2d.push_back({false, masked2d_cells[i], true});
  }
  out.d3d = gather_rows(x, rows3);
  if (!rows2.empty()) out.d2d = gather_rows(x, rows2);
  return out;
}

Tensor specific_decode_3d(const Tensor& d3d, const Tensor& ev3d, const DecoderParams& p) {
  if (!ev3d.defined() || ev3d.dim(0) < 1)
    throw std::runtime_error("specific_decode: empty visible set cannot form keys");
  return cross_block(d3d, ev3d, p.spec3d, p.heads);
}

Tensor specific_decode_2d(const Tensor& d2d, const Tensor& ev2d, const DecoderParams& p) {
  if (!ev2d.defined() || ev2d.dim(0) < 1)
    throw std::runtime_error("specific_decode: empty visible set cannot form keys");
  return cross_block(d2d, ev2d, p.spec2d, p.heads);
}

Tensor rec_head_3d(const Tensor& dprime3d, const std::vector<RowId>& rows,
                   const std::vector<Vec3>& all_centers, const DecoderParams& p) {
  std::vector<int> masked_rows;
  std::vector<double> centers;
  const int s = p.head3d_w.dim(1) / 3;
  for (size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].masked) continue;
    masked_rows.push_back(static_cast<int>(i));
    const Vec3& c = all_centers[rows[i].index];
    for (int j = 0; j < s; ++j) {
      centers.push_back(c[0]);
      centers.push_back(c[1]);
      centers.push_back(c[2]);
    }
  }
  if (masked_rows.empty()) throw std::runtime_error("rec_head_3d: no masked rows");
  Tensor offsets = linear(gather_rows(dprime3d, masked_rows), p.head3d_w, p.head3d_b);
  Tensor pts = reshape(offsets, {static_cast<int>(masked_rows.size()) * s, 3});
  Tensor base = Tensor::from_values({static_cast<int>(masked_rows.size()) * s, 3},
                                    std::move(centers));
  return add(pts, base);
}

Tensor rec_head_2d(const Tensor& dprime2d, const std::vector<RowId>& rows,
                   const DecoderParams& p) {
  std::vector<int> masked_rows;
  for (size_t i = 0; i < rows.size(); ++i)
    if (rows[i].masked) masked_rows.push_back(static_cast<int>(i));
  if (masked_rows.empty()) throw std::runtime_error("rec_head_2d: no masked rows");
  return linear(gather_rows(dprime2d, masked_rows), p.head2d_w, p.head2d_b);
}

}  // namespace jmae
