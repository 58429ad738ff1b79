#include "jmae/embedding.hpp"

#include <cmath>
#include <stdexcept>

#include "jmae/rng.hpp"

namespace jmae {

namespace {

std::vector<bool> pick_masked(int g, double ratio, uint64_t stream) {
  const int masked = static_cast<int>(std::llround(ratio * g));
  Rng rng(stream);
  std::vector<bool> mask(g, false);
  for (int idx : rng.sample_indices(g, masked)) mask[idx] = true;
  return mask;
}

double sq_dist(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

// One grouping stage: k-NN rows around each center, per-neighbor MLP on
// [relative position, neighbor feature], max-pool over the k neighbors.
Tensor group_stage(const std::vector<Vec3>& centers, const Cloud& ref_points,
                   const Tensor& ref_feats, const std::vector<std::vector<int>>& nbr,
                   const GroupStageParams& p) {
  const int g = static_cast<int>(centers.size());
  const int k = static_cast<int>(nbr.front().size());
  std::vector<int> flat;
  flat.reserve(static_cast<size_t>(g) * k);
  std::vector<double> rel;
  rel.reserve(static_cast<size_t>(g) * k * 3);
  for (int gi = 0; gi < g; ++gi)
    for (int j = 0; j < k; ++j) {
      const int idx = nbr[gi][j];
      flat.push_back(idx);
      for (int a = 0; a < 3; ++a) rel.push_back(ref_points[idx][a] - centers[gi][a]);
    }
  Tensor rel_t = Tensor::from_values({g * k, 3}, std::move(rel));
  Tensor gathered = gather_rows(ref_feats, flat);
  Tensor x = concat({rel_t, gathered}, 1);
  Tensor h = gelu(layer_norm(linear(x, p.lin1_w, p.lin1_b), p.ln_g, p.ln_b));
  Tensor y = linear(h, p.lin2_w, p.lin2_b);
  const int d_out = y.dim(1);
  return max_over_axis(reshape(y, {g, k, d_out}), 1);
}

}  // namespace

MaskPlan make_mask_plan(double ratio, int g2, int gi, uint64_t seed) {
  if (ratio < 0.0 || ratio >= 1.0) throw std::runtime_error("mask ratio must be in [0,1)");
  MaskPlan plan;
  plan.ratio = ratio;
  plan.seed = seed;
  plan.mask3d = pick_masked(g2, ratio, mix_seed(seed, {0xA3}));
  plan.mask2d = pick_masked(gi, ratio, mix_seed(seed, {0xB2}));
  return plan;
}

std::vector<bool> derive_fine_mask(const std::vector<Vec3>& stage_centers,
                                   const std::vector<Vec3>& final_centers,
                                   const std::vector<bool>& mask3d) {
  if (final_centers.size() != mask3d.size())
    throw std::runtime_error("derive_fine_mask: center/mask count mismatch");
  std::vector<bool> fine(stage_centers.size());
  for (size_t i = 0; i < stage_centers.size(); ++i) {
    int best = 0;
    double best_d = sq_dist(stage_centers[i], final_centers[0]);
    for (size_t j = 1; j < final_centers.size(); ++j) {
      const double d = sq_dist(stage_centers[i], final_centers[j]);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(j);
      }
    }
    fine[i] = mask3d[best];
  }
  return fine;
}

Embed3dParams make_embed3d_params(ParameterTree& pt, const std::string& prefix, int d0, int c1,
                                  int c) {
  Embed3dParams p;
  p.point_w = pt.add_fan_in(prefix + ".point.w", {3, d0}, 3);
  p.point_b = pt.add_zeros(prefix + ".point.b", {d0});
  auto stage = [&](const std::string& name, int d_in, int d_out) {
    GroupStageParams s;
    s.lin1_w = pt.add_fan_in(prefix + "." + name + ".lin1.w", {3 + d_in, d_out}, 3 + d_in);
    s.lin1_b = pt.add_zeros(prefix + "." + name + ".lin1.b", {d_out});
    s.ln_g = pt.add_values(prefix + "." + name + ".ln.g", {d_out},
                           std::vector<double>(d_out, 1.0));
    s.ln_b = pt.add_zeros(prefix + "." + name + ".ln.b", {d_out});
    s.lin2_w = pt.add_fan_in(prefix + "." + name + ".lin2.w", {d_out, d_out}, d_out);
    s.lin2_b = pt.add_zeros(prefix + "." + name + ".lin2.b", {d_out});
    return s;
  };
  p.stage1 = stage("stage1", d0, c1);
  p.stage2 = stage("stage2", c1, c);
  return p;
}

TokenSet3D embed_3d(const Cloud& cloud, const Embed3dParams& p, const Embed3dDims& dims,
                    const std::vector<bool>& mask3d) {
  const int n = static_cast<int>(cloud.size());
  if (dims.g2 > dims.g1 || dims.g1 > n)
    throw std::runtime_error("embed_3d: need G2 <= G1 <= N, got G1=" + std::to_string(dims.g1) +
                             " G2=" + std::to_string(dims.g2) + " N=" + std::to_string(n));
  if (dims.k1 > n || dims.k2 > dims.g1)
    throw std::runtime_error("embed_3d: k exceeds available points");
  if (!mask3d.empty() && static_cast<int>(mask3d.size()) != dims.g2)
    throw std::runtime_error("embed_3d: mask length mismatch");

  std::vector<double> raw;
  raw.reserve(static_cast<size_t>(n) * 3);
  for (const auto& pt : cloud)
    for (int a = 0; a < 3; ++a) raw.push_back(pt[a]);
  Tensor feats0 = linear(Tensor::from_values({n, 3}, std::move(raw)), p.point_w, p.point_b);

  TokenSet3D set;
  const std::vector<int> idx1 = farthest_point_sample(cloud, dims.g1);
  set.stage_centers.reserve(dims.g1);
  for (int i : idx1) set.stage_centers.push_back(cloud[i]);
  Tensor t1 = group_stage(set.stage_centers, cloud, feats0, knn(set.stage_centers, cloud, dims.k1),
                          p.stage1);

  const std::vector<int> idx2 = farthest_point_sample(set.stage_centers, dims.g2);
  set.centers.reserve(dims.g2);
  for (int i : idx2) set.centers.push_back(set.stage_centers[i]);
  set.tokens = group_stage(set.centers, set.stage_centers, t1,
                           knn(set.centers, set.stage_centers, dims.k2), p.stage2);

  const auto assign = knn(cloud, set.centers, 1);
  set.group_assignment.resize(n);
  for (int i = 0; i < n; ++i) set.group_assignment[i] = assign[i][0];

  set.visible = mask3d.empty() ? std::vector<bool>(dims.g2, false) : mask3d;
  set.visible.flip();
  set.fine_masked = mask3d.empty() ? std::vector<bool>(dims.g1, false)
                                   : derive_fine_mask(set.stage_centers, set.centers, mask3d);
  return set;
}

Embed2dParams make_embed2d_params(ParameterTree& pt, const std::string& prefix, int c4, int c) {
  Embed2dParams p;
  p.patch_w = pt.add_fan_in(prefix + ".patch.w", {16, c4}, 16);
  p.patch_b = pt.add_zeros(prefix + ".patch.b", {c4});
  p.conv1_w = pt.add_fan_in(prefix + ".conv1.w", {c, c4, 3, 3}, 9 * c4);
  p.conv1_b = pt.add_zeros(prefix + ".conv1.b", {c});
  p.ln1_g = pt.add_values(prefix + ".ln1.g", {c}, std::vector<double>(c, 1.0));
  p.ln1_b = pt.add_zeros(prefix + ".ln1.b", {c});
  p.conv2_w = pt.add_fan_in(prefix + ".conv2.w", {c, c, 3, 3}, 9 * c);
  p.conv2_b = pt.add_zeros(prefix + ".conv2.b", {c});
  p.ln2_g = pt.add_values(prefix + ".ln2.g", {c}, std::vector<double>(c, 1.0));
  p.ln2_b = pt.add_zeros(prefix + ".ln2.b", {c});
  return p;
}

std::atomic<uint64_t>& embed_2d_call_count() {
  static std::atomic<uint64_t> count{0};
  return count;
}

namespace {

// rows [G,C] <-> feature map [C,gh,gw]
Tensor rows_to_map(const Tensor& rows, int gh, int gw) {
  return reshape(transpose(rows), {rows.dim(1), gh, gw});
}

Tensor map_to_rows(const Tensor& map) {
  const int c = map.dim(0), gh = map.dim(1), gw = map.dim(2);
  return transpose(reshape(map, {c, gh * gw}));
}

// Zero every row whose final-grid parent cell is masked. factor = final cells
// per current cell edge... current grid is finer than final by `scale`.
Tensor zero_masked_rows(const Tensor& rows, int gh, int gw, const std::vector<bool>& mask2d,
                        int final_h, int final_w) {
  const int scale_h = gh / final_h, scale_w = gw / final_w;
  std::vector<double> keep(static_cast<size_t>(gh) * gw * rows.dim(1), 1.0);
  const int c = rows.dim(1);
  for (int r = 0; r < gh; ++r)
    for (int col = 0; col < gw; ++col)
      if (mask2d[(r / scale_h) * final_w + (col / scale_w)])
        for (int j = 0; j < c; ++j) keep[(static_cast<size_t>(r) * gw + col) * c + j] = 0.0;
  return mul(rows, Tensor::from_values({gh * gw, c}, std::move(keep)));
}

}  // namespace

TokenSet2D embed_2d(const DepthMap& map, const Embed2dParams& p,
                    const std::vector<bool>& mask2d) {
  embed_2d_call_count().fetch_add(1, std::memory_order_relaxed);
  if (map.h % 16 != 0 || map.w % 16 != 0)
    throw std::runtime_error("embed_2d: extents must be divisible by 16, got " +
                             std::to_string(map.h) + "x" + std::to_string(map.w));
  const int fh = map.h / 16, fw = map.w / 16;
  if (!mask2d.empty() && static_cast<int>(mask2d.size()) != fh * fw)
    throw std::runtime_error("embed_2d: mask length mismatch");
  const std::vector<bool> mask = mask2d.empty() ? std::vector<bool>(fh * fw, false) : mask2d;

  // 4x4 patchify at H/4
  const int g4h = map.h / 4, g4w = map.w / 4;
  std::vector<double> patches(static_cast<size_t>(g4h) * g4w * 16);
  for (int r = 0; r < g4h; ++r)
    for (int c = 0; c < g4w; ++c)
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
          patches[(static_cast<size_t>(r) * g4w + c) * 16 + i * 4 + j] =
              map.at(r * 4 + i, c * 4 + j);
  Tensor rows4 = linear(Tensor::from_values({g4h * g4w, 16}, std::move(patches)), p.patch_w,
                        p.patch_b);

  Tensor map8 = conv2d_3x3_s2(rows_to_map(rows4, g4h, g4w), p.conv1_w, p.conv1_b);
  Tensor rows8 = gelu(layer_norm(map_to_rows(map8), p.ln1_g, p.ln1_b));
  rows8 = zero_masked_rows(rows8, g4h / 2, g4w / 2, mask, fh, fw);

  Tensor map16 = conv2d_3x3_s2(rows_to_map(rows8, g4h / 2, g4w / 2), p.conv2_w, p.conv2_b);
  Tensor rows16 = gelu(layer_norm(map_to_rows(map16), p.ln2_g, p.ln2_b));
  rows16 = zero_masked_rows(rows16, fh, fw, mask, fh, fw);

  TokenSet2D set;
  set.tokens = rows16;
  set.grid_h = fh;
  set.grid_w = fw;
  set.visible.assign(mask.begin(), mask.end());
  set.visible.flip();
  return set;
}

VisibleRows visible_tokens(const Tensor& tokens, const std::vector<bool>& visible) {
  if (static_cast<int>(visible.size()) != tokens.dim(0))
    throw std::runtime_error("visible_tokens: mask length mismatch");
  VisibleRows out;
  for (size_t i = 0; i < visible.size(); ++i)
    if (visible[i]) out.indices.push_back(static_cast<int>(i));
  if (out.indices.empty()) throw std::runtime_error("visible_tokens: no visible rows");
  out.rows = gather_rows(tokens, out.indices);
  return out;
}

}  // namespace jmae
