#include "jmae/model.hpp"

#include <stdexcept>

#include "jmae/rng.hpp"

namespace jmae {

Model build_model(ParameterTree& pt, const RunConfig& cfg, ModelParts parts) {
  cfg.validate();
  const bool full = parts == ModelParts::full;
  Model m;
  m.dims3 = {cfg.groups_stage1, cfg.groups_final, cfg.knn_stage1, cfg.knn_stage2};
  m.heads = cfg.heads;
  m.grid_h = cfg.image_size / 16;
  m.grid_w = cfg.image_size / 16;
  m.emb3 = make_embed3d_params(pt, "embed3d", cfg.embed3d_point, cfg.embed3d_stage1, cfg.width);
  m.pos = make_pos_enc(pt, "pos", m.grid_h, m.grid_w, cfg.width, full);
  m.enc = make_encoder_params(pt, "encoder", cfg.encoder_blocks, cfg.width, cfg.heads, full);
  if (full) {
    m.emb2 = make_embed2d_params(pt, "embed2d", cfg.embed2d_mid, cfg.width);
    m.dec = make_decoder_params(pt, "decoder", cfg.shared_blocks, cfg.width, cfg.heads,
                                cfg.points_per_group());
  }
  return m;
}

namespace {

std::vector<int> split_indices(const std::vector<bool>& visible, bool want_visible) {
  std::vector<int> out;
  for (size_t i = 0; i < visible.size(); ++i)
    if (visible[i] == want_visible) out.push_back(static_cast<int>(i));
  return out;
}

// Ground-truth points of each masked group, keyed by the decoder's masked row
// order. Every group holds at least its own center point.
std::vector<std::vector<Vec3>> masked_group_targets(const Cloud& cloud,
                                                    const TokenSet3D& set,
                                                    const std::vector<int>& masked_groups) {
  std::vector<std::vector<Vec3>> per_group(set.centers.size());
  for (size_t i = 0; i < cloud.size(); ++i)
    per_group[set.group_assignment[i]].push_back(cloud[i]);
  std::vector<std::vector<Vec3>> out;
  out.reserve(masked_groups.size());
  for (int g : masked_groups) out.push_back(per_group[g]);
  return out;
}

Tensor constant_points(const Cloud& pts) {
  std::vector<double> flat;
  flat.reserve(pts.size() * 3);
  for (const auto& p : pts)
    for (int a = 0; a < 3; ++a) flat.push_back(p[a]);
  return Tensor::from_values({static_cast<int>(pts.size()), 3}, std::move(flat));
}

}  // namespace

SampleRun run_sample(const Model& m, const RunConfig& cfg, const Cloud& cloud,
                     const ViewSpec& view, uint64_t mask_seed) {
  if (!m.dec.head3d_w.defined())
    throw std::runtime_error("run_sample needs a full model, not the inference subset");
  SampleRun sr;
  sr.map = project_depth(cloud, view);
  sr.plan = make_mask_plan(cfg.mask_ratio, cfg.groups_final, cfg.final_grid(), mask_seed);

  sr.t3 = embed_3d(cloud, m.emb3, m.dims3, sr.plan.mask3d);
  sr.t2 = embed_2d(sr.map, m.emb2, sr.plan.mask2d);

  const VisibleRows v3 = visible_tokens(sr.t3.tokens, sr.t3.visible);
  const VisibleRows v2 = visible_tokens(sr.t2.tokens, sr.t2.visible);
  sr.vis3 = v3.indices;
  sr.vis2 = v2.indices;
  for (int i : sr.vis3) sr.vis_centers.push_back(sr.t3.centers[i]);
  sr.masked3 = split_indices(sr.t3.visible, false);
  sr.masked2 = split_indices(sr.t2.visible, false);
  for (int i : sr.masked3) sr.masked_centers.push_back(sr.t3.centers[i]);

  const AttnScheme scheme{cfg.local_3d_to_2d, cfg.local_2d_to_3d};
  const Validity validity = correlation_mask(sr.vis_centers, sr.vis2, m.grid_w, view, scheme);

  const Tensor pos3 = positional_for_3d(sr.vis_centers, m.pos);
  const Tensor pos2 = positional_for_2d(sr.vis2, m.pos);
  const EncodeResult enc = encode(v3.rows, pos3, v2.rows, pos2, m.enc, validity);

  const DecodedFeatures dec = shared_decode(enc.e3d, sr.vis3, sr.vis_centers, enc.e2d, sr.vis2,
                                            sr.masked3, sr.masked_centers, sr.masked2, m.pos, m.dec);
  const Tensor p3 = specific_decode_3d(dec.d3d, enc.e3d, m.dec);
  const Tensor p2 = specific_decode_2d(dec.d2d, enc.e2d, m.dec);

  sr.pred3 = rec_head_3d(p3, dec.rows3d, sr.t3.centers, m.dec);
  sr.pred2 = rec_head_2d(p2, dec.rows2d, m.dec);
  return sr;
}

ForwardResult pretrain_forward(const Model& m, const RunConfig& cfg, const Cloud& cloud,
                               uint64_t sample_seed) {
  const int h = cfg.image_size, w = cfg.image_size;

  const Cloud aug = augment(cloud, mix_seed(sample_seed, {1}), AugmentConfig{});
  const ViewSpec view = sample_view(mix_seed(sample_seed, {2}), h, w);
  const SampleRun sr = run_sample(m, cfg, aug, view, mix_seed(sample_seed, {3}));
  const DepthMap& map = sr.map;
  const TokenSet3D& t3 = sr.t3;
  const std::vector<int>& masked3 = sr.masked3;
  const Tensor& pred3 = sr.pred3;

  const auto targets = masked_group_targets(aug, t3, masked3);
  const Tensor l3d = cfg.pooled_3d_loss
                         ? loss_3d_pooled(pred3, targets)
                         : loss_3d_grouped(pred3, cfg.points_per_group(), targets);
  const Tensor l2d = loss_2d(sr.pred2, sr.masked2, map, m.grid_w);

  Tensor lcross;
  ForwardResult out;
  if (cfg.cross_views > 0) {
    // reconstructed cloud = predicted masked points plus the visible groups'
    // actual points; only the predictions carry gradient
    Cloud visible_pts;
    for (size_t i = 0; i < aug.size(); ++i)
      if (t3.visible[t3.group_assignment[i]]) visible_pts.push_back(aug[i]);
    Tensor recon = visible_pts.empty()
                       ? pred3
                       : concat({pred3, constant_points(visible_pts)}, 0);
    std::vector<ViewSpec> views{view};
    std::vector<DepthMap> refs{map};
    for (int v = 1; v < cfg.cross_views; ++v) {
      views.push_back(sample_view(mix_seed(sample_seed, {4, static_cast<uint64_t>(v)}), h, w));
      refs.push_back(project_depth(aug, views.back()));
    }
    CrossLossConfig ccfg;
    ccfg.sigma = cfg.sigma;
    ccfg.hardness = cfg.hardness;
    ccfg.foreground_only = cfg.foreground_only;
    lcross = loss_cross(recon, views, refs, ccfg, &out.parts.per_view);
  }

  out.total = overall_loss(l3d, l2d, lcross, {cfg.w3d, cfg.w2d, cfg.wcross});
  out.parts.l3d = l3d.item();
  out.parts.l2d = l2d.item();
  out.parts.lcross = lcross.defined() ? lcross.item() : 0.0;
  out.parts.total = out.total.item();
  return out;
}

std::vector<double> extract_features(const Model& m, const RunConfig& cfg, const Cloud& cloud) {
  const TokenSet3D t3 = embed_3d(cloud, m.emb3, m.dims3, {});
  const Tensor pos3 = positional_for_3d(t3.centers, m.pos);
  Validity all;
  all.n3d = cfg.groups_final;
  all.n2d = 0;
  all.valid.assign(static_cast<size_t>(all.total()) * all.total(), true);
  const EncodeResult enc = encode(t3.tokens, pos3, Tensor(), Tensor(), m.enc, all);
  const Tensor pooled = add(max_over_axis(enc.e3d, 0), mean_over_axis(enc.e3d, 0));
  return pooled.values();
}

}  // namespace jmae
