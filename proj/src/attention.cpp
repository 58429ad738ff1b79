#include "jmae/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace jmae {

Validity correlation_mask(const std::vector<Vec3>& centers3d, const std::vector<int>& cells2d,
                          int grid_w, const ViewSpec& view, const AttnScheme& scheme) {
  Validity out;
  out.n3d = static_cast<int>(centers3d.size());
  out.n2d = static_cast<int>(cells2d.size());
  const int t = out.total();
  out.valid.assign(static_cast<size_t>(t) * t, true);

  if (out.n2d == 0 || (!scheme.local_3d_to_2d && !scheme.local_2d_to_3d)) return out;

  for (int g = 0; g < out.n3d; ++g) {
    double u, v, d;
    const bool in = project_point(view, centers3d[g], u, v, d);
    const long pc = in ? std::lround(u) : -1;
    const long pr = in ? std::lround(v) : -1;
    const bool on_image = in && pc >= 0 && pc < view.w && pr >= 0 && pr < view.h;
    for (int tt = 0; tt < out.n2d; ++tt) {
      const int cell = cells2d[tt];
      const int cr = cell / grid_w, cc = cell % grid_w;
      const bool correlated = on_image && pr >= 16L * cr && pr < 16L * (cr + 1) &&
                              pc >= 16L * cc && pc < 16L * (cc + 1);
      if (scheme.local_3d_to_2d && !correlated)
        out.valid[static_cast<size_t>(g) * t + (out.n3d + tt)] = false;
      if (scheme.local_2d_to_3d && !correlated)
        out.valid[static_cast<size_t>(out.n3d + tt) * t + g] = false;
    }
  }
  return out;
}

BlockParams make_block_params(ParameterTree& pt, const std::string& prefix, int c) {
  BlockParams p;
  auto ones = std::vector<double>(c, 1.0);
  p.ln1_g = pt.add_values(prefix + ".ln1.g", {c}, ones);
  p.ln1_b = pt.add_zeros(prefix + ".ln1.b", {c});
  p.wq = pt.add_fan_in(prefix + ".attn.wq", {c, c}, c);
  p.bq = pt.add_zeros(prefix + ".attn.bq", {c});
  p.wk = pt.add_fan_in(prefix + ".attn.wk", {c, c}, c);
  p.bk = pt.add_zeros(prefix + ".attn.bk", {c});
  p.wv = pt.add_fan_in(prefix + ".attn.wv", {c, c}, c);
  p.bv = pt.add_zeros(prefix + ".attn.bv", {c});
  p.wo = pt.add_fan_in(prefix + ".attn.wo", {c, c}, c);
  p.bo = pt.add_zeros(prefix + ".attn.bo", {c});
  p.ln2_g = pt.add_values(prefix + ".ln2.g", {c}, ones);
  p.ln2_b = pt.add_zeros(prefix + ".ln2.b", {c});
  p.mlp1_w = pt.add_fan_in(prefix + ".mlp.w1", {c, 4 * c}, c);
  p.mlp1_b = pt.add_zeros(prefix + ".mlp.b1", {4 * c});
  p.mlp2_w = pt.add_fan_in(prefix + ".mlp.w2", {4 * c, c}, 4 * c);
  p.mlp2_b = pt.add_zeros(prefix + ".mlp.b2", {c});
  return p;
}

namespace {

Tensor validity_to_additive(const Validity& v, int tq, int tk) {
  std::vector<double> add(static_cast<size_t>(tq) * tk, 0.0);
  for (int q = 0; q < tq; ++q)
    for (int k = 0; k < tk; ++k)
      if (!v.at(q, k)) add[static_cast<size_t>(q) * tk + k] = -1e9;
  return Tensor::from_values({tq, tk}, std::move(add));
}

// Multi-head attention core. q_src feeds Q; kv_src feeds K and V. Returns the
// output projection applied to the concatenated head outputs.
Tensor attend(const Tensor& q_src, const Tensor& kv_src, const BlockParams& p, int heads,
              const Validity* validity, AttnTrace* trace) {
  const int c = q_src.dim(1);
  if (c % heads != 0)
    throw std::runtime_error("attention: width " + std::to_string(c) +
                             " not divisible by heads " + std::to_string(heads));
  const int dh = c / heads;
  const int tq = q_src.dim(0), tk = kv_src.dim(0);
  Tensor q = linear(q_src, p.wq, p.bq);
  Tensor k = linear(kv_src, p.wk, p.bk);
  Tensor v = linear(kv_src, p.wv, p.bv);
  Tensor add_mask;
  if (validity) {
    if (validity->total() != tq || tq != tk)
      throw std::runtime_error("attention: validity size mismatch");
    add_mask = validity_to_additive(*validity, tq, tk);
  }
  if (trace) trace->values = v.values();

  std::vector<Tensor> head_out;
  head_out.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice(q, 1, h * dh, dh);
    Tensor kh = slice(k, 1, h * dh, dh);
    Tensor vh = slice(v, 1, h * dh, dh);
    Tensor scores = scalar_mul(matmul(qh, transpose(kh)), 1.0 / std::sqrt(double(dh)));
    Tensor w = softmax_masked(scores, add_mask);
    if (trace) trace->head_weights.push_back(w.values());
    head_out.push_back(matmul(w, vh));
  }
  Tensor attended = heads == 1 ? head_out[0] : concat(head_out, 1);
  if (trace) trace->attended = attended.values();
  return linear(attended, p.wo, p.bo);
}

Tensor mlp_half(const Tensor& x, const BlockParams& p) {
  Tensor h = gelu(linear(layer_norm(x, p.ln2_g, p.ln2_b), p.mlp1_w, p.mlp1_b));
  return add(x, linear(h, p.mlp2_w, p.mlp2_b));
}

}  // namespace

Tensor transformer_block(const Tensor& x, const BlockParams& p, int heads,
                         const Validity* validity, AttnTrace* trace) {
  Tensor xn = layer_norm(x, p.ln1_g, p.ln1_b);
  Tensor y = add(x, attend(xn, xn, p, heads, validity, trace));
  return mlp_half(y, p);
}

Tensor cross_block(const Tensor& x, const Tensor& kv, const BlockParams& p, int heads,
                   AttnTrace* trace) {
  Tensor qn = layer_norm(x, p.ln1_g, p.ln1_b);
  Tensor y = add(x, attend(qn, kv, p, heads, nullptr, trace));
  return mlp_half(y, p);
}

std::vector<double> sincos_grid(int grid_h, int grid_w, int c) {
  if (c % 4 != 0) throw std::runtime_error("sincos table needs width divisible by 4");
  const int half = c / 2, quarter = c / 4;
  std::vector<double> table(static_cast<size_t>(grid_h) * grid_w * c);
  for (int r = 0; r < grid_h; ++r)
    for (int col = 0; col < grid_w; ++col) {
      double* row = &table[(static_cast<size_t>(r) * grid_w + col) * c];
      for (int i = 0; i < quarter; ++i) {
        const double omega = std::pow(10000.0, -2.0 * i / half);
        row[2 * i] = std::sin(r * omega);
        row[2 * i + 1] = std::cos(r * omega);
        row[half + 2 * i] = std::sin(col * omega);
        row[half + 2 * i + 1] = std::cos(col * omega);
      }
    }
  return table;
}

PosEnc make_pos_enc(ParameterTree& pt, const std::string& prefix, int grid_h, int grid_w, int c,
                    bool with_2d) {
  PosEnc p;
  if (with_2d)
    p.pe2d = pt.add_values(prefix + ".pe2d", {grid_h * grid_w, c}, sincos_grid(grid_h, grid_w, c));
  p.mlp1_w = pt.add_fan_in(prefix + ".pe3d.w1", {3, c / 2}, 3);
  p.mlp1_b = pt.add_zeros(prefix + ".pe3d.b1", {c / 2});
  p.mlp2_w = pt.add_fan_in(prefix + ".pe3d.w2", {c / 2, c}, c / 2);
  p.mlp2_b = pt.add_zeros(prefix + ".pe3d.b2", {c});
  return p;
}

Tensor positional_for_3d(const std::vector<Vec3>& coords, const PosEnc& p) {
  if (coords.empty()) throw std::runtime_error("positional_for_3d: no coordinates");
  std::vector<double> flat;
  flat.reserve(coords.size() * 3);
  for (const auto& v : coords)
    for (int a = 0; a < 3; ++a) flat.push_back(v[a]);
  Tensor x = Tensor::from_values({static_cast<int>(coords.size()), 3}, std::move(flat));
  return linear(gelu(linear(x, p.mlp1_w, p.mlp1_b)), p.mlp2_w, p.mlp2_b);
}

Tensor positional_for_2d(const std::vector<int>& cells, const PosEnc& p) {
  return gather_rows(p.pe2d, cells);
}

EncoderParams make_encoder_params(ParameterTree& pt, const std::string& prefix, int num_blocks,
                                  int c, int heads, bool with_2d) {
  EncoderParams p;
  p.heads = heads;
  for (int b = 0; b < num_blocks; ++b)
    p.blocks.push_back(make_block_params(pt, prefix + ".block" + std::to_string(b), c));
  p.m3d = pt.add_normal(prefix + ".m3d", {1, c}, 0.02);
  if (with_2d) p.m2d = pt.add_normal(prefix + ".m2d", {1, c}, 0.02);
  return p;
}

EncodeResult encode(const Tensor& vis3d, const Tensor& pos3d, const Tensor& vis2d,
                    const Tensor& pos2d, const EncoderParams& p, const Validity& validity,
                    std::vector<AttnTrace>* traces) {
  const int n3 = vis3d.dim(0);
  const int n2 = vis2d.defined() ? vis2d.dim(0) : 0;
  if (validity.n3d != n3 || validity.n2d != n2)
    throw std::runtime_error("encode: validity does not match token counts");
  if (vis2d.defined() && vis2d.dim(1) != vis3d.dim(1))
    throw std::runtime_error("encode: modality width mismatch");

  Tensor x3 = add(add(vis3d, pos3d), broadcast_rows(p.m3d, n3));
  Tensor x;
  if (n2 > 0) {
    Tensor x2 = add(add(vis2d, pos2d), broadcast_rows(p.m2d, n2));
    x = concat({x3, x2}, 0);
  } else {
    x = x3;
  }
  for (size_t b = 0; b < p.blocks.size(); ++b) {
    AttnTrace* tr = nullptr;
    if (traces) {
      traces->emplace_back();
      tr = &traces->back();
    }
    x = transformer_block(x, p.blocks[b], p.heads, &validity, tr);
  }
  EncodeResult out;
  out.joint = x;
  out.e3d = n2 > 0 ? slice(x, 0, 0, n3) : x;
  if (n2 > 0) out.e2d = slice(x, 0, n3, n2);
  return out;
}

}  // namespace jmae
