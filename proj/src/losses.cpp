#include "jmae/losses.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace jmae {

namespace {

// nearest index in flat [K,3] values for each row of [M,3]; ties keep the
// lowest index
std::vector<int> nearest_index(const std::vector<double>& a, int m, const std::vector<double>& b,
                               int k) {
  std::vector<int> nn(m);
  for (int i = 0; i < m; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int bj = 0;
    for (int j = 0; j < k; ++j) {
      double d = 0.0;
      for (int x = 0; x < 3; ++x) {
        const double t = a[i * 3 + x] - b[j * 3 + x];
        d += t * t;
      }
      if (d < best) {
        best = d;
        bj = j;
      }
    }
    nn[i] = bj;
  }
  return nn;
}

Tensor cloud_tensor(const std::vector<Vec3>& pts) {
  std::vector<double> flat;
  flat.reserve(pts.size() * 3);
  for (const auto& p : pts)
    for (int a = 0; a < 3; ++a) flat.push_back(p[a]);
  return Tensor::from_values({static_cast<int>(pts.size()), 3}, std::move(flat));
}

}  // namespace

Tensor chamfer_l2(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || a.dim(1) != 3 || b.rank() != 2 || b.dim(1) != 3)
    throw std::runtime_error("chamfer_l2: point sets must be [*,3]");
  const int m = a.dim(0), k = b.dim(0);
  const auto& av = a.values();
  const auto& bv = b.values();
  const std::vector<int> nn_ab = nearest_index(av, m, bv, k);
  const std::vector<int> nn_ba = nearest_index(bv, k, av, m);
  double term_a = 0.0, term_b = 0.0;
  for (int i = 0; i < m; ++i)
    for (int x = 0; x < 3; ++x) {
      const double d = av[i * 3 + x] - bv[nn_ab[i] * 3 + x];
      term_a += d * d;
    }
  for (int j = 0; j < k; ++j)
    for (int x = 0; x < 3; ++x) {
      const double d = bv[j * 3 + x] - av[nn_ba[j] * 3 + x];
      term_b += d * d;
    }
  const double value = term_a / m + term_b / k;
  return custom_op("chamfer_l2", {1}, {value}, {a, b},
                   [m, k, nn_ab, nn_ba](detail::Node& self) {
                     auto& pa = *self.parents[0];
                     auto& pb = *self.parents[1];
                     const double g = self.grad[0];
                     for (int i = 0; i < m; ++i)
                       for (int x = 0; x < 3; ++x) {
                         const double d = pa.values[i * 3 + x] - pb.values[nn_ab[i] * 3 + x];
                         if (pa.requires_grad) pa.grad[i * 3 + x] += g * 2.0 * d / m;
                         if (pb.requires_grad) pb.grad[nn_ab[i] * 3 + x] -= g * 2.0 * d / m;
                       }
                     for (int j = 0; j < k; ++j)
                       for (int x = 0; x < 3; ++x) {
                         const double d = pb.values[j * 3 + x] - pa.values[nn_ba[j] * 3 + x];
                         if (pb.requires_grad) pb.grad[j * 3 + x] += g * 2.0 * d / k;
                         if (pa.requires_grad) pa.grad[nn_ba[j] * 3 + x] -= g * 2.0 * d / k;
                       }
                   });
}

Tensor loss_3d_grouped(const Tensor& pred, int s, const std::vector<std::vector<Vec3>>& targets) {
  const int groups = static_cast<int>(targets.size());
  if (groups == 0) throw std::runtime_error("loss_3d: no masked groups");
  if (pred.dim(0) != groups * s)
    throw std::runtime_error("loss_3d: prediction rows do not match groups*s");
  Tensor acc;
  for (int gi = 0; gi < groups; ++gi) {
    if (targets[gi].empty()) throw std::runtime_error("loss_3d: empty target group");
    Tensor term = chamfer_l2(slice(pred, 0, gi * s, s), cloud_tensor(targets[gi]));
    acc = acc.defined() ? add(acc, term) : term;
  }
  return scalar_mul(acc, 1.0 / groups);
}

Tensor loss_3d_pooled(const Tensor& pred, const std::vector<std::vector<Vec3>>& targets) {
  std::vector<Vec3> pooled;
  for (const auto& g : targets) pooled.insert(pooled.end(), g.begin(), g.end());
  if (pooled.empty()) throw std::runtime_error("loss_3d: no target points");
  return chamfer_l2(pred, cloud_tensor(pooled));
}

Tensor loss_2d(const Tensor& pred, const std::vector<int>& cells, const DepthMap& gt,
               int grid_w) {
  const int m = static_cast<int>(cells.size());
  if (pred.dim(0) != m || pred.dim(1) != 256)
    throw std::runtime_error("loss_2d: prediction must be [masked,256]");
  const int grid_h = gt.h / 16;
  std::vector<double> target(static_cast<size_t>(m) * 256);
  for (int t = 0; t < m; ++t) {
    if (cells[t] < 0 || cells[t] >= grid_h * grid_w)
      throw std::runtime_error("loss_2d: cell index " + std::to_string(cells[t]) +
                               " outside the " + std::to_string(grid_h) + "x" +
                               std::to_string(grid_w) + " grid");
    const int cr = cells[t] / grid_w, cc = cells[t] % grid_w;
    for (int i = 0; i < 16; ++i)
      for (int j = 0; j < 16; ++j)
        target[static_cast<size_t>(t) * 256 + i * 16 + j] = gt.at(cr * 16 + i, cc * 16 + j);
  }
  return squared_error_reduce(pred, Tensor::from_values({m, 256}, std::move(target)));
}

Tensor loss_cross(const Tensor& recon, const std::vector<ViewSpec>& views,
                  const std::vector<DepthMap>& refs, const CrossLossConfig& cfg,
                  std::vector<double>* per_view) {
  if (views.empty() || views.size() != refs.size())
    throw std::runtime_error("loss_cross: need matching non-empty views and references");
  Tensor acc;
  for (size_t v = 0; v < views.size(); ++v) {
    Tensor soft = soft_project(recon, views[v], cfg.sigma, cfg.hardness);
    Tensor ref = Tensor::from_values({refs[v].h, refs[v].w}, refs[v].values);
    Tensor term;
    if (cfg.foreground_only) {
      int fg = 0;
      std::vector<double> keep(refs[v].values.size(), 0.0);
      for (size_t i = 0; i < keep.size(); ++i)
        if (refs[v].values[i] > 0.0) {
          keep[i] = 1.0;
          ++fg;
        }
      if (fg == 0) throw std::runtime_error("loss_cross: reference view has no foreground");
      Tensor diff = mul(sub(soft, ref), Tensor::from_values({refs[v].h, refs[v].w}, std::move(keep)));
      term = scalar_mul(sum_all(mul(diff, diff)), 1.0 / fg);
    } else {
      term = squared_error_reduce(soft, ref);
    }
    if (per_view) per_view->push_back(term.item());
    acc = acc.defined() ? add(acc, term) : term;
  }
  return scalar_mul(acc, 1.0 / static_cast<double>(views.size()));
}

Tensor overall_loss(const Tensor& l3d, const Tensor& l2d, const Tensor& lcross,
                    const LossWeights& w) {
  auto weighted = [](const Tensor& t, double wt) {
    if (!t.defined()) return Tensor();
    return wt == 1.0 ? t : scalar_mul(t, wt);  // keep the default-sum exact
  };
  Tensor total;
  for (const Tensor& part : {weighted(l3d, w.w3d), weighted(l2d, w.w2d), weighted(lcross, w.wcross)}) {
    if (!part.defined()) continue;
    total = total.defined() ? add(total, part) : part;
  }
  if (!total.defined()) throw std::runtime_error("overall_loss: no terms");
  return total;
}

}  // namespace jmae
