#pragma once

#include <vector>

#include "jmae/geometry.hpp"
#include "jmae/tensor.hpp"

namespace jmae {

/// Symmetric mean-of-squared-nearest-distances between two point sets, with
/// gradients into both. [M,3] x [K,3] -> scalar.
Tensor chamfer_l2(const Tensor& a, const Tensor& b);

/// Mean over masked groups of the per-group chamfer between predicted and
/// target points. pred holds the groups back to back, `s` points each.
Tensor loss_3d_grouped(const Tensor& pred, int s, const std::vector<std::vector<Vec3>>& targets);

/// Chamfer over the pooled prediction vs pooled target cloud (the flag-enabled
/// alternative reading).
Tensor loss_3d_pooled(const Tensor& pred, const std::vector<std::vector<Vec3>>& targets);

/// MSE over masked pixels. pred: [M,256] patches; cells: final-grid indices.
Tensor loss_2d(const Tensor& pred, const std::vector<int>& cells, const DepthMap& gt, int grid_w);

struct CrossLossConfig {
  double sigma = 1.0;
  double hardness = 5.0;
  bool foreground_only = false;
};

/// Mean over views of MSE(soft_project(recon, view), reference map). The
/// caller pairs each view with its reference (view 0: the input map; extra
/// views: hard projections of the ground truth).
Tensor loss_cross(const Tensor& recon, const std::vector<ViewSpec>& views,
                  const std::vector<DepthMap>& refs, const CrossLossConfig& cfg,
                  std::vector<double>* per_view = nullptr);

struct LossBreakdown {
  double l3d = 0.0, l2d = 0.0, lcross = 0.0, total = 0.0;
  std::vector<double> per_view;
};

struct LossWeights {
  double w3d = 1.0, w2d = 1.0, wcross = 1.0;
};

/// total = w3d*l3d + w2d*l2d + wcross*lcross; exact unweighted sum at the
/// defaults. Undefined terms count as zero.
Tensor overall_loss(const Tensor& l3d, const Tensor& l2d, const Tensor& lcross,
                    const LossWeights& w);

}  // namespace jmae
