#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "jmae/tensor.hpp"

namespace jmae {

using Vec3 = std::array<double, 3>;
using Cloud = std::vector<Vec3>;

struct ViewSpec {
  Vec3 eye{0.0, 0.0, 1.4};
  Vec3 target{0.0, 0.0, 0.0};
  Vec3 up{0.0, 1.0, 0.0};
  double focal = 0.0;  // pixels
  int h = 0, w = 0;
  double near_z = 0.05, far_z = 3.25;
};

/// Camera on +z at the canonical 1.4-unit distance. Focal 0.18*min(H,W)
/// puts the [-1,1]^3 cube's silhouette at ~90% of the frame.
ViewSpec default_view(int h, int w);

/// Random view on the 1.4-unit sphere, elevation within +-75 degrees,
/// looking at the origin.
ViewSpec sample_view(uint64_t seed, int h, int w);

struct DepthMap {
  int h = 0, w = 0;
  std::vector<double> values;  // row-major; 0 = background, (0,1] = depth, near = 1

  double at(int r, int c) const { return values[static_cast<size_t>(r) * w + c]; }
  double& at(int r, int c) { return values[static_cast<size_t>(r) * w + c]; }
};

/// Continuous projection of one point. Returns false when the point falls
/// outside [near, far) and writes nothing. u is the column coordinate, v the
/// row; the hit pixel is (lround(v), lround(u)).
bool project_point(const ViewSpec& view, const Vec3& p, double& u, double& v, double& depth);

Cloud normalize_to_cube(const Cloud& raw);

/// Greedy max-min subset; starts at the lexicographically smallest point so
/// tokenization is permutation-invariant, ties at equal distance keep the
/// lowest index.
std::vector<int> farthest_point_sample(const Cloud& cloud, int m);

/// Each row: indices of the k nearest reference points, ordered by
/// (distance, index) ascending.
std::vector<std::vector<int>> knn(const Cloud& queries, const Cloud& reference, int k);

DepthMap project_depth(const Cloud& cloud, const ViewSpec& view);

/// Differentiable projection: per pixel a kernel-weighted, depth-hardness-
/// biased average of contributing points' depths. The spatial kernel matches
/// the Gaussian of width sigma at its center, has support exactly 4 sigma,
/// and is C^7 at the edge; a constant 1e-8 background weight joins every
/// pixel's normalization, so empty pixels return exactly 0 with zero gradient
/// and the map stays smooth in the point coordinates everywhere.
/// points: [N,3] tensor; gradients flow to coordinates of unclipped points.
Tensor soft_project(const Tensor& points, const ViewSpec& view, double sigma, double hardness);

struct AugmentConfig {
  double scale_min = 0.8, scale_max = 1.25;  // per-axis
  bool rotate = true;                        // uniform over SO(3)
  double translate = 0.1;                    // per-axis, uniform in +-translate
  double jitter_sigma = 0.01;
  double jitter_clip = 0.05;
};

inline AugmentConfig identity_augment() { return {1.0, 1.0, false, 0.0, 0.0, 0.0}; }

/// scale -> rotate -> translate -> jitter, then re-clip to the cube.
/// Disabled sub-steps draw nothing, so the identity config is bit-exact.
Cloud augment(const Cloud& cloud, uint64_t seed, const AugmentConfig& cfg);

Cloud load_xyz(const std::string& file);
Cloud load_off(const std::string& file);
///// Picks the parser by content: an OFF header, else XYZ lines.
Cloud load_cloud(const std::string& file);
void save_xyz(const Cloud& cloud, const std::string& file);

/// Plain PGM (P2), values scaled to 0-65535.
void save_pgm(const DepthMap& map, const std::string& file);

}  // namespace jmae
