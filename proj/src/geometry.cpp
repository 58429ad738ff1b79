#include "jmae/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "jmae/rng.hpp"

namespace jmae {

namespace {

constexpr double kPi = 3.14159265358979323846;

Vec3 vsub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
double vdot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Vec3 vcross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
Vec3 vnorm(const Vec3& a) {
  const double n = std::sqrt(vdot(a, a));
  if (n < 1e-12) throw std::runtime_error("degenerate direction vector");
  return {a[0] / n, a[1] / n, a[2] / n};
}

struct CameraBasis {
  Vec3 fwd, right, upv;
};

CameraBasis basis_of(const ViewSpec& view) {
  const Vec3 fwd = vnorm(vsub(view.target, view.eye));
  const Vec3 right = vnorm(vcross(fwd, view.up));
  const Vec3 upv = vcross(right, fwd);
  return {fwd, right, upv};
}

double sq_dist(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace

ViewSpec default_view(int h, int w) {
  ViewSpec v;
  v.h = h;
  v.w = w;
  v.focal = 0.18 * std::min(h, w);
  return v;
}

ViewSpec sample_view(uint64_t seed, int h, int w) {
  Rng rng(seed);
  const double azimuth = rng.uniform(0.0, 2.0 * kPi);
  const double sin_lim = std::sin(75.0 / 180.0 * kPi);
  const double sin_elev = rng.uniform(-sin_lim, sin_lim);
  const double cos_elev = std::sqrt(1.0 - sin_elev * sin_elev);
  ViewSpec v = default_view(h, w);
  v.eye = {1.4 * cos_elev * std::cos(azimuth), 1.4 * sin_elev, 1.4 * cos_elev * std::sin(azimuth)};
  return v;
}

bool project_point(const ViewSpec& view, const Vec3& p, double& u, double& v, double& depth) {
  const CameraBasis cb = basis_of(view);
  const Vec3 rel = vsub(p, view.eye);
  const double zc = vdot(rel, cb.fwd);
  if (zc < view.near_z || zc >= view.far_z) return false;
  const double xc = vdot(rel, cb.right);
  const double yc = vdot(rel, cb.upv);
  u = (view.w - 1) * 0.5 + view.focal * xc / zc;
  v = (view.h - 1) * 0.5 - view.focal * yc / zc;
  depth = (view.far_z - zc) / (view.far_z - view.near_z);
  return true;
}

Cloud normalize_to_cube(const Cloud& raw) {
  if (raw.empty()) throw std::runtime_error("normalize_to_cube: empty cloud");
  Vec3 centroid{0, 0, 0};
  for (const auto& p : raw)
    for (int a = 0; a < 3; ++a) centroid[a] += p[a];
  for (int a = 0; a < 3; ++a) centroid[a] /= static_cast<double>(raw.size());
  double extent = 0.0;
  Cloud out(raw.size());
  for (size_t i = 0; i < raw.size(); ++i)
    for (int a = 0; a < 3; ++a) {
      out[i][a] = raw[i][a] - centroid[a];
      extent = std::max(extent, std::abs(out[i][a]));
    }
  if (extent < 1e-12) throw std::runtime_error("normalize_to_cube: degenerate cloud");
  for (auto& p : out)
    for (int a = 0; a < 3; ++a) p[a] /= extent;
  return out;
}

std::vector<int> farthest_point_sample(const Cloud& cloud, int m) {
  const int n = static_cast<int>(cloud.size());
  if (m < 1 || m > n)
    throw std::runtime_error("farthest_point_sample: m=" + std::to_string(m) + " with n=" +
                             std::to_string(n));
  int start = 0;
  for (int i = 1; i < n; ++i)
    if (cloud[i] < cloud[start]) start = i;

  std::vector<int> picks{start};
  std::vector<double> min_d(n);
  for (int i = 0; i < n; ++i) min_d[i] = sq_dist(cloud[i], cloud[start]);
  while (static_cast<int>(picks.size()) < m) {
    int best = 0;
    for (int i = 1; i < n; ++i)
      if (min_d[i] > min_d[best]) best = i;
    picks.push_back(best);
    for (int i = 0; i < n; ++i) min_d[i] = std::min(min_d[i], sq_dist(cloud[i], cloud[best]));
  }
  return picks;
}

std::vector<std::vector<int>> knn(const Cloud& queries, const Cloud& reference, int k) {
  const int n = static_cast<int>(reference.size());
  if (k < 1 || k > n)
    throw std::runtime_error("knn: k=" + std::to_string(k) + " with n=" + std::to_string(n));
  std::vector<std::vector<int>> rows(queries.size());
  std::vector<std::pair<double, int>> dist(n);
  for (size_t q = 0; q < queries.size(); ++q) {
    for (int i = 0; i < n; ++i) dist[i] = {sq_dist(queries[q], reference[i]), i};
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    rows[q].resize(k);
    for (int j = 0; j < k; ++j) rows[q][j] = dist[j].second;
  }
  return rows;
}

DepthMap project_depth(const Cloud& cloud, const ViewSpec& view) {
  DepthMap map;
  map.h = view.h;
  map.w = view.w;
  map.values.assign(static_cast<size_t>(view.h) * view.w, 0.0);
  for (const auto& p : cloud) {
    double u, v, d;
    if (!project_point(view, p, u, v, d)) continue;
    const long c = std::lround(u), r = std::lround(v);
    if (c < 0 || c >= view.w || r < 0 || r >= view.h) continue;
    double& cell = map.at(static_cast<int>(r), static_cast<int>(c));
    if (d > cell) cell = d;  // strict: depth ties keep the earliest point
  }
  return map;
}

Tensor soft_project(const Tensor& points, const ViewSpec& view, double sigma, double hardness) {
  if (points.rank() != 2 || points.dim(1) != 3)
    throw std::runtime_error("soft_project: points must be [N,3], got " +
                             shape_str(points.shape()));
  if (sigma <= 0.0) throw std::runtime_error("soft_project: sigma must be positive");
  const int n = points.dim(0);
  const int h = view.h, w = view.w;
  const CameraBasis cb = basis_of(view);
  const double reach = 4.0 * sigma;
  // spatial kernel (1 - rho^2/reach^2)^8: curvature-matched to the Gaussian
  // exp(-rho^2/(2 sigma^2)) at the center, support exactly rho < 4 sigma, and
  // C^7 at the support edge, which keeps the rendered map smooth in the point
  // coordinates everywhere a finite-difference probe can land
  const double inv_r2 = 1.0 / (reach * reach);
  // constant background weight in every pixel's normalization: empty pixels
  // return exactly 0 and near-empty ones fade to it smoothly instead of
  // snapping at a weight floor
  constexpr double kBackgroundWeight = 1e-8;

  struct Proj {
    bool ok;
    double u, v, d;
  };
  std::vector<Proj> proj(n);
  for (int i = 0; i < n; ++i) {
    const Vec3 p{points.values()[i * 3], points.values()[i * 3 + 1], points.values()[i * 3 + 2]};
    proj[i].ok = project_point(view, p, proj[i].u, proj[i].v, proj[i].d);
  }

  std::vector<double> wsum(static_cast<size_t>(h) * w, 0.0);
  std::vector<double> dsum(static_cast<size_t>(h) * w, 0.0);
  // hands the callback the edge factor t = 1 - rho^2/reach^2 and the depth
  // hardness factor; weight = t^8 * hfac, d(weight)/d(rho^2) = -8 t^7 hfac / reach^2
  auto for_each_pixel_near = [w, h, reach, inv_r2, hardness](const Proj& pr, auto&& fn) {
    const int c0 = std::max(0, static_cast<int>(std::ceil(pr.u - reach)));
    const int c1 = std::min(w - 1, static_cast<int>(std::floor(pr.u + reach)));
    const int r0 = std::max(0, static_cast<int>(std::ceil(pr.v - reach)));
    const int r1 = std::min(h - 1, static_cast<int>(std::floor(pr.v + reach)));
    const double hfac = std::exp(hardness * pr.d);
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c) {
        const double du = pr.u - c, dv = pr.v - r;
        const double t = 1.0 - (du * du + dv * dv) * inv_r2;
        if (t <= 0.0) continue;
        fn(r, c, du, dv, t, hfac);
      }
  };
  auto pow8 = [](double t) {
    const double t2 = t * t, t4 = t2 * t2;
    return t4 * t4;
  };
  for (int i = 0; i < n; ++i) {
    if (!proj[i].ok) continue;
    for_each_pixel_near(proj[i], [&](int r, int c, double, double, double t, double hfac) {
      const double wt = pow8(t) * hfac;
      wsum[static_cast<size_t>(r) * w + c] += wt;
      dsum[static_cast<size_t>(r) * w + c] += wt * proj[i].d;
    });
  }
  std::vector<double> out(wsum.size(), 0.0);
  for (size_t q = 0; q < out.size(); ++q) out[q] = dsum[q] / (wsum[q] + kBackgroundWeight);

  const double inv_range = 1.0 / (view.far_z - view.near_z);
  return custom_op(
      "soft_project", {h, w}, std::move(out), {points},
      [n, h, w, cb, view, inv_r2, hardness, inv_range, proj = std::move(proj),
       wsum = std::move(wsum), for_each_pixel_near, pow8](detail::Node& self) {
        auto& pts = *self.parents[0];
        for (int i = 0; i < n; ++i) {
          if (!proj[i].ok) continue;  // clipped points stay gradient-free
          const Vec3 p{pts.values[i * 3], pts.values[i * 3 + 1], pts.values[i * 3 + 2]};
          const Vec3 rel = vsub(p, view.eye);
          const double zc = vdot(rel, cb.fwd);
          const double xc = vdot(rel, cb.right);
          const double yc = vdot(rel, cb.upv);
          // du/dp, dv/dp, dd/dp of the pinhole map
          Vec3 du_dp, dv_dp, dd_dp;
          for (int a = 0; a < 3; ++a) {
            du_dp[a] = view.focal * (cb.right[a] * zc - xc * cb.fwd[a]) / (zc * zc);
            dv_dp[a] = -view.focal * (cb.upv[a] * zc - yc * cb.fwd[a]) / (zc * zc);
            dd_dp[a] = -cb.fwd[a] * inv_range;
          }
          double gu = 0.0, gv = 0.0, gd = 0.0;
          for_each_pixel_near(proj[i], [&](int r, int c, double du, double dv, double t,
                                           double hfac) {
            const size_t q = static_cast<size_t>(r) * w + c;
            const double gout = self.grad[q];
            if (gout == 0.0) return;
            const double wt = pow8(t) * hfac;
            const double denom = wsum[q] + 1e-8;
            const double pix = self.values[q];
            const double common = gout * (proj[i].d - pix) / denom;
            // dw/du_i = -16 t^7 hfac (u_i - c) / reach^2
            const double dw_scale = 16.0 * (pow8(t) / t) * hfac * inv_r2;
            gu += common * (-dw_scale * du);
            gv += common * (-dw_scale * dv);
            gd += gout * wt * (1.0 + hardness * (proj[i].d - pix)) / denom;
          });
          for (int a = 0; a < 3; ++a)
            pts.grad[i * 3 + a] += gu * du_dp[a] + gv * dv_dp[a] + gd * dd_dp[a];
        }
      });
}

Cloud augment(const Cloud& cloud, uint64_t seed, const AugmentConfig& cfg) {
  Cloud out = cloud;
  if (cfg.scale_min != 1.0 || cfg.scale_max != 1.0) {
    Rng rng(mix_seed(seed, {1}));
    Vec3 s;
    for (int a = 0; a < 3; ++a) s[a] = rng.uniform(cfg.scale_min, cfg.scale_max);
    for (auto& p : out)
      for (int a = 0; a < 3; ++a) p[a] *= s[a];
  }
  if (cfg.rotate) {
    Rng rng(mix_seed(seed, {2}));
    // uniform quaternion (Shoemake)
    const double u1 = rng.uniform01(), u2 = rng.uniform01(), u3 = rng.uniform01();
    const double qx = std::sqrt(1.0 - u1) * std::sin(2.0 * kPi * u2);
    const double qy = std::sqrt(1.0 - u1) * std::cos(2.0 * kPi * u2);
    const double qz = std::sqrt(u1) * std::sin(2.0 * kPi * u3);
    const double qw = std::sqrt(u1) * std::cos(2.0 * kPi * u3);
    const double m[3][3] = {
        {1 - 2 * (qy * qy + qz * qz), 2 * (qx * qy - qz * qw), 2 * (qx * qz + qy * qw)},
        {2 * (qx * qy + qz * qw), 1 - 2 * (qx * qx + qz * qz), 2 * (qy * qz - qx * qw)},
        {2 * (qx * qz - qy * qw), 2 * (qy * qz + qx * qw), 1 - 2 * (qx * qx + qy * qy)}};
    for (auto& p : out) {
      const Vec3 q = p;
      for (int a = 0; a < 3; ++a) p[a] = m[a][0] * q[0] + m[a][1] * q[1] + m[a][2] * q[2];
    }
  }
  if (cfg.translate != 0.0) {
    Rng rng(mix_seed(seed, {3}));
    Vec3 t;
    for (int a = 0; a < 3; ++a) t[a] = rng.uniform(-cfg.translate, cfg.translate);
    for (auto& p : out)
      for (int a = 0; a < 3; ++a) p[a] += t[a];
  }
  if (cfg.jitter_sigma != 0.0) {
    Rng rng(mix_seed(seed, {4}));
    for (auto& p : out)
      for (int a = 0; a < 3; ++a)
        p[a] += std::clamp(cfg.jitter_sigma * rng.normal(), -cfg.jitter_clip, cfg.jitter_clip);
  }
  // any step can push points past the cube; clip back
  if (cfg.scale_min != 1.0 || cfg.scale_max != 1.0 || cfg.rotate || cfg.translate != 0.0 ||
      cfg.jitter_sigma != 0.0)
    for (auto& p : out)
      for (int a = 0; a < 3; ++a) p[a] = std::clamp(p[a], -1.0, 1.0);
  return out;
}

Cloud load_xyz(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open point file: " + file);
  Cloud cloud;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    Vec3 p;
    if (!(ls >> p[0] >> p[1] >> p[2])) {
      std::string probe;
      std::istringstream check(line);
      if (check >> probe) throw std::runtime_error("bad XYZ line in " + file + ": " + line);
      continue;  // blank line
    }
    cloud.push_back(p);
  }
  if (cloud.empty()) throw std::runtime_error("no points in " + file);
  return cloud;
}

Cloud load_off(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open point file: " + file);
  std::string magic;
  in >> magic;
  if (magic != "OFF") throw std::runtime_error("not an OFF file: " + file);
  long nv = 0, nf = 0, ne = 0;
  if (!(in >> nv >> nf >> ne) || nv < 1) throw std::runtime_error("bad OFF counts in " + file);
  Cloud cloud(nv);
  for (long i = 0; i < nv; ++i)
    if (!(in >> cloud[i][0] >> cloud[i][1] >> cloud[i][2]))
      throw std::runtime_error("truncated OFF vertices in " + file);
  return cloud;  // faces ignored: only the vertex set matters here
}

Cloud load_cloud(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open point file: " + file);
  std::string magic;
  in >> magic;
  return magic == "OFF" ? load_off(file) : load_xyz(file);
}

void save_xyz(const Cloud& cloud, const std::string& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file);
  out.precision(9);
  for (const auto& p : cloud) out << p[0] << ' ' << p[1] << ' ' << p[2] << '\n';
  if (!out) throw std::runtime_error("write failed: " + file);
}

void save_pgm(const DepthMap& map, const std::string& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file);
  out << "P2\n" << map.w << ' ' << map.h << "\n65535\n";
  for (int r = 0; r < map.h; ++r) {
    for (int c = 0; c < map.w; ++c) {
      const double v = std::clamp(map.at(r, c), 0.0, 1.0);
      out << static_cast<long>(std::lround(v * 65535.0)) << (c + 1 == map.w ? '\n' : ' ');
    }
  }
  if (!out) throw std::runtime_error("write failed: " + file);
}

}  // namespace jmae
