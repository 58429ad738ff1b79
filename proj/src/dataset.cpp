#include "jmae/dataset.hpp"

#include <cmath>
#include <stdexcept>

#include "jmae/rng.hpp"

namespace jmae {

namespace {

constexpr double kPi = 3.14159265358979323846;

Vec3 sphere_point(Rng& rng) {
  // normalized Gaussian triple is uniform on the sphere
  while (true) {
    Vec3 p{rng.normal(), rng.normal(), rng.normal()};
    const double n = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    if (n > 1e-9) return {p[0] / n, p[1] / n, p[2] / n};
  }
}

Vec3 cube_point(Rng& rng) {
  const int face = rng.uniform_int(6);
  const double a = rng.uniform(-1.0, 1.0), b = rng.uniform(-1.0, 1.0);
  const double s = (face % 2 == 0) ? 1.0 : -1.0;
  switch (face / 2) {
    case 0: return {s, a, b};
    case 1: return {a, s, b};
    default: return {a, b, s};
  }
}

Vec3 cylinder_point(Rng& rng) {
  // radius 1, z in [-1,1]: side area 4*pi vs cap area 2*pi
  const double pick = rng.uniform01();
  const double theta = rng.uniform(0.0, 2.0 * kPi);
  if (pick < 2.0 / 3.0) return {std::cos(theta), std::sin(theta), rng.uniform(-1.0, 1.0)};
  const double r = std::sqrt(rng.uniform01());
  const double z = pick < 5.0 / 6.0 ? 1.0 : -1.0;
  return {r * std::cos(theta), r * std::sin(theta), z};
}

Vec3 torus_point(Rng& rng) {
  // ring radius 1, tube radius 0.4; area density over the tube angle is
  // proportional to 1 + 0.4*cos(phi), handled by rejection
  const double R = 1.0, r = 0.4;
  while (true) {
    const double phi = rng.uniform(0.0, 2.0 * kPi);
    if (rng.uniform01() * (1.0 + r / R) > 1.0 + (r / R) * std::cos(phi)) continue;
    const double theta = rng.uniform(0.0, 2.0 * kPi);
    const double ring = R + r * std::cos(phi);
    return {ring * std::cos(theta), ring * std::sin(theta), r * std::sin(phi)};
  }
}

Vec3 cone_point(Rng& rng) {
  // apex (0,0,1), unit base circle at z = -1; lateral area pi*sqrt(5), base pi
  const double lateral_prob = std::sqrt(5.0) / (std::sqrt(5.0) + 1.0);
  const double theta = rng.uniform(0.0, 2.0 * kPi);
  if (rng.uniform01() < lateral_prob) {
    const double t = std::sqrt(rng.uniform01());  // area grows with distance from apex
    return {t * std::cos(theta), t * std::sin(theta), 1.0 - 2.0 * t};
  }
  const double r = std::sqrt(rng.uniform01());
  return {r * std::cos(theta), r * std::sin(theta), -1.0};
}

}  // namespace

Cloud sample_shape(const std::string& cls, int n, uint64_t seed) {
  Rng rng(seed);
  Vec3 (*gen)(Rng&) = nullptr;
  if (cls == "sphere")
    gen = sphere_point;
  else if (cls == "cube")
    gen = cube_point;
  else if (cls == "cylinder")
    gen = cylinder_point;
  else if (cls == "torus")
    gen = torus_point;
  else if (cls == "cone")
    gen = cone_point;
  else
    throw std::runtime_error("unknown class '" + cls + "'");
  Cloud out(n);
  for (auto& p : out) p = gen(rng);
  return out;
}

namespace {

LabeledCloud make_instance(const std::string& cls, int label, int n, const DatasetSpec& spec,
                           uint64_t shape_seed) {
  Cloud pts = sample_shape(cls, n, mix_seed(shape_seed, {1}));
  Rng deform(mix_seed(shape_seed, {2}));
  Vec3 axis_scale;
  for (int a = 0; a < 3; ++a) axis_scale[a] = deform.uniform(spec.deform_min, spec.deform_max);
  Rng noise(mix_seed(shape_seed, {3}));
  for (auto& p : pts)
    for (int a = 0; a < 3; ++a) p[a] = p[a] * axis_scale[a] + spec.noise_sigma * noise.normal();
  LabeledCloud out;
  out.points = normalize_to_cube(pts);
  out.label = label;
  out.shape_seed = shape_seed;
  return out;
}

}  // namespace

Dataset synth_dataset(const DatasetSpec& spec, int num_points, uint64_t seed) {
  Dataset ds;
  ds.class_names = spec.classes;
  for (int c = 0; c < static_cast<int>(spec.classes.size()); ++c) {
    for (int i = 0; i < spec.train_per_class; ++i)
      ds.train.push_back(make_instance(spec.classes[c], c, num_points, spec,
                                       mix_seed(seed, {10, static_cast<uint64_t>(c),
                                                       static_cast<uint64_t>(i)})));
    for (int i = 0; i < spec.test_per_class; ++i)
      ds.test.push_back(make_instance(spec.classes[c], c, num_points, spec,
                                      mix_seed(seed, {20, static_cast<uint64_t>(c),
                                                      static_cast<uint64_t>(i)})));
  }
  return ds;
}

}  // namespace jmae
