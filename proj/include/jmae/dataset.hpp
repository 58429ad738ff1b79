#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "jmae/config.hpp"
#include "jmae/geometry.hpp"

namespace jmae {

struct LabeledCloud {
  Cloud points;   // normalized to the canonical cube
  int label = 0;  // index into the spec's class list
  uint64_t shape_seed = 0;
};

struct Dataset {
  std::vector<LabeledCloud> train, test;
  std::vector<std::string> class_names;
};

/// Uniform surface samples of one named primitive, before deformation.
Cloud sample_shape(const std::string& cls, int n, uint64_t seed);

/// Per-class parametric shapes with per-axis scaling in [deform_min,
/// deform_max] and Gaussian surface noise, normalized to the cube. Splits are
/// seeded disjointly and deterministic.
Dataset synth_dataset(const DatasetSpec& spec, int num_points, uint64_t seed);

}  // namespace jmae
