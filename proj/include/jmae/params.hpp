#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "jmae/tensor.hpp"

namespace jmae {

/// Named trainable tensors, iterated lexicographically. Each tensor is
/// initialized from an engine keyed on (rng_seed, path), so the layout of the
/// registration code never influences the draw.
class ParameterTree {
 public:
  explicit ParameterTree(uint64_t rng_seed) : seed_(rng_seed) {}

  /// Centered uniform, half-width 1/sqrt(fan_in).
  Tensor add_fan_in(const std::string& path, std::vector<int> shape, int fan_in);
  /// Centered normal with the given sigma (tokens, positional tables).
  Tensor add_normal(const std::string& path, std::vector<int> shape, double sigma);
  Tensor add_zeros(const std::string& path, std::vector<int> shape);
  /// Fixed initial values (deterministic encodings that stay learnable).
  Tensor add_values(const std::string& path, std::vector<int> shape, std::vector<double> values);

  const Tensor& get(const std::string& path) const;
  bool has(const std::string& path) const { return entries_.count(path) != 0; }
  uint64_t seed() const { return seed_; }
  size_t count() const { return entries_.size(); }
  int64_t scalar_count() const;

  const std::map<std::string, Tensor>& entries() const { return entries_; }

  void zero_grads();

  /// Overwrites values of every entry from `state`; paths and shapes must
  /// match the registered tree exactly in both directions. With allow_extra,
  /// state may carry entries this tree does not register (a wider model's
  /// checkpoint feeding a narrower tree); every registered entry must still
  /// be present.
  void load_values(const std::map<std::string, std::vector<double>>& state,
                   bool allow_extra = false);

 private:
  Tensor insert(const std::string& path, Tensor t);

  uint64_t seed_;
  std::map<std::string, Tensor> entries_;
};

}  // namespace jmae
