#include "jmae/params.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "jmae/rng.hpp"

namespace jmae {

Tensor ParameterTree::insert(const std::string& path, Tensor t) {
  if (path.empty()) throw std::runtime_error("parameter path must not be empty");
  auto [it, fresh] = entries_.emplace(path, t);
  if (!fresh) throw std::runtime_error("duplicate parameter path: " + path);
  return t;
}

Tensor ParameterTree::add_fan_in(const std::string& path, std::vector<int> shape, int fan_in) {
  if (fan_in <= 0) throw std::runtime_error("fan_in must be positive for " + path);
  Rng rng(mix_seed(seed_, {fnv1a64(path)}));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(shape_product(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return insert(path, Tensor::from_values(std::move(shape), std::move(v), true));
}

Tensor ParameterTree::add_normal(const std::string& path, std::vector<int> shape, double sigma) {
  Rng rng(mix_seed(seed_, {fnv1a64(path)}));
  std::vector<double> v(shape_product(shape));
  for (auto& x : v) x = sigma * rng.normal();
  return insert(path, Tensor::from_values(std::move(shape), std::move(v), true));
}

Tensor ParameterTree::add_zeros(const std::string& path, std::vector<int> shape) {
  return insert(path, Tensor::zeros(std::move(shape), true));
}

Tensor ParameterTree::add_values(const std::string& path, std::vector<int> shape,
                                 std::vector<double> values) {
  return insert(path, Tensor::from_values(std::move(shape), std::move(values), true));
}

const Tensor& ParameterTree::get(const std::string& path) const {
  auto it = entries_.find(path);
  if (it == entries_.end()) throw std::runtime_error("unknown parameter path: " + path);
  return it->second;
}

int64_t ParameterTree::scalar_count() const {
  int64_t n = 0;
  for (const auto& [path, t] : entries_) n += t.size();
  return n;
}

void ParameterTree::zero_grads() {
  for (auto& [path, t] : entries_) t.zero_grad();
}

void ParameterTree::load_values(const std::map<std::string, std::vector<double>>& state,
                                bool allow_extra) {
  if (!allow_extra)
    for (const auto& [path, vals] : state)
      if (!entries_.count(path))
        throw std::runtime_error("checkpoint entry has no matching parameter: " + path);
  for (auto& [path, t] : entries_) {
    auto it = state.find(path);
    if (it == state.end()) throw std::runtime_error("checkpoint missing parameter: " + path);
    if (it->second.size() != t.values().size()) {
      std::ostringstream os;
      os << "checkpoint size mismatch for " << path << ": " << it->second.size() << " vs "
         << t.values().size();
      throw std::runtime_error(os.str());
    }
    t.values() = it->second;
  }
}

}  // namespace jmae
