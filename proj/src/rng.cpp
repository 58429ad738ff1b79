#include "jmae/rng.hpp"

#include <algorithm>
#include <stdexcept>

namespace jmae {

std::vector<int> Rng::sample_indices(int n, int k) {
  if (k < 0 || k > n) throw std::runtime_error("sample_indices: k outside [0,n]");
  std::vector<int> all(n);
  for (int i = 0; i < n; ++i) all[i] = i;
  shuffle(all);
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace jmae
