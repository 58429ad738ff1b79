#include "jmae/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>
#include <sstream>
#include <stdexcept>

#include "jmae/rng.hpp"

namespace jmae {

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& r : rows) w = std::max(w, r.max_rel_err);
  return w;
}

GradCheckReport grad_check(ParameterTree& params,
                           const std::function<Tensor(const ParameterTree&)>& build,
                           double tolerance, int max_elems_per_tensor, uint64_t pick_seed,
                           double step) {
  const Tensor first = build(params);
  const Tensor second = build(params);
  if (first.size() != 1 || second.size() != 1)
    throw std::runtime_error("grad_check: builder must produce a scalar");
  if (std::memcmp(&first.values()[0], &second.values()[0], sizeof(double)) != 0)
    throw std::runtime_error("grad_check: non-deterministic builder (two runs disagree)");

  params.zero_grads();
  second.backward();

  const double h = step;
  GradCheckReport report;
  report.tolerance = tolerance;
  for (const auto& [path, t] : params.entries()) {
    const int64_t n = t.size();
    std::vector<int64_t> picks;
    if (max_elems_per_tensor < 0 || n <= max_elems_per_tensor) {
      picks.resize(n);
      for (int64_t i = 0; i < n; ++i) picks[i] = i;
    } else {
      Rng rng(mix_seed(pick_seed, {fnv1a64(path)}));
      std::set<int64_t> chosen;
      while (static_cast<int>(chosen.size()) < max_elems_per_tensor)
        chosen.insert(rng.uniform_int(static_cast<int>(n)));
      picks.assign(chosen.begin(), chosen.end());
    }

    GradCheckRow row{path, 0.0, static_cast<int>(picks.size())};
    auto& vals = t.node->values;
    for (int64_t i : picks) {
      const double x0 = vals[i];
      vals[i] = x0 + h;
      const double fp = build(params).item();
      vals[i] = x0 - h;
      const double fm = build(params).item();
      vals[i] = x0;
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = t.grad()[i];
      const double rel = std::abs(numeric - analytic) /
                         std::max({std::abs(numeric), std::abs(analytic), 1e-3});
      row.max_rel_err = std::max(row.max_rel_err, rel);
    }
    report.rows.push_back(std::move(row));
  }
  report.pass = true;
  for (const auto& r : report.rows) report.pass = report.pass && (r.max_rel_err <= tolerance);
  return report;
}

std::string format_report(const GradCheckReport& report) {
  std::ostringstream os;
  os.setf(std::ios::scientific);
  os.precision(3);
  for (const auto& r : report.rows)
    os << (r.max_rel_err <= report.tolerance ? "  ok   " : "  FAIL ") << r.max_rel_err << "  ("
       << r.checked_elems << " elems)  " << r.path << '\n';
  os << (report.pass ? "pass" : "fail") << " at tolerance " << report.tolerance << '\n';
  return os.str();
}

}  // namespace jmae
