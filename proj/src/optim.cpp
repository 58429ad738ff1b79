#include "jmae/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace jmae {

double lr_at_f(double epoch, const ScheduleConfig& cfg) {
  if (cfg.total_epochs <= cfg.warmup_epochs || cfg.warmup_epochs < 0)
    throw std::runtime_error("schedule requires 0 <= warmup_epochs < total_epochs");
  if (epoch <= 0.0) return cfg.warmup_epochs > 0 ? 0.0 : cfg.base_lr;
  if (epoch < cfg.warmup_epochs) return cfg.base_lr * epoch / cfg.warmup_epochs;
  if (epoch >= cfg.total_epochs) return cfg.min_lr;
  const double f = (epoch - cfg.warmup_epochs) / (cfg.total_epochs - cfg.warmup_epochs);
  return cfg.min_lr + 0.5 * (cfg.base_lr - cfg.min_lr) * (1.0 + std::cos(3.14159265358979323846 * f));
}

double lr_at(int epoch, const ScheduleConfig& cfg) { return lr_at_f(epoch, cfg); }

AdamW::AdamW(ParameterTree& params, AdamWConfig cfg) : params_(params), cfg_(cfg) {
  for (const auto& [path, t] : params_.entries()) {
    m_[path].assign(t.values().size(), 0.0);
    v_[path].assign(t.values().size(), 0.0);
  }
}

void AdamW::step(double lr) {
  for (const auto& [path, t] : params_.entries())
    if (t.node->grad.size() != t.values().size())
      throw std::runtime_error("adamw_step: no gradient for parameter " + path);

  double scale = 1.0;
  if (cfg_.clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& [path, t] : params_.entries())
      for (double g : t.node->grad) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;
  }

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const auto& [path, t] : params_.entries()) {
    auto& m = m_[path];
    auto& v = v_[path];
    auto& p = t.node->values;
    const auto& g = t.node->grad;
    for (size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] * scale;
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p[i]);
    }
  }
}

void AdamW::export_state(Checkpoint& ck) const {
  for (const auto& [path, t] : params_.entries()) {
    ck.put("opt.m." + path, t.shape(), m_.at(path));
    ck.put("opt.v." + path, t.shape(), v_.at(path));
  }
  ck.put("opt.t", {1}, {static_cast<double>(t_)});
}

void AdamW::import_state(const Checkpoint& ck) {
  for (const auto& [path, t] : params_.entries()) {
    const auto& m = ck.get("opt.m." + path);
    const auto& v = ck.get("opt.v." + path);
    if (m.values.size() != t.values().size() || v.values.size() != t.values().size())
      throw std::runtime_error("optimizer state size mismatch for " + path);
    m_[path] = m.values;
    v_[path] = v.values;
  }
  t_ = static_cast<int64_t>(ck.get("opt.t").values.at(0));
}

}  // namespace jmae
