#include "jmae/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace jmae {

namespace {

using nlohmann::json;

const std::set<std::string> kClassNames{"sphere", "cube", "cylinder", "torus", "cone"};

void fail(std::vector<std::string>& errs, const std::string& msg) { errs.push_back(msg); }

}  // namespace

void RunConfig::validate() const {
  std::vector<std::string> errs;
  if (image_size % 16 != 0) fail(errs, "image_size must be divisible by 16");
  if (width % heads != 0) fail(errs, "width must be divisible by heads");
  if (width % 4 != 0) fail(errs, "width must be divisible by 4");
  if (num_points % groups_final != 0) fail(errs, "num_points must be divisible by groups_final");
  if (groups_final > groups_stage1) fail(errs, "groups_final must not exceed groups_stage1");
  if (groups_stage1 > num_points) fail(errs, "groups_stage1 must not exceed num_points");
  if (knn_stage1 > num_points) fail(errs, "knn_stage1 must not exceed num_points");
  if (knn_stage2 > groups_stage1) fail(errs, "knn_stage2 must not exceed groups_stage1");
  if (mask_ratio < 0.0 || mask_ratio >= 1.0) fail(errs, "mask_ratio must be in [0,1)");
  const long m3 = std::llround(mask_ratio * groups_final);
  const long m2 = std::llround(mask_ratio * final_grid());
  if (m3 < 1 || m3 >= groups_final)
    fail(errs, "mask_ratio must mask at least one and not all 3D tokens");
  if (m2 < 1 || m2 >= final_grid())
    fail(errs, "mask_ratio must mask at least one and not all 2D tokens");
  if (cross_views < 0) fail(errs, "cross_views must be non-negative");
  if (sigma <= 0.0) fail(errs, "sigma must be positive");
  if (epochs < 1) fail(errs, "epochs must be at least 1");
  if (warmup_epochs < 0 || warmup_epochs >= epochs)
    fail(errs, "warmup_epochs must be in [0, epochs)");
  if (batch_size < 1) fail(errs, "batch_size must be at least 1");
  if (lr <= 0.0) fail(errs, "lr must be positive");
  if (checkpoint_every < 1) fail(errs, "checkpoint_every must be at least 1");
  if (threads < 1) fail(errs, "threads must be at least 1");
  if (dataset.classes.size() < 2) fail(errs, "dataset needs at least 2 classes");
  for (const auto& c : dataset.classes)
    if (!kClassNames.count(c)) fail(errs, "unknown class '" + c + "'");
  if (dataset.train_per_class < 1 || dataset.test_per_class < 1)
    fail(errs, "dataset needs at least one shape per class and split");
  if (dataset.deform_min <= 0.0 || dataset.deform_max < dataset.deform_min)
    fail(errs, "deform range must satisfy 0 < min <= max");
  if (dataset.noise_sigma < 0.0) fail(errs, "noise_sigma must be non-negative");
  if (!errs.empty()) {
    std::string all = "invalid config:";
    for (const auto& e : errs) all += "\n  - " + e;
    throw std::runtime_error(all);
  }
}

namespace {

// Reads cfg fields from j, complaining about unknown keys so typos surface.
template <typename T>
void take(json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) {
    out = it->get<T>();
    j.erase(it);
  }
}

void no_leftovers(const json& j, const std::string& where) {
  if (!j.empty()) {
    std::string keys;
    for (auto it = j.begin(); it != j.end(); ++it) keys += " '" + it.key() + "'";
    throw std::runtime_error("unknown config key" + std::string(j.size() > 1 ? "s" : "") + " in " +
                             where + ":" + keys);
  }
}

DatasetSpec dataset_section(json& d) {
  DatasetSpec spec;
  take(d, "classes", spec.classes);
  take(d, "train_per_class", spec.train_per_class);
  take(d, "test_per_class", spec.test_per_class);
  take(d, "deform_min", spec.deform_min);
  take(d, "deform_max", spec.deform_max);
  take(d, "noise_sigma", spec.noise_sigma);
  no_leftovers(d, "dataset");
  return spec;
}

}  // namespace

RunConfig config_from_json(const std::string& text) {
  json j = json::parse(text);
  if (!j.is_object()) throw std::runtime_error("config must be a JSON object");
  RunConfig cfg;

  take(j, "seed", cfg.seed);
  take(j, "out_dir", cfg.out_dir);
  take(j, "num_points", cfg.num_points);
  take(j, "image_size", cfg.image_size);
  if (auto it = j.find("dataset"); it != j.end()) {
    json d = *it;
    j.erase(it);
    cfg.dataset = dataset_section(d);
  }
  take(j, "groups_stage1", cfg.groups_stage1);
  take(j, "groups_final", cfg.groups_final);
  take(j, "knn_stage1", cfg.knn_stage1);
  take(j, "knn_stage2", cfg.knn_stage2);
  take(j, "embed3d_point", cfg.embed3d_point);
  take(j, "embed3d_stage1", cfg.embed3d_stage1);
  take(j, "embed2d_mid", cfg.embed2d_mid);
  take(j, "width", cfg.width);
  take(j, "encoder_blocks", cfg.encoder_blocks);
  take(j, "shared_blocks", cfg.shared_blocks);
  take(j, "heads", cfg.heads);
  take(j, "mask_ratio", cfg.mask_ratio);
  take(j, "local_3d_to_2d", cfg.local_3d_to_2d);
  take(j, "local_2d_to_3d", cfg.local_2d_to_3d);
  take(j, "cross_views", cfg.cross_views);
  take(j, "sigma", cfg.sigma);
  take(j, "hardness", cfg.hardness);
  take(j, "foreground_only", cfg.foreground_only);
  take(j, "pooled_3d_loss", cfg.pooled_3d_loss);
  take(j, "w3d", cfg.w3d);
  take(j, "w2d", cfg.w2d);
  take(j, "wcross", cfg.wcross);
  take(j, "epochs", cfg.epochs);
  take(j, "warmup_epochs", cfg.warmup_epochs);
  take(j, "batch_size", cfg.batch_size);
  take(j, "lr", cfg.lr);
  take(j, "min_lr", cfg.min_lr);
  take(j, "weight_decay", cfg.weight_decay);
  take(j, "clip_norm", cfg.clip_norm);
  take(j, "checkpoint_every", cfg.checkpoint_every);
  take(j, "threads", cfg.threads);
  no_leftovers(j, "config");

  cfg.validate();
  return cfg;
}

std::string config_to_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir;
  j["num_points"] = cfg.num_points;
  j["image_size"] = cfg.image_size;
  j["dataset"] = {{"classes", cfg.dataset.classes},
                  {"train_per_class", cfg.dataset.train_per_class},
                  {"test_per_class", cfg.dataset.test_per_class},
                  {"deform_min", cfg.dataset.deform_min},
                  {"deform_max", cfg.dataset.deform_max},
                  {"noise_sigma", cfg.dataset.noise_sigma}};
  j["groups_stage1"] = cfg.groups_stage1;
  j["groups_final"] = cfg.groups_final;
  j["knn_stage1"] = cfg.knn_stage1;
  j["knn_stage2"] = cfg.knn_stage2;
  j["embed3d_point"] = cfg.embed3d_point;
  j["embed3d_stage1"] = cfg.embed3d_stage1;
  j["embed2d_mid"] = cfg.embed2d_mid;
  j["width"] = cfg.width;
  j["encoder_blocks"] = cfg.encoder_blocks;
  j["shared_blocks"] = cfg.shared_blocks;
  j["heads"] = cfg.heads;
  j["mask_ratio"] = cfg.mask_ratio;
  j["local_3d_to_2d"] = cfg.local_3d_to_2d;
  j["local_2d_to_3d"] = cfg.local_2d_to_3d;
  j["cross_views"] = cfg.cross_views;
  j["sigma"] = cfg.sigma;
  j["hardness"] = cfg.hardness;
  j["foreground_only"] = cfg.foreground_only;
  j["pooled_3d_loss"] = cfg.pooled_3d_loss;
  j["w3d"] = cfg.w3d;
  j["w2d"] = cfg.w2d;
  j["wcross"] = cfg.wcross;
  j["epochs"] = cfg.epochs;
  j["warmup_epochs"] = cfg.warmup_epochs;
  j["batch_size"] = cfg.batch_size;
  j["lr"] = cfg.lr;
  j["min_lr"] = cfg.min_lr;
  j["weight_decay"] = cfg.weight_decay;
  j["clip_norm"] = cfg.clip_norm;
  j["checkpoint_every"] = cfg.checkpoint_every;
  j["threads"] = cfg.threads;
  return j.dump();
}

DatasetSpec dataset_from_json(const std::string& text) {
  json j = json::parse(text);
  if (!j.is_object()) throw std::runtime_error("dataset spec must be a JSON object");
  return dataset_section(j);
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return config_from_json(buf.str());
  } catch (const json::parse_error& e) {
    throw std::runtime_error("config " + path + " is not valid JSON: " + e.what());
  }
}

DatasetSpec load_dataset_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset spec file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return dataset_from_json(buf.str());
  } catch (const json::parse_error& e) {
    throw std::runtime_error("dataset spec " + path + " is not valid JSON: " + e.what());
  }
}

}  // namespace jmae
