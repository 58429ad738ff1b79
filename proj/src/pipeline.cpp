#include "jmae/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "jmae/optim.hpp"
#include "jmae/rng.hpp"

namespace jmae {

namespace {

// seed stream tags; every derived generator hangs off (cfg.seed, tag, ...)
constexpr uint64_t kDataTag = 101;    // dataset synthesis
constexpr uint64_t kInitTag = 102;    // parameter init
constexpr uint64_t kOrderTag = 103;   // epoch shuffle
constexpr uint64_t kSampleTag = 104;  // per-sample augment/view/mask
constexpr uint64_t kReconTag = 105;   // reconstruction dump mask

const char* kLogHeader = "epoch,loss3d,loss2d,loss_cross,total,lr";

// 17 significant digits round-trip a double exactly, so logs stay exact and
// byte-stable across identical runs
std::string csv_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_train_log(const std::string& file, const std::vector<EpochRow>& rows) {
  std::ofstream f(file, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + file);
  f << kLogHeader << '\n';
  for (const auto& r : rows)
    f << r.epoch << ',' << csv_double(r.loss3d) << ',' << csv_double(r.loss2d) << ','
      << csv_double(r.loss_cross) << ',' << csv_double(r.total) << ',' << csv_double(r.lr)
      << '\n';
}

void save_train_checkpoint(const RunConfig& cfg, const ParameterTree& pt, const AdamW& opt,
                           int epoch, const std::string& file) {
  Checkpoint ck;
  ck.config_json = config_to_json(cfg);
  for (const auto& [path, t] : pt.entries()) ck.put("model." + path, t.shape(), t.values());
  opt.export_state(ck);
  ck.put("trainer.epoch", {1}, {static_cast<double>(epoch)});
  save_checkpoint(ck, file);
}

uint64_t sample_seed(const RunConfig& cfg, int epoch, int iter, int slot) {
  return mix_seed(cfg.seed, {kSampleTag, static_cast<uint64_t>(epoch),
                             static_cast<uint64_t>(iter), static_cast<uint64_t>(slot)});
}

// Forward the batch, populate grads of the mean loss in `pt`, and report
// per-sample loss parts. threads > 1 gives each thread a private copy of the
// parameters for a contiguous chunk of slots; chunk grads then join in
// thread order, so the result is deterministic for a fixed thread count.
void run_batch(const Model& model, ParameterTree& pt, const RunConfig& cfg, const Dataset& ds,
               const std::vector<int>& order, int b0, int bsz, int epoch, int iter,
               std::vector<LossBreakdown>& parts) {
  pt.zero_grads();
  if (cfg.threads <= 1 || bsz == 1) {
    Tensor sum;
    for (int s = 0; s < bsz; ++s) {
      ForwardResult fr = pretrain_forward(model, cfg, ds.train[order[b0 + s]].points,
                                          sample_seed(cfg, epoch, iter, s));
      parts[s] = fr.parts;
      sum = sum.defined() ? add(sum, fr.total) : fr.total;
    }
    scalar_mul(sum, 1.0 / bsz).backward();
    return;
  }

  const int nthreads = std::min(cfg.threads, bsz);
  const int chunk = (bsz + nthreads - 1) / nthreads;
  std::map<std::string, std::vector<double>> state;
  for (const auto& [path, t] : pt.entries()) state[path] = t.values();

  std::vector<std::unique_ptr<ParameterTree>> trees;
  std::vector<Model> models;
  for (int t = 0; t < nthreads; ++t) {
    trees.push_back(std::make_unique<ParameterTree>(pt.seed()));
    models.push_back(build_model(*trees.back(), cfg));
    trees.back()->load_values(state);
  }

  std::vector<std::exception_ptr> errors(nthreads);
  std::vector<std::thread> workers;
  for (int t = 0; t < nthreads; ++t)
    workers.emplace_back([&, t] {
      try {
        const int s0 = t * chunk, s1 = std::min(bsz, s0 + chunk);
        Tensor sum;
        for (int s = s0; s < s1; ++s) {
          ForwardResult fr = pretrain_forward(models[t], cfg, ds.train[order[b0 + s]].points,
                                              sample_seed(cfg, epoch, iter, s));
          parts[s] = fr.parts;
          sum = sum.defined() ? add(sum, fr.total) : fr.total;
        }
        if (sum.defined()) scalar_mul(sum, 1.0 / bsz).backward();
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& w : workers) w.join();
  for (const auto& err : errors)
    if (err) std::rethrow_exception(err);

  for (int t = 0; t < nthreads; ++t)
    for (const auto& [path, param] : pt.entries()) {
      const auto& cg = trees[t]->get(path).node->grad;
      if (cg.empty()) continue;
      auto& g = param.node->ensure_grad();
      for (size_t i = 0; i < cg.size(); ++i) g[i] += cg[i];
    }
  for (const auto& [path, param] : pt.entries()) param.node->ensure_grad();
}

}  // namespace

EpochRow parse_log_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, ',')) fields.push_back(cur);
  if (fields.size() != 6)
    throw std::runtime_error("log row needs 6 fields, got " + std::to_string(fields.size()) +
                             ": " + line);
  EpochRow r;
  r.epoch = std::stoi(fields[0]);
  r.loss3d = std::stod(fields[1]);
  r.loss2d = std::stod(fields[2]);
  r.loss_cross = std::stod(fields[3]);
  r.total = std::stod(fields[4]);
  r.lr = std::stod(fields[5]);
  return r;
}

std::vector<EpochRow> read_train_log(const std::string& file) {
  std::ifstream f(file);
  if (!f) throw std::runtime_error("cannot read " + file);
  std::string line;
  if (!std::getline(f, line) || line != kLogHeader)
    throw std::runtime_error(file + ": bad header line");
  std::vector<EpochRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    rows.push_back(parse_log_row(line));
  }
  return rows;
}

TrainResult pretrain(const RunConfig& cfg, const std::string& resume_path,
                     const std::function<void(const EpochRow&)>& on_epoch) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  const Dataset ds = synth_dataset(cfg.dataset, cfg.num_points, mix_seed(cfg.seed, {kDataTag}));

  ParameterTree pt(mix_seed(cfg.seed, {kInitTag}));
  const Model model = build_model(pt, cfg);
  AdamWConfig ocfg;
  ocfg.weight_decay = cfg.weight_decay;
  ocfg.clip_norm = cfg.clip_norm;
  AdamW opt(pt, ocfg);
  const ScheduleConfig sched{cfg.lr, cfg.min_lr, cfg.warmup_epochs, cfg.epochs};

  TrainResult out;
  out.log_path = cfg.out_dir + "/train_log.csv";
  int start_epoch = 0;
  if (!resume_path.empty()) {
    const Checkpoint ck = load_checkpoint(resume_path);
    pt.load_values(ck.values_with_prefix("model"));
    opt.import_state(ck);
    if (!ck.has("trainer.epoch"))
      throw std::runtime_error("resume: " + resume_path + " carries no trainer.epoch entry");
    start_epoch = static_cast<int>(std::llround(ck.get("trainer.epoch").values[0]));
    if (start_epoch < 0 || start_epoch > cfg.epochs)
      throw std::runtime_error("resume: checkpoint epoch " + std::to_string(start_epoch) +
                               " outside this run's 0.." + std::to_string(cfg.epochs));
    // keep the already-written part of the log so the finished file still has
    // one row per epoch
    if (std::filesystem::exists(out.log_path))
      for (const auto& r : read_train_log(out.log_path))
        if (r.epoch <= start_epoch) out.rows.push_back(r);
  }

  const int n = static_cast<int>(ds.train.size());
  const int iters = (n + cfg.batch_size - 1) / cfg.batch_size;

  for (int e = start_epoch; e < cfg.epochs; ++e) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffler(mix_seed(cfg.seed, {kOrderTag, static_cast<uint64_t>(e)}));
    shuffler.shuffle(order);

    double s3 = 0.0, s2 = 0.0, sc = 0.0;
    std::vector<LossBreakdown> parts;
    for (int it = 0; it < iters; ++it) {
      const int b0 = it * cfg.batch_size;
      const int bsz = std::min(n - b0, cfg.batch_size);
      parts.assign(bsz, {});
      run_batch(model, pt, cfg, ds, order, b0, bsz, e, it, parts);
      opt.step(lr_at_f(e + static_cast<double>(it) / iters, sched));
      for (const auto& p : parts) {
        s3 += cfg.w3d * p.l3d;
        s2 += cfg.w2d * p.l2d;
        sc += cfg.wcross * p.lcross;
      }
    }

    EpochRow row;
    row.epoch = e + 1;
    row.loss3d = s3 / n;
    row.loss2d = s2 / n;
    row.loss_cross = sc / n;
    row.total = row.loss3d + row.loss2d + row.loss_cross;
    row.lr = lr_at_f(e, sched);
    out.rows.push_back(row);
    write_train_log(out.log_path, out.rows);
    if (on_epoch) on_epoch(row);

    if ((e + 1) % cfg.checkpoint_every == 0 && e + 1 != cfg.epochs)
      save_train_checkpoint(cfg, pt, opt, e + 1,
                            cfg.out_dir + "/checkpoint_epoch" + std::to_string(e + 1) + ".jmae");
  }

  out.checkpoint_path = cfg.out_dir + "/checkpoint_final.jmae";
  save_train_checkpoint(cfg, pt, opt, cfg.epochs, out.checkpoint_path);
  return out;
}

ProbeRun probe_features(const RunConfig& cfg,
                        const std::map<std::string, std::vector<double>>* state, double reg) {
  cfg.validate();
  const Dataset ds = synth_dataset(cfg.dataset, cfg.num_points, mix_seed(cfg.seed, {kDataTag}));
  ParameterTree pt(mix_seed(cfg.seed, {kInitTag}));
  const Model model = build_model(pt, cfg, ModelParts::encoder3d);
  if (state) pt.load_values(*state, /*allow_extra=*/true);

  const uint64_t tokenizer2d_before = embed_2d_call_count();
  auto featurize = [&](const std::vector<LabeledCloud>& split, std::vector<std::vector<double>>& x,
                       std::vector<int>& y) {
    for (const auto& lc : split) {
      x.push_back(extract_features(model, cfg, lc.points));
      y.push_back(lc.label);
    }
  };
  std::vector<std::vector<double>> train_x, test_x;
  std::vector<int> train_y, test_y;
  featurize(ds.train, train_x, train_y);
  featurize(ds.test, test_x, test_y);
  if (embed_2d_call_count() != tokenizer2d_before)
    throw std::logic_error("probe_features: the 2D tokenizer ran during feature extraction");

  const ProbeResult r = linear_probe(train_x, train_y, test_x, test_y,
                                     static_cast<int>(ds.class_names.size()), reg);
  return {r.accuracy, r.correct, r.total};
}

ProbeRun probe_checkpoint(const std::string& checkpoint_path, double reg,
                          const DatasetSpec* dataset_override) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  RunConfig cfg = config_from_json(ck.config_json);
  if (dataset_override) cfg.dataset = *dataset_override;
  const auto state = ck.values_with_prefix("model");
  return probe_features(cfg, &state, reg);
}

GradCheckReport model_grad_check(uint64_t seed, double tol, int elems_per_tensor, double step) {
  RunConfig tiny;
  tiny.seed = seed;
  tiny.num_points = 64;
  tiny.image_size = 32;
  tiny.groups_stage1 = 16;
  tiny.groups_final = 8;
  tiny.knn_stage1 = 8;
  tiny.knn_stage2 = 4;
  tiny.embed3d_point = 8;
  tiny.embed3d_stage1 = 16;
  tiny.embed2d_mid = 8;
  tiny.width = 32;
  tiny.encoder_blocks = 2;
  tiny.shared_blocks = 1;
  tiny.heads = 4;

  ParameterTree pt(mix_seed(seed, {kInitTag}));
  const Model model = build_model(pt, tiny);
  Rng r(mix_seed(seed, {kDataTag}));
  Cloud cloud(tiny.num_points);
  for (auto& p : cloud)
    for (int a = 0; a < 3; ++a) p[a] = r.uniform01() * 2.0 - 1.0;
  cloud = normalize_to_cube(cloud);
  const uint64_t fwd_seed = mix_seed(seed, {kSampleTag});

  auto build = [&](const ParameterTree&) {
    return pretrain_forward(model, tiny, cloud, fwd_seed).total;
  };
  // Layer norm on near-zero rows puts curvature ~1/eps^1.5 into the loss
  // surface at freshly initialised biases, so the full stack needs a finer
  // step than single ops do to keep truncation error below tolerance.
  return grad_check(pt, build, tol, elems_per_tensor, seed, step);
}

std::vector<AblateRow> ablate(const std::string& axis, const RunConfig& base, double reg) {
  struct Arm {
    std::string name;
    std::function<void(RunConfig&)> apply;
  };
  std::vector<Arm> arms;
  if (axis == "attention") {
    arms = {{"global-global",
             [](RunConfig& c) {
               c.local_3d_to_2d = false;
               c.local_2d_to_3d = false;
             }},
            {"local-global",
             [](RunConfig& c) {
               c.local_3d_to_2d = true;
               c.local_2d_to_3d = false;
             }},
            {"global-local",
             [](RunConfig& c) {
               c.local_3d_to_2d = false;
               c.local_2d_to_3d = true;
             }},
            {"local-local", [](RunConfig& c) {
               c.local_3d_to_2d = true;
               c.local_2d_to_3d = true;
             }}};
  } else if (axis == "views") {
    arms = {{"off", [](RunConfig& c) { c.cross_views = 0; }},
            {"1", [](RunConfig& c) { c.cross_views = 1; }},
            {"4", [](RunConfig& c) { c.cross_views = 4; }}};
  } else if (axis == "ratio") {
    arms = {{"0.6", [](RunConfig& c) { c.mask_ratio = 0.6; }},
            {"0.7", [](RunConfig& c) { c.mask_ratio = 0.7; }},
            {"0.75", [](RunConfig& c) { c.mask_ratio = 0.75; }},
            {"0.8", [](RunConfig& c) { c.mask_ratio = 0.8; }}};
  } else {
    throw std::runtime_error("ablate: unknown axis " + axis +
                             " (want attention, views, or ratio)");
  }

  std::vector<AblateRow> rows;
  for (const auto& arm : arms) {
    RunConfig cfg = base;
    arm.apply(cfg);
    cfg.out_dir = base.out_dir + "/" + axis + "_" + arm.name;
    const TrainResult tr = pretrain(cfg);
    const ProbeRun pr = probe_checkpoint(tr.checkpoint_path, reg);
    rows.push_back({axis, arm.name, pr.accuracy});
  }

  std::filesystem::create_directories(base.out_dir);
  const std::string csv = base.out_dir + "/ablate_" + axis + ".csv";
  std::ofstream f(csv, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + csv);
  f << "axis,arm,accuracy\n";
  for (const auto& r : rows) f << r.axis << ',' << r.arm << ',' << csv_double(r.accuracy) << '\n';
  return rows;
}

void reconstruct_to_dir(const std::string& checkpoint_path, const std::string& input_file,
                        const std::string& out_dir) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const RunConfig cfg = config_from_json(ck.config_json);
  ParameterTree pt(mix_seed(cfg.seed, {kInitTag}));
  const Model model = build_model(pt, cfg);
  pt.load_values(ck.values_with_prefix("model"));

  const Cloud cloud = normalize_to_cube(load_cloud(input_file));
  if (static_cast<int>(cloud.size()) < cfg.groups_stage1)
    throw std::runtime_error("reconstruct: input has " + std::to_string(cloud.size()) +
                             " points, needs at least " + std::to_string(cfg.groups_stage1));

  const ViewSpec view = default_view(cfg.image_size, cfg.image_size);
  const SampleRun sr = run_sample(model, cfg, cloud, view, mix_seed(cfg.seed, {kReconTag}));

  std::filesystem::create_directories(out_dir);
  save_xyz(cloud, out_dir + "/input.xyz");
  save_xyz(sr.t3.centers, out_dir + "/centers.xyz");

  Cloud visible_pts;
  for (size_t i = 0; i < cloud.size(); ++i)
    if (sr.t3.visible[sr.t3.group_assignment[i]]) visible_pts.push_back(cloud[i]);
  save_xyz(visible_pts, out_dir + "/masked.xyz");

  Cloud recon = visible_pts;
  const auto& pv = sr.pred3.values();
  for (size_t i = 0; i + 2 < pv.size(); i += 3) recon.push_back({pv[i], pv[i + 1], pv[i + 2]});
  save_xyz(recon, out_dir + "/reconstructed.xyz");

  save_pgm(sr.map, out_dir + "/input.pgm");
  save_pgm(project_depth(recon, view), out_dir + "/reconstructed.pgm");
}

}  // namespace jmae
