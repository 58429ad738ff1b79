#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "jmae/checkpoint.hpp"
#include "jmae/pipeline.hpp"
#include "jmae/rng.hpp"

namespace {

using namespace jmae;

int run_pretrain(const std::string& config_path, const std::string& resume) {
  const RunConfig cfg = load_config(config_path);
  const TrainResult tr = pretrain(cfg, resume, [&](const EpochRow& r) {
    std::printf("epoch %d/%d  loss3d %.6f  loss2d %.6f  loss_cross %.6f  total %.6f  lr %.3g\n",
                r.epoch, cfg.epochs, r.loss3d, r.loss2d, r.loss_cross, r.total, r.lr);
    std::fflush(stdout);
  });
  std::printf("log: %s\ncheckpoint: %s\n", tr.log_path.c_str(), tr.checkpoint_path.c_str());
  return 0;
}

int run_probe(const std::string& ckpt, const std::string& dataset_path, double reg,
              bool random_init) {
  const DatasetSpec* override_ptr = nullptr;
  DatasetSpec override_spec;
  if (!dataset_path.empty()) {
    override_spec = load_dataset_spec(dataset_path);
    override_ptr = &override_spec;
  }
  ProbeRun pr;
  if (random_init) {
    const Checkpoint ck = load_checkpoint(ckpt);
    RunConfig cfg = config_from_json(ck.config_json);
    if (override_ptr) cfg.dataset = *override_ptr;
    pr = probe_features(cfg, nullptr, reg);
  } else {
    pr = probe_checkpoint(ckpt, reg, override_ptr);
  }
  std::printf("accuracy %.4f (%d/%d)\n", pr.accuracy, pr.correct, pr.total);
  return 0;
}

int run_gradcheck(int seeds, double tol, int elems, double step) {
  bool all_pass = true;
  for (int s = 1; s <= seeds; ++s) {
    const GradCheckReport rep = model_grad_check(static_cast<uint64_t>(s), tol, elems, step);
    std::printf("seed %d: worst relative error %.3g %s\n", s, rep.worst(),
                rep.pass ? "[ok]" : "[FAIL]");
    if (!rep.pass) {
      std::fputs(format_report(rep).c_str(), stdout);
      all_pass = false;
    }
    std::fflush(stdout);
  }
  if (!all_pass) throw std::runtime_error("gradient check failed");
  return 0;
}

int run_project(const std::string& input, const std::string& view_arg, const std::string& out,
                int height, int width) {
  const Cloud cloud = normalize_to_cube(load_cloud(input));
  ViewSpec view;
  if (view_arg == "default") {
    view = default_view(height, width);
  } else {
    size_t pos = 0;
    unsigned long long seed = 0;
    try {
      seed = std::stoull(view_arg, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != view_arg.size())
      throw std::runtime_error("--view wants 'default' or an integer seed, got '" + view_arg +
                               "'");
    view = sample_view(seed, height, width);
  }
  save_pgm(project_depth(cloud, view), out);
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int run_ablate(const std::string& axis, const std::string& config_path, int epochs_override,
               int train_override, int test_override, const std::string& out_dir, double reg) {
  RunConfig cfg = load_config(config_path);
  if (epochs_override > 0) {
    cfg.epochs = epochs_override;
    cfg.warmup_epochs = std::min(cfg.warmup_epochs, cfg.epochs - 1);
  }
  if (train_override > 0) cfg.dataset.train_per_class = train_override;
  if (test_override > 0) cfg.dataset.test_per_class = test_override;
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  const auto rows = ablate(axis, cfg, reg);
  for (const auto& r : rows)
    std::printf("%s  %s  accuracy %.4f\n", r.axis.c_str(), r.arm.c_str(), r.accuracy);
  std::printf("wrote %s/ablate_%s.csv\n", cfg.out_dir.c_str(), axis.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"2D-3D joint masked autoencoder for point clouds"};
  app.require_subcommand(1);

  std::string config_path, resume;
  auto* pre = app.add_subcommand("pretrain", "run masked-autoencoder pre-training");
  pre->add_option("--config", config_path, "JSON run config")
      ->required()
      ->check(CLI::ExistingFile);
  pre->add_option("--resume", resume, "checkpoint to continue from")->check(CLI::ExistingFile);

  std::string probe_ckpt, probe_dataset;
  double probe_reg = 1e-3;
  bool probe_random = false;
  auto* probe = app.add_subcommand("probe", "linear classification probe on frozen features");
  probe->add_option("--checkpoint", probe_ckpt, "trained checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  probe->add_option("--dataset", probe_dataset, "JSON dataset spec replacing the checkpoint's")
      ->check(CLI::ExistingFile);
  probe->add_option("--reg", probe_reg, "L2 regularization weight");
  probe->add_flag("--random-init", probe_random, "score the untrained encoder instead");

  std::string rec_ckpt, rec_input, rec_out;
  auto* rec = app.add_subcommand("reconstruct", "dump masking and reconstruction artifacts");
  rec->add_option("--checkpoint", rec_ckpt, "trained checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  rec->add_option("--input", rec_input, "XYZ or OFF point cloud")
      ->required()
      ->check(CLI::ExistingFile);
  rec->add_option("--out-dir", rec_out, "output directory")->required();

  std::string proj_input, proj_view = "default", proj_out;
  int proj_h = 64, proj_w = 64;
  auto* proj = app.add_subcommand("project", "render a cloud to a depth map");
  proj->add_option("--input", proj_input, "XYZ or OFF point cloud")
      ->required()
      ->check(CLI::ExistingFile);
  proj->add_option("--view", proj_view, "'default' or an integer seed for a random view");
  proj->add_option("--out", proj_out, "output PGM file")->required();
  proj->add_option("--height", proj_h, "image height")->check(CLI::PositiveNumber);
  proj->add_option("--width", proj_w, "image width")->check(CLI::PositiveNumber);

  int gc_seeds = 10, gc_elems = 3;
  double gc_tol = 1e-4, gc_step = 1e-7;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the full stack");
  gc->add_option("--seeds", gc_seeds, "number of seeds")->check(CLI::PositiveNumber);
  gc->add_option("--tol", gc_tol, "relative error tolerance");
  gc->add_option("--elems", gc_elems, "elements checked per tensor");
  gc->add_option("--step", gc_step, "finite-difference step")->check(CLI::PositiveNumber);

  std::string ab_axis, ab_config, ab_out;
  int ab_epochs = 0, ab_train = 0, ab_test = 0;
  double ab_reg = 1e-3;
  auto* ab = app.add_subcommand("ablate", "pretrain + probe across one ablation axis");
  ab->add_option("--axis", ab_axis, "attention, views, or ratio")->required();
  ab->add_option("--config", ab_config, "base JSON run config")
      ->required()
      ->check(CLI::ExistingFile);
  ab->add_option("--epochs", ab_epochs, "override epochs per arm");
  ab->add_option("--train-per-class", ab_train, "override training shapes per class");
  ab->add_option("--test-per-class", ab_test, "override test shapes per class");
  ab->add_option("--out-dir", ab_out, "override output directory");
  ab->add_option("--reg", ab_reg, "probe regularization");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (pre->parsed()) return run_pretrain(config_path, resume);
    if (probe->parsed()) return run_probe(probe_ckpt, probe_dataset, probe_reg, probe_random);
    if (rec->parsed()) {
      reconstruct_to_dir(rec_ckpt, rec_input, rec_out);
      std::printf("wrote %s/{input,centers,masked,reconstructed}.xyz and .pgm maps\n",
                  rec_out.c_str());
      return 0;
    }
    if (proj->parsed()) return run_project(proj_input, proj_view, proj_out, proj_h, proj_w);
    if (gc->parsed()) return run_gradcheck(gc_seeds, gc_tol, gc_elems, gc_step);
    if (ab->parsed())
      return run_ablate(ab_axis, ab_config, ab_epochs, ab_train, ab_test, ab_out, ab_reg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
