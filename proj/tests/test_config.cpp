#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "jmae/config.hpp"

using namespace jmae;

TEST_CASE("default config is valid and survives a json round trip") {
  RunConfig def;
  CHECK_NOTHROW(def.validate());
  const std::string text = config_to_json(def);
  RunConfig back = config_from_json(text);
  CHECK(config_to_json(back) == text);
  CHECK(back.seed == def.seed);
  CHECK(back.num_points == def.num_points);
  CHECK(back.image_size == def.image_size);
  CHECK(back.width == def.width);
  CHECK(back.mask_ratio == def.mask_ratio);
  CHECK(back.dataset.classes == def.dataset.classes);
  CHECK(back.dataset.noise_sigma == def.dataset.noise_sigma);
  CHECK(back.lr == def.lr);
  CHECK(back.threads == def.threads);
}

TEST_CASE("partial json keeps defaults for absent keys") {
  RunConfig cfg = config_from_json("{\"seed\": 7, \"epochs\": 3, \"warmup_epochs\": 1}");
  CHECK(cfg.seed == 7);
  CHECK(cfg.epochs == 3);
  CHECK(cfg.warmup_epochs == 1);
  CHECK(cfg.num_points == RunConfig().num_points);
  CHECK(cfg.dataset.train_per_class == RunConfig().dataset.train_per_class);
}

TEST_CASE("derived sizes") {
  RunConfig cfg;
  cfg.image_size = 64;
  CHECK(cfg.final_grid() == 16);
  cfg.image_size = 224;
  CHECK(cfg.final_grid() == 196);
  cfg.num_points = 512;
  cfg.groups_final = 16;
  CHECK(cfg.points_per_group() == 32);
}

TEST_CASE("unknown keys are rejected") {
  CHECK_THROWS_WITH_AS(config_from_json("{\"learning_rate\": 0.1}"),
                       doctest::Contains("'learning_rate'"), std::runtime_error);
  CHECK_THROWS_WITH_AS(config_from_json("{\"lr\": 0.1, \"a\": 1, \"b\": 2}"),
                       doctest::Contains("unknown config keys"), std::runtime_error);
  CHECK_THROWS_WITH_AS(config_from_json("{\"dataset\": {\"classes\": [\"cube\", \"cone\"], "
                                        "\"per_class\": 5}}"),
                       doctest::Contains("in dataset: 'per_class'"), std::runtime_error);
  CHECK_THROWS_WITH_AS(config_from_json("[1, 2]"), "config must be a JSON object",
                       std::runtime_error);
}

TEST_CASE("validation lists every violation at once") {
  RunConfig cfg;
  cfg.image_size = 65;
  cfg.heads = 7;
  cfg.lr = 0.0;
  try {
    cfg.validate();
    FAIL("expected a throw");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("image_size must be divisible by 16") != std::string::npos);
    CHECK(msg.find("width must be divisible by heads") != std::string::npos);
    CHECK(msg.find("lr must be positive") != std::string::npos);
  }
}

TEST_CASE("mask ratio must leave both modalities partially visible") {
  RunConfig cfg;
  cfg.mask_ratio = 0.001;  // rounds to zero masked tokens on both sides
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("at least one"), std::runtime_error);
  cfg.mask_ratio = 0.999;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("not all"), std::runtime_error);
  cfg.mask_ratio = 1.0;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("mask_ratio must be in [0,1)"),
                       std::runtime_error);
}

TEST_CASE("dataset constraints") {
  RunConfig cfg;
  cfg.dataset.classes = {"cube"};
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("at least 2 classes"),
                       std::runtime_error);
  cfg.dataset.classes = {"cube", "pyramid"};
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("unknown class 'pyramid'"),
                       std::runtime_error);
  cfg.dataset = {};
  cfg.dataset.deform_min = 1.5;
  cfg.dataset.deform_max = 0.5;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("deform range"), std::runtime_error);
}

TEST_CASE("standalone dataset spec parsing") {
  DatasetSpec spec = dataset_from_json(
      "{\"classes\": [\"cube\", \"torus\"], \"train_per_class\": 3, \"test_per_class\": 2}");
  CHECK(spec.classes == std::vector<std::string>{"cube", "torus"});
  CHECK(spec.train_per_class == 3);
  CHECK(spec.test_per_class == 2);
  CHECK(spec.noise_sigma == DatasetSpec().noise_sigma);
  CHECK_THROWS_WITH_AS(dataset_from_json("{\"shapes\": 4}"), doctest::Contains("'shapes'"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(dataset_from_json("3"), "dataset spec must be a JSON object",
                       std::runtime_error);
}

TEST_CASE("config files") {
  const std::string path = "t_cfg.json";
  std::ofstream(path) << "{\"seed\": 11}";
  CHECK(load_config(path).seed == 11);
  std::ofstream(path) << "{oops";
  CHECK_THROWS_WITH_AS(load_config(path), doctest::Contains("t_cfg.json is not valid JSON"),
                       std::runtime_error);
  std::remove(path.c_str());
  CHECK_THROWS_WITH_AS(load_config(path), doctest::Contains("cannot open config file"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(load_dataset_spec(path), doctest::Contains("cannot open dataset spec"),
                       std::runtime_error);
}
