#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "jmae/checkpoint.hpp"
#include "jmae/optim.hpp"
#include "jmae/params.hpp"
#include "jmae/rng.hpp"

using namespace jmae;

namespace {

std::string read_bytes(const std::string& file) {
  std::ifstream in(file, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("adamw first step matches the recurrence by hand") {
  ParameterTree pt(1);
  Tensor p = pt.add_values("p", {1}, {1.0});
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  cfg.clip_norm = 0.0;
  AdamW opt(pt, cfg);

  const double g = 0.5, lr = 0.1;
  p.node->ensure_grad()[0] = g;
  opt.step(lr);

  // published recurrence, step 1
  const double m = (1 - 0.9) * g, v = (1 - 0.999) * g * g;
  const double mhat = m / (1 - 0.9), vhat = v / (1 - 0.999);
  const double expect = 1.0 - lr * mhat / (std::sqrt(vhat) + 1e-8);
  CHECK(p.values()[0] == doctest::Approx(expect).epsilon(1e-15));

  SUBCASE("second identical step shifts size via bias correction") {
    p.node->values[0] = 1.0;
    p.node->grad[0] = g;
    opt.step(lr);
    const double m2 = 0.9 * m + 0.1 * g;
    const double v2 = 0.999 * v + 0.001 * g * g;
    const double mh2 = m2 / (1 - 0.9 * 0.9), vh2 = v2 / (1 - 0.999 * 0.999);
    const double expect2 = 1.0 - lr * mh2 / (std::sqrt(vh2) + 1e-8);
    CHECK(p.values()[0] == doctest::Approx(expect2).epsilon(1e-14));
  }
}

TEST_CASE("adamw weight decay is decoupled") {
  ParameterTree pt(1);
  Tensor p = pt.add_values("p", {2}, {2.0, -3.0});
  AdamWConfig cfg;
  cfg.weight_decay = 0.05;
  AdamW opt(pt, cfg);
  p.zero_grad();  // zero grad: update reduces to pure decay
  opt.step(0.1);
  CHECK(p.values()[0] == doctest::Approx(2.0 * (1 - 0.1 * 0.05)).epsilon(1e-15));
  CHECK(p.values()[1] == doctest::Approx(-3.0 * (1 - 0.1 * 0.05)).epsilon(1e-15));
}

TEST_CASE("adamw demands grads and names the offender") {
  ParameterTree pt(1);
  pt.add_values("layer.w", {2}, {1.0, 2.0});
  AdamW opt(pt, {});
  CHECK_THROWS_WITH_AS(opt.step(0.1), doctest::Contains("layer.w"), std::runtime_error);
}

TEST_CASE("global norm clip caps the applied gradient") {
  // one parameter, grad norm 20, clip 10: applied grad is halved
  ParameterTree a(1), b(1);
  Tensor pa = a.add_values("p", {1}, {0.0});
  Tensor pb = b.add_values("p", {1}, {0.0});
  AdamWConfig clip10;
  clip10.weight_decay = 0.0;
  clip10.clip_norm = 10.0;
  AdamWConfig noclip = clip10;
  noclip.clip_norm = 0.0;
  AdamW oa(a, clip10), ob(b, noclip);
  pa.node->ensure_grad()[0] = 20.0;
  pb.node->ensure_grad()[0] = 10.0;
  oa.step(0.01);
  ob.step(0.01);
  CHECK(pa.values()[0] == doctest::Approx(pb.values()[0]).epsilon(1e-12));
}

TEST_CASE("lr schedule boundaries") {
  ScheduleConfig s;
  s.base_lr = 8e-4;
  s.min_lr = 2e-5;
  s.warmup_epochs = 10;
  s.total_epochs = 50;
  CHECK(lr_at(0, s) == 0.0);
  CHECK(lr_at(5, s) == doctest::Approx(4e-4).epsilon(1e-15));
  CHECK(lr_at(10, s) == doctest::Approx(8e-4).epsilon(1e-15));
  CHECK(lr_at(30, s) == doctest::Approx((8e-4 + 2e-5) / 2).epsilon(1e-12));  // decay midpoint
  CHECK(lr_at(50, s) == doctest::Approx(2e-5).epsilon(1e-15));
  CHECK(lr_at(80, s) == doctest::Approx(2e-5).epsilon(1e-15));
  CHECK(lr_at_f(0.5, s) == doctest::Approx(4e-5).epsilon(1e-15));
  ScheduleConfig bad = s;
  bad.total_epochs = 10;
  CHECK_THROWS(lr_at(0, bad));
}

TEST_CASE("parameter init is path-keyed, not order-keyed") {
  ParameterTree x(42), y(42), z(43);
  Tensor xa = x.add_fan_in("a", {4, 4}, 4);
  Tensor xb = x.add_fan_in("b", {4, 4}, 4);
  Tensor yb = y.add_fan_in("b", {4, 4}, 4);  // registered first this time
  Tensor ya = y.add_fan_in("a", {4, 4}, 4);
  Tensor za = z.add_fan_in("a", {4, 4}, 4);
  CHECK(xa.values() == ya.values());
  CHECK(xb.values() == yb.values());
  CHECK(xa.values() != za.values());
  CHECK(xa.values() != xb.values());
  CHECK_THROWS(x.add_zeros("a", {1}));  // duplicate path
}

TEST_CASE("checkpoint round trip is byte-identical") {
  ParameterTree pt(7);
  pt.add_fan_in("enc.w", {3, 5}, 3);
  pt.add_normal("tok", {1, 5}, 0.02);
  pt.add_zeros("enc.b", {5});

  Checkpoint ck;
  ck.config_json = "{\"n\":3}";
  for (const auto& [path, t] : pt.entries()) ck.put(path, t.shape(), t.values());
  const std::string f1 = "ck_roundtrip_1.bin", f2 = "ck_roundtrip_2.bin";
  save_checkpoint(ck, f1);
  Checkpoint back = load_checkpoint(f1);
  CHECK(back.config_json == ck.config_json);
  save_checkpoint(back, f2);
  CHECK(read_bytes(f1) == read_bytes(f2));
  CHECK(read_bytes(f1).substr(0, 6) == "JMAE1\n");

  SUBCASE("values survive exactly") {
    ParameterTree other(99);
    other.add_fan_in("enc.w", {3, 5}, 3);
    other.add_normal("tok", {1, 5}, 0.02);
    other.add_zeros("enc.b", {5});
    std::map<std::string, std::vector<double>> vals;
    for (const auto& [path, e] : back.entries) vals[path] = e.values;
    other.load_values(vals);
    CHECK(other.get("enc.w").values() == pt.get("enc.w").values());
  }

  SUBCASE("f32 storage narrows but stays loadable") {
    Checkpoint half = ck;
    half.f32 = true;
    save_checkpoint(half, f2);
    Checkpoint b32 = load_checkpoint(f2);
    CHECK(b32.f32);
    const auto& a = ck.get("enc.w").values;
    const auto& b = b32.get("enc.w").values;
    for (size_t i = 0; i < a.size(); ++i)
      CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-6));
  }

  SUBCASE("corrupt magic is refused") {
    std::string bytes = read_bytes(f1);
    bytes[0] = 'X';
    std::ofstream(f2, std::ios::binary) << bytes;
    CHECK_THROWS_WITH_AS(load_checkpoint(f2), doctest::Contains("magic"), std::runtime_error);
  }

  std::remove(f1.c_str());
  std::remove(f2.c_str());
}

TEST_CASE("checkpoint prefixes route optimizer state") {
  ParameterTree pt(3);
  Tensor p = pt.add_values("w", {1}, {1.0});
  AdamW opt(pt, {});
  p.node->ensure_grad()[0] = 0.25;
  opt.step(1e-2);
  Checkpoint ck;
  opt.export_state(ck);
  for (const auto& [path, t] : pt.entries()) ck.put("model." + path, t.shape(), t.values());
  CHECK(ck.has("opt.m.w"));
  CHECK(ck.values_with_prefix("model").count("w") == 1);

  ParameterTree pt2(3);
  pt2.add_values("w", {1}, {0.0});
  AdamW opt2(pt2, {});
  pt2.load_values(ck.values_with_prefix("model"));
  opt2.import_state(ck);
  CHECK(opt2.step_count() == 1);
  CHECK(pt2.get("w").values()[0] == p.values()[0]);
}
