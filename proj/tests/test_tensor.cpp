#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "jmae/gradcheck.hpp"
#include "jmae/params.hpp"
#include "jmae/rng.hpp"
#include "jmae/tensor.hpp"

using namespace jmae;

namespace {

// Reference convolution: plain gather over taps with explicit bounds checks,
// no shared code with the engine implementation.
std::vector<double> naive_conv_3x3_s2(const std::vector<double>& x, int cin, int h, int w,
                                      const std::vector<double>& k, int cout,
                                      const std::vector<double>& bias) {
  const int oh = (h - 1) / 2 + 1, ow = (w - 1) / 2 + 1;
  std::vector<double> out(static_cast<size_t>(cout) * oh * ow, 0.0);
  for (int co = 0; co < cout; ++co)
    for (int oi = 0; oi < oh; ++oi)
      for (int oj = 0; oj < ow; ++oj) {
        double acc = bias[co];
        for (int ci = 0; ci < cin; ++ci)
          for (int di = -1; di <= 1; ++di)
            for (int dj = -1; dj <= 1; ++dj) {
              const int ii = 2 * oi + di, jj = 2 * oj + dj;
              if (ii < 0 || ii >= h || jj < 0 || jj >= w) continue;
              acc += x[(ci * h + ii) * w + jj] * k[((co * cin + ci) * 3 + di + 1) * 3 + dj + 1];
            }
        out[(co * oh + oi) * ow + oj] = acc;
      }
  return out;
}

std::vector<double> random_values(int64_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

}  // namespace

TEST_CASE("matmul identity and shape errors") {
  Tensor i3 = Tensor::from_values({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor a = Tensor::from_values({3, 4}, random_values(12, 11));
  Tensor out = matmul(i3, a);
  for (int i = 0; i < 12; ++i) CHECK(out.values()[i] == a.values()[i]);
  CHECK_THROWS(matmul(a, a));
}

TEST_CASE("sum(x*x) gradient is 2x") {
  Tensor x = Tensor::from_values({3}, {1, 2, 3}, true);
  Tensor loss = sum_all(mul(x, x));
  loss.backward();
  CHECK(x.grad()[0] == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(x.grad()[1] == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(x.grad()[2] == doctest::Approx(6.0).epsilon(1e-14));

  SUBCASE("backward accumulates; reset clears") {
    loss.backward();
    CHECK(x.grad()[1] == doctest::Approx(8.0).epsilon(1e-14));
    x.zero_grad();
    for (double g : x.grad()) CHECK(g == 0.0);
  }
}

TEST_CASE("softmax uniform row and mask semantics") {
  Tensor row = Tensor::full({1, 4}, 0.7);
  Tensor y = softmax(row);
  for (int j = 0; j < 4; ++j) CHECK(y.values()[j] == doctest::Approx(0.25).epsilon(1e-15));

  Tensor x = Tensor::from_values({2, 4}, {0.3, -1.2, 0.8, 2.0, 5.0, 1.0, -2.0, 0.5});
  Tensor mask = Tensor::from_values({2, 4}, {0, -1e9, 0, -1e9, -1e9, -1e9, -1e9, -1e9});
  Tensor ym = softmax_masked(x, mask);

  SUBCASE("invalid weights exactly zero, valid sum to one") {
    CHECK(ym.values()[1] == 0.0);
    CHECK(ym.values()[3] == 0.0);
    CHECK(ym.values()[0] + ym.values()[2] == doctest::Approx(1.0).epsilon(1e-14));
    for (int j = 4; j < 8; ++j) CHECK(ym.values()[j] == 0.0);  // all-invalid row
  }

  SUBCASE("all-valid zero mask matches unmasked bitwise") {
    Tensor zmask = Tensor::zeros({2, 4});
    Tensor a = softmax_masked(x, zmask);
    Tensor b = softmax(x);
    CHECK(std::memcmp(a.values().data(), b.values().data(), 8 * sizeof(double)) == 0);
  }

  SUBCASE("values at invalid positions cannot leak") {
    std::vector<double> perturbed = x.values();
    perturbed[1] = 1e6;
    perturbed[3] = -123.0;
    perturbed[5] = 44.0;
    Tensor x2 = Tensor::from_values({2, 4}, perturbed);
    Tensor y2 = softmax_masked(x2, mask);
    CHECK(std::memcmp(ym.values().data(), y2.values().data(), 8 * sizeof(double)) == 0);
  }
}

TEST_CASE("conv2d stride-2 against direct convolution") {
  SUBCASE("constant map, all-ones kernel") {
    const double c = 0.37;
    Tensor x = Tensor::full({1, 8, 8}, c);
    Tensor w = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor b = Tensor::zeros({1});
    Tensor y = conv2d_3x3_s2(x, w, b);
    CHECK(y.shape() == std::vector<int>{1, 4, 4});
    for (int i = 1; i < 4; ++i)
      for (int j = 1; j < 4; ++j)
        CHECK(y.values()[i * 4 + j] == doctest::Approx(9.0 * c).epsilon(1e-14));
    CHECK(y.values()[0] == doctest::Approx(4.0 * c).epsilon(1e-14));  // clipped corner
    CHECK(y.values()[2] == doctest::Approx(6.0 * c).epsilon(1e-14));  // clipped top edge
  }

  SUBCASE("random maps match the reference for odd and even extents") {
    for (auto [cin, h, w, cout] : std::vector<std::array<int, 4>>{{2, 7, 5, 3}, {3, 8, 8, 2}}) {
      auto xv = random_values(cin * h * w, 100 + h);
      auto kv = random_values(cout * cin * 9, 200 + w);
      auto bv = random_values(cout, 300 + cout);
      Tensor y = conv2d_3x3_s2(Tensor::from_values({cin, h, w}, xv),
                               Tensor::from_values({cout, cin, 3, 3}, kv),
                               Tensor::from_values({cout}, bv));
      auto ref = naive_conv_3x3_s2(xv, cin, h, w, kv, cout, bv);
      REQUIRE(y.size() == static_cast<int64_t>(ref.size()));
      for (size_t i = 0; i < ref.size(); ++i)
        CHECK(y.values()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("shape plumbing ops") {
  Tensor a = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});

  SUBCASE("transpose") {
    Tensor t = transpose(a);
    CHECK(t.shape() == std::vector<int>{3, 2});
    CHECK(t.at(2, 1) == 6.0);
    CHECK(t.at(0, 1) == 4.0);
  }
  SUBCASE("reshape keeps order") {
    Tensor r = reshape(a, {3, 2});
    CHECK(r.at(1, 0) == 3.0);
    CHECK_THROWS(reshape(a, {4, 2}));
  }
  SUBCASE("concat/slice round trip on both axes") {
    for (int axis : {0, 1}) {
      Tensor c = concat({a, a}, axis);
      Tensor back = slice(c, axis, axis == 0 ? 2 : 3, axis == 0 ? 2 : 3);
      for (int i = 0; i < 6; ++i) CHECK(back.values()[i] == a.values()[i]);
    }
  }
  SUBCASE("split covers the axis") {
    auto parts = split(a, 1, {1, 2});
    CHECK(parts[0].shape() == std::vector<int>{2, 1});
    CHECK(parts[1].at(1, 1) == 6.0);
    CHECK_THROWS(split(a, 1, {1, 1}));
  }
  SUBCASE("gather_rows picks and repeats") {
    Tensor g = gather_rows(a, {1, 1, 0});
    CHECK(g.shape() == std::vector<int>{3, 3});
    CHECK(g.at(0, 0) == 4.0);
    CHECK(g.at(2, 2) == 3.0);
    CHECK_THROWS(gather_rows(a, {2}));
  }
  SUBCASE("broadcast_rows") {
    Tensor v = Tensor::from_values({3}, {7, 8, 9});
    Tensor b = broadcast_rows(v, 4);
    CHECK(b.at(3, 1) == 8.0);
  }
  SUBCASE("max/mean over middle axis of rank-3") {
    Tensor t = Tensor::from_values({2, 2, 2}, {1, 9, 4, 2, -1, 0, 5, 3});
    Tensor mx = max_over_axis(t, 1);
    CHECK(mx.shape() == std::vector<int>{2, 2});
    CHECK(mx.at(0, 0) == 4.0);
    CHECK(mx.at(0, 1) == 9.0);
    CHECK(mx.at(1, 0) == 5.0);
    Tensor mn = mean_over_axis(t, 1);
    CHECK(mn.at(0, 1) == doctest::Approx(5.5));
  }
}

TEST_CASE("non-finite results are rejected with the op name") {
  Tensor big = Tensor::full({1, 2}, 1e308);
  CHECK_THROWS_WITH_AS(add(big, big), doctest::Contains("add"), std::runtime_error);
}

TEST_CASE("finite differences across the op suite") {
  // exp-free ops get the tighter bound
  const double tight = 1e-5, loose = 1e-4;

  auto run = [&](const char* name, double tol, auto&& setup,
                 std::function<Tensor(const ParameterTree&)> build) {
    for (uint64_t seed : {3u, 17u, 90u}) {
      CAPTURE(name);
      CAPTURE(seed);
      ParameterTree pt(seed);
      setup(pt);
      auto rep = grad_check(pt, build, tol);
      CHECK(rep.pass);
    }
  };

  run(
      "matmul-squared", tight,
      [](ParameterTree& pt) {
        pt.add_fan_in("a", {3, 4}, 4);
        pt.add_fan_in("b", {4, 2}, 4);
      },
      [](const ParameterTree& p) {
        Tensor y = matmul(p.get("a"), p.get("b"));
        return sum_all(mul(y, y));
      });

  run(
      "elementwise-chain", tight,
      [](ParameterTree& pt) {
        pt.add_fan_in("x", {2, 5}, 5);
        pt.add_fan_in("y", {2, 5}, 5);
      },
      [](const ParameterTree& p) {
        Tensor s = sub(mul(p.get("x"), p.get("y")), scalar_mul(p.get("y"), 0.3));
        return sum_all(mul(s, scalar_add(s, 0.1)));
      });

  run(
      "reshape-transpose-concat-slice-gather", tight,
      [](ParameterTree& pt) { pt.add_fan_in("x", {4, 3}, 3); },
      [](const ParameterTree& p) {
        Tensor t = transpose(p.get("x"));                   // [3,4]
        Tensor c = concat({t, t}, 0);                       // [6,4]
        Tensor s = slice(c, 1, 1, 2);                       // [6,2]
        Tensor g = gather_rows(s, {0, 5, 2, 2});            // [4,2]
        Tensor r = reshape(g, {2, 4});
        return sum_all(mul(r, r));
      });

  run(
      "broadcast-max-mean", tight,
      [](ParameterTree& pt) {
        pt.add_fan_in("v", {3}, 3);
        pt.add_fan_in("m", {4, 3}, 3);
      },
      [](const ParameterTree& p) {
        Tensor b = add(broadcast_rows(p.get("v"), 4), p.get("m"));
        Tensor t = reshape(b, {2, 2, 3});
        Tensor mx = max_over_axis(t, 1);
        Tensor mn = mean_over_axis(t, 2);
        return add(sum_all(mul(mx, mx)), sum_all(mul(mn, mn)));
      });

  run(
      "masked-softmax", loose, [](ParameterTree& pt) { pt.add_fan_in("x", {3, 5}, 5); },
      [](const ParameterTree& p) {
        Tensor mask = Tensor::from_values({3, 5}, {0,    0, -1e9, 0,    0,     //
                                                   -1e9, 0, 0,    0,    -1e9,  //
                                                   0,    0, 0,    -1e9, 0});
        Tensor y = softmax_masked(scalar_mul(p.get("x"), 3.0), mask);
        Tensor w = Tensor::from_values({3, 5}, random_values(15, 5));
        return sum_all(mul(y, w));
      });

  run(
      "layer-norm", loose,
      [](ParameterTree& pt) {
        pt.add_fan_in("x", {4, 6}, 6);
        pt.add_normal("g", {6}, 0.5);
        pt.add_normal("b", {6}, 0.5);
      },
      [](const ParameterTree& p) {
        Tensor y = layer_norm(p.get("x"), scalar_add(p.get("g"), 1.0), p.get("b"));
        return sum_all(mul(y, y));
      });

  run(
      "gelu-linear", loose,
      [](ParameterTree& pt) {
        pt.add_fan_in("x", {3, 4}, 4);
        pt.add_fan_in("w", {4, 5}, 4);
        pt.add_zeros("b", {5});
      },
      [](const ParameterTree& p) {
        Tensor y = gelu(linear(p.get("x"), p.get("w"), p.get("b")));
        return sum_all(mul(y, y));
      });

  run(
      "conv", tight,
      [](ParameterTree& pt) {
        pt.add_fan_in("x", {2, 5, 6}, 60);
        pt.add_fan_in("w", {3, 2, 3, 3}, 18);
        pt.add_zeros("b", {3});
      },
      [](const ParameterTree& p) {
        Tensor y = conv2d_3x3_s2(p.get("x"), p.get("w"), p.get("b"));
        return sum_all(mul(y, y));
      });

  run(
      "squared-error", tight,
      [](ParameterTree& pt) {
        pt.add_fan_in("a", {3, 3}, 3);
        pt.add_fan_in("b", {3, 3}, 3);
      },
      [](const ParameterTree& p) { return squared_error_reduce(p.get("a"), p.get("b")); });
}

TEST_CASE("grad_check flags a corrupted backward rule") {
  ParameterTree pt(5);
  pt.add_fan_in("x", {4}, 2);
  auto rep = grad_check(pt, [](const ParameterTree& p) {
    const Tensor& x = p.get("x");
    std::vector<double> sq(4);
    for (int i = 0; i < 4; ++i) sq[i] = x.values()[i] * x.values()[i];
    Tensor y = custom_op("bad_square", {4}, std::move(sq), {x}, [](detail::Node& self) {
      auto& p0 = *self.parents[0];
      for (int i = 0; i < 4; ++i) p0.grad[i] += self.grad[i] * 3.0 * p0.values[i];  // wrong slope
    });
    return sum_all(y);
  }, 1e-4);
  CHECK_FALSE(rep.pass);
  CHECK(rep.worst() > 0.1);
}

TEST_CASE("grad_check rejects a builder with hidden state") {
  ParameterTree pt(5);
  pt.add_fan_in("x", {2}, 2);
  int calls = 0;
  CHECK_THROWS_WITH_AS(
      grad_check(pt,
                 [&calls](const ParameterTree& p) {
                   ++calls;
                   return scalar_mul(sum_all(p.get("x")), static_cast<double>(calls));
                 },
                 1e-4),
      doctest::Contains("non-deterministic"), std::runtime_error);
}
