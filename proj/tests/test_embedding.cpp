#include <algorithm>
#include <cstring>
#include <numeric>

#include "doctest.h"
#include "jmae/embedding.hpp"
#include "jmae/rng.hpp"

using namespace jmae;

namespace {

Cloud random_cloud(int n, uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Cloud c(n);
  for (auto& p : c)
    for (int a = 0; a < 3; ++a) p[a] = scale * rng.uniform(-1.0, 1.0);
  return c;
}

int count_true(const std::vector<bool>& v) {
  return static_cast<int>(std::count(v.begin(), v.end(), true));
}

double sqd(const Vec3& a, const Vec3& b) {
  double s = 0;
  for (int i = 0; i < 3; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

DepthMap random_map(int h, int w, uint64_t seed) {
  DepthMap m;
  m.h = h;
  m.w = w;
  m.values.resize(static_cast<size_t>(h) * w);
  Rng rng(seed);
  for (auto& v : m.values) v = rng.uniform01();
  return m;
}

}  // namespace

TEST_CASE("mask plans") {
  SUBCASE("exact counts at ratio 0.75") {
    MaskPlan plan = make_mask_plan(0.75, 32, 196, 7);
    CHECK(count_true(plan.mask3d) == 24);
    CHECK(count_true(plan.mask2d) == 147);
    CHECK(plan.mask3d.size() == 32);
    CHECK(plan.mask2d.size() == 196);
  }
  SUBCASE("round-half-away count") {
    CHECK(count_true(make_mask_plan(0.5, 5, 5, 1).mask3d) == 3);
  }
  SUBCASE("deterministic per seed") {
    MaskPlan a = make_mask_plan(0.75, 32, 196, 9);
    MaskPlan b = make_mask_plan(0.75, 32, 196, 9);
    MaskPlan c = make_mask_plan(0.75, 32, 196, 10);
    CHECK(a.mask3d == b.mask3d);
    CHECK(a.mask2d == b.mask2d);
    CHECK((a.mask3d != c.mask3d || a.mask2d != c.mask2d));
  }
  SUBCASE("modalities draw independent positions") {
    MaskPlan plan = make_mask_plan(0.5, 64, 64, 3);
    CHECK(plan.mask3d != plan.mask2d);
  }
  SUBCASE("ratio zero masks nothing") {
    MaskPlan plan = make_mask_plan(0.0, 16, 16, 1);
    CHECK(count_true(plan.mask3d) == 0);
    CHECK(count_true(plan.mask2d) == 0);
  }
  SUBCASE("ratio out of range refused") {
    CHECK_THROWS(make_mask_plan(-0.1, 8, 8, 1));
    CHECK_THROWS(make_mask_plan(1.0, 8, 8, 1));
  }
}

TEST_CASE("fine mask derivation") {
  SUBCASE("nearest final center, brute force") {
    Cloud stage = random_cloud(40, 5);
    Cloud fin = random_cloud(10, 6);
    std::vector<bool> mask(10, false);
    for (int i = 0; i < 10; i += 2) mask[i] = true;
    auto fine = derive_fine_mask(stage, fin, mask);
    for (int i = 0; i < 40; ++i) {
      int best = 0;
      for (int j = 1; j < 10; ++j)
        if (sqd(stage[i], fin[j]) < sqd(stage[i], fin[best])) best = j;
      CHECK(fine[i] == mask[best]);
    }
  }
  SUBCASE("equidistant ties go to the lower index") {
    Cloud fin{{-1, 0, 0}, {1, 0, 0}};
    Cloud stage{{0, 0, 0}};
    CHECK(derive_fine_mask(stage, fin, {true, false}) == std::vector<bool>{true});
    CHECK(derive_fine_mask(stage, fin, {false, true}) == std::vector<bool>{false});
  }
  SUBCASE("count mismatch refused") {
    CHECK_THROWS(derive_fine_mask(random_cloud(4, 1), random_cloud(3, 2), {true, false}));
  }
}

TEST_CASE("3d embedding") {
  const Embed3dDims dims{24, 8, 8, 4};
  ParameterTree pt(11);
  Embed3dParams params = make_embed3d_params(pt, "e3", 8, 16, 32);
  Cloud cloud = random_cloud(96, 13);

  SUBCASE("shapes and metadata") {
    TokenSet3D set = embed_3d(cloud, params, dims, {});
    CHECK(set.tokens.shape() == std::vector<int>{8, 32});
    CHECK(set.centers.size() == 8);
    CHECK(set.stage_centers.size() == 24);
    CHECK(set.group_assignment.size() == 96);
    CHECK(count_true(set.visible) == 8);
    CHECK(count_true(set.fine_masked) == 0);
  }
  SUBCASE("centers are input points") {
    TokenSet3D set = embed_3d(cloud, params, dims, {});
    for (const auto& c : set.stage_centers)
      CHECK(std::find(cloud.begin(), cloud.end(), c) != cloud.end());
    for (const auto& c : set.centers)
      CHECK(std::find(set.stage_centers.begin(), set.stage_centers.end(), c) !=
            set.stage_centers.end());
  }
  SUBCASE("group assignment is nearest center") {
    TokenSet3D set = embed_3d(cloud, params, dims, {});
    for (int i = 0; i < 96; ++i) {
      int best = 0;
      for (int j = 1; j < 8; ++j)
        if (sqd(cloud[i], set.centers[j]) < sqd(cloud[i], set.centers[best])) best = j;
      CHECK(set.group_assignment[i] == best);
    }
  }
  SUBCASE("mask tags visibility without changing tokens") {
    MaskPlan plan = make_mask_plan(0.5, 8, 16, 3);
    TokenSet3D all = embed_3d(cloud, params, dims, {});
    TokenSet3D masked = embed_3d(cloud, params, dims, plan.mask3d);
    CHECK(std::memcmp(all.tokens.values().data(), masked.tokens.values().data(),
                      all.tokens.values().size() * sizeof(double)) == 0);
    for (int g = 0; g < 8; ++g) CHECK(masked.visible[g] == !plan.mask3d[g]);
    CHECK(masked.fine_masked ==
          derive_fine_mask(masked.stage_centers, masked.centers, plan.mask3d));
  }
  SUBCASE("invariant to point order") {
    TokenSet3D base = embed_3d(cloud, params, dims, {});
    Cloud shuffled = cloud;
    Rng rng(99);
    rng.shuffle(shuffled);
    TokenSet3D perm = embed_3d(shuffled, params, dims, {});
    CHECK(perm.centers == base.centers);
    CHECK(perm.stage_centers == base.stage_centers);
    for (size_t i = 0; i < base.tokens.values().size(); ++i)
      CHECK(perm.tokens.values()[i] == doctest::Approx(base.tokens.values()[i]).epsilon(1e-12));
  }
  SUBCASE("bad extents refused") {
    CHECK_THROWS(embed_3d(cloud, params, {8, 24, 8, 4}, {}));           // G2 > G1
    CHECK_THROWS(embed_3d(random_cloud(4, 1), params, dims, {}));       // G1 > N
    CHECK_THROWS(embed_3d(cloud, params, {24, 8, 200, 4}, {}));         // k1 > N
    CHECK_THROWS(embed_3d(cloud, params, dims, std::vector<bool>(5)));  // mask length
  }
}

TEST_CASE("2d embedding") {
  ParameterTree pt(17);
  Embed2dParams params = make_embed2d_params(pt, "e2", 4, 8);

  SUBCASE("shapes and call counter") {
    const uint64_t before = embed_2d_call_count().load();
    TokenSet2D set = embed_2d(random_map(64, 64, 1), params, {});
    CHECK(embed_2d_call_count().load() == before + 1);
    CHECK(set.tokens.shape() == std::vector<int>{16, 8});
    CHECK(set.grid_h == 4);
    CHECK(set.grid_w == 4);
    CHECK(count_true(set.visible) == 16);
  }
  SUBCASE("constant background gives identical tokens everywhere") {
    DepthMap m;
    m.h = 64;
    m.w = 64;
    m.values.assign(64 * 64, 0.0);
    TokenSet2D set = embed_2d(m, params, {});
    const auto& v = set.tokens.values();
    for (int r = 1; r < 16; ++r)
      CHECK(std::memcmp(v.data(), v.data() + static_cast<size_t>(r) * 8, 8 * sizeof(double)) == 0);
  }
  SUBCASE("masked rows come out zero and invisible") {
    std::vector<bool> mask(16, false);
    mask[3] = mask[7] = mask[12] = true;
    TokenSet2D set = embed_2d(random_map(64, 64, 2), params, mask);
    for (int g = 0; g < 16; ++g) {
      CHECK(set.visible[g] == !mask[g]);
      if (mask[g])
        for (int j = 0; j < 8; ++j) CHECK(set.tokens.values()[g * 8 + j] == 0.0);
    }
  }
  SUBCASE("masked regions cannot reach visible tokens") {
    DepthMap m = random_map(96, 96, 3);
    std::vector<bool> mask(36, true);
    mask[0] = false;  // only the top-left block visible
    TokenSet2D base = embed_2d(m, params, mask);
    m.values[90 * 96 + 90] += 0.5;  // interior of a masked block
    TokenSet2D poked = embed_2d(m, params, mask);
    CHECK(std::memcmp(base.tokens.values().data(), poked.tokens.values().data(),
                      8 * sizeof(double)) == 0);
  }
  SUBCASE("extent not divisible by 16 refused") {
    CHECK_THROWS(embed_2d(random_map(40, 64, 1), params, {}));
  }
}

TEST_CASE("visible row selection") {
  Tensor t = Tensor::from_values({4, 2}, {0, 1, 10, 11, 20, 21, 30, 31});
  SUBCASE("gathers flagged rows in order") {
    VisibleRows v = visible_tokens(t, {true, false, true, true});
    CHECK(v.indices == std::vector<int>{0, 2, 3});
    CHECK(v.rows.values() == std::vector<double>{0, 1, 20, 21, 30, 31});
  }
  SUBCASE("none visible refused") {
    CHECK_THROWS(visible_tokens(t, {false, false, false, false}));
    CHECK_THROWS(visible_tokens(t, {true, false}));
  }
}
