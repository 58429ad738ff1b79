#include <cmath>
#include <cstring>

#include "doctest.h"
#include "jmae/attention.hpp"
#include "jmae/rng.hpp"

using namespace jmae;

namespace {

Tensor random_rows(int n, int c, uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::vector<double> v(static_cast<size_t>(n) * c);
  for (auto& x : v) x = scale * rng.uniform(-1.0, 1.0);
  return Tensor::from_values({n, c}, std::move(v));
}

void zero_param(Tensor t) { t.node->values.assign(t.node->values.size(), 0.0); }

bool same_bits(const std::vector<double>& a, const std::vector<double>& b, size_t off, size_t n) {
  return std::memcmp(a.data() + off, b.data() + off, n * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("correlation mask") {
  const ViewSpec view = default_view(64, 64);

  SUBCASE("matches projection arithmetic on random centers") {
    Rng rng(41);
    std::vector<Vec3> centers(12);
    for (auto& p : centers)
      for (int a = 0; a < 3; ++a) p[a] = rng.uniform(-1.0, 1.0);
    centers.push_back({0.0, 0.0, 1.36});  // behind the near plane, off frame
    std::vector<int> cells(16);
    for (int i = 0; i < 16; ++i) cells[i] = i;
    const AttnScheme scheme{true, true};
    Validity v = correlation_mask(centers, cells, 4, view, scheme);
    REQUIRE(v.n3d == 13);
    REQUIRE(v.n2d == 16);
    for (int g = 0; g < 13; ++g) {
      double u, vv, d;
      const bool in = project_point(view, centers[g], u, vv, d);
      for (int t = 0; t < 16; ++t) {
        bool corr = false;
        if (in) {
          const long pc = std::lround(u), pr = std::lround(vv);
          const int cr = cells[t] / 4, cc = cells[t] % 4;
          corr = pc >= 0 && pc < 64 && pr >= 0 && pr < 64 && pr / 16 == cr && pc / 16 == cc;
        }
        CHECK(v.at(g, 13 + t) == corr);
        CHECK(v.at(13 + t, g) == corr);
      }
      CHECK(v.at(g, g));  // within-modality stays valid
    }
    // the off-frame center correlates with nothing
    for (int t = 0; t < 16; ++t) CHECK_FALSE(v.at(12, 13 + t));
  }

  SUBCASE("the four scheme settings give four distinct matrices") {
    std::vector<Vec3> centers{{0, 0, 0}};  // projects to the frame center
    std::vector<int> cells{10, 0};         // cell 10 holds the center pixel, cell 0 does not
    Validity gg = correlation_mask(centers, cells, 4, view, {false, false});
    Validity lg = correlation_mask(centers, cells, 4, view, {true, false});
    Validity gl = correlation_mask(centers, cells, 4, view, {false, true});
    Validity ll = correlation_mask(centers, cells, 4, view, {true, true});
    CHECK(gg.valid != lg.valid);
    CHECK(gg.valid != gl.valid);
    CHECK(gg.valid != ll.valid);
    CHECK(lg.valid != gl.valid);
    CHECK(lg.valid != ll.valid);
    CHECK(gl.valid != ll.valid);
    // global-global is all-valid
    CHECK(std::count(gg.valid.begin(), gg.valid.end(), false) == 0);
    // local directions mask exactly the uncorrelated cross pairs
    CHECK_FALSE(lg.at(0, 2));  // 3d -> cell 0
    CHECK(lg.at(0, 1));        // 3d -> cell 10
    CHECK(lg.at(2, 0));        // 2d -> 3d untouched in this direction
    CHECK_FALSE(gl.at(2, 0));
    CHECK(gl.at(0, 2));
  }
}

TEST_CASE("sincos table") {
  auto t = sincos_grid(2, 2, 8);
  REQUIRE(t.size() == 2 * 2 * 8);
  // cell (0,0): every sine 0, every cosine 1
  for (int i = 0; i < 8; i += 2) {
    CHECK(t[i] == 0.0);
    CHECK(t[i + 1] == 1.0);
  }
  // cell (1,0) at row offset 2*8: row half uses omega_i = 10000^(-2i/half)
  const double* r10 = &t[2 * 8];
  CHECK(r10[0] == doctest::Approx(std::sin(1.0)).epsilon(1e-15));
  CHECK(r10[1] == doctest::Approx(std::cos(1.0)).epsilon(1e-15));
  CHECK(r10[2] == doctest::Approx(std::sin(0.01)).epsilon(1e-15));
  CHECK(r10[3] == doctest::Approx(std::cos(0.01)).epsilon(1e-15));
  CHECK(r10[4] == 0.0);
  CHECK(r10[5] == 1.0);
  // cell (0,1): column half active instead
  const double* r01 = &t[1 * 8];
  CHECK(r01[0] == 0.0);
  CHECK(r01[4] == doctest::Approx(std::sin(1.0)).epsilon(1e-15));
  CHECK_THROWS(sincos_grid(2, 2, 6));
}

TEST_CASE("positional encodings") {
  ParameterTree pt(5);
  PosEnc pos = make_pos_enc(pt, "pos", 4, 4, 8);
  SUBCASE("2d table rows are gathered by cell index") {
    Tensor rows = positional_for_2d({5, 0, 15}, pos);
    CHECK(rows.shape() == std::vector<int>{3, 8});
    auto table = sincos_grid(4, 4, 8);
    for (int j = 0; j < 8; ++j) {
      CHECK(rows.values()[0 * 8 + j] == table[5 * 8 + j]);
      CHECK(rows.values()[2 * 8 + j] == table[15 * 8 + j]);
    }
  }
  SUBCASE("3d encoder maps coordinates through the mlp") {
    Tensor rows = positional_for_3d({{0.1, -0.2, 0.3}, {0, 0, 0}}, pos);
    CHECK(rows.shape() == std::vector<int>{2, 8});
    CHECK_THROWS(positional_for_3d({}, pos));
  }
}

TEST_CASE("transformer block") {
  ParameterTree pt(23);
  BlockParams p = make_block_params(pt, "blk", 8);
  Tensor x = random_rows(5, 8, 77);

  SUBCASE("zeroed output projections make the block an identity") {
    zero_param(p.wo);
    zero_param(p.mlp2_w);
    Tensor y = transformer_block(x, p, 2, nullptr);
    CHECK(y.values() == x.values());
  }
  SUBCASE("all-valid validity equals unmasked attention bitwise") {
    Validity v;
    v.n3d = 3;
    v.n2d = 2;
    v.valid.assign(25, true);
    Tensor masked = transformer_block(x, p, 2, &v);
    Tensor open = transformer_block(x, p, 2, nullptr);
    CHECK(same_bits(masked.values(), open.values(), 0, masked.values().size()));
  }
  SUBCASE("single valid key hands over its value row exactly") {
    // one 3d token, two 2d tokens, nothing correlated: the 3d query's only
    // valid key is itself
    Validity v;
    v.n3d = 1;
    v.n2d = 2;
    v.valid.assign(9, true);
    v.valid[1] = v.valid[2] = false;
    AttnTrace trace;
    Tensor x3 = random_rows(3, 8, 78);
    transformer_block(x3, p, 2, &v, &trace);
    REQUIRE(trace.head_weights.size() == 2);
    CHECK(trace.head_weights[0][0] == 1.0);
    CHECK(trace.head_weights[0][1] == 0.0);
    CHECK(trace.head_weights[0][2] == 0.0);
    CHECK(same_bits(trace.attended, trace.values, 0, 8));
  }
  SUBCASE("validity size mismatch refused") {
    Validity v;
    v.n3d = 2;
    v.n2d = 1;
    v.valid.assign(9, true);
    CHECK_THROWS(transformer_block(random_rows(4, 8, 1), p, 2, &v));
    CHECK_THROWS(transformer_block(x, p, 3, nullptr));  // 8 % 3 != 0
  }
}

TEST_CASE("joint encoder") {
  const int c = 8;
  ParameterTree pt(31);
  EncoderParams enc = make_encoder_params(pt, "enc", 1, c, 2);
  ParameterTree pt0(31);
  EncoderParams enc0 = make_encoder_params(pt0, "enc", 0, c, 2);
  Tensor vis3 = random_rows(3, c, 1), pos3 = random_rows(3, c, 2, 0.1);
  Tensor vis2 = random_rows(4, c, 3), pos2 = random_rows(4, c, 4, 0.1);

  auto all_valid = [](int n3, int n2) {
    Validity v;
    v.n3d = n3;
    v.n2d = n2;
    v.valid.assign(static_cast<size_t>(n3 + n2) * (n3 + n2), true);
    return v;
  };

  SUBCASE("zero blocks exposes the additive composition") {
    EncodeResult r = encode(vis3, pos3, vis2, pos2, enc0, all_valid(3, 4));
    CHECK(r.joint.shape() == std::vector<int>{7, c});
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < c; ++j)
        CHECK(r.e3d.values()[i * c + j] ==
              vis3.values()[i * c + j] + pos3.values()[i * c + j] + enc0.m3d.values()[j]);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < c; ++j)
        CHECK(r.e2d.values()[i * c + j] ==
              vis2.values()[i * c + j] + pos2.values()[i * c + j] + enc0.m2d.values()[j]);
  }
  SUBCASE("splits agree with the joint sequence") {
    EncodeResult r = encode(vis3, pos3, vis2, pos2, enc, all_valid(3, 4));
    for (int i = 0; i < 3 * c; ++i) CHECK(r.joint.values()[i] == r.e3d.values()[i]);
    for (int i = 0; i < 4 * c; ++i) CHECK(r.joint.values()[3 * c + i] == r.e2d.values()[i]);
  }
  SUBCASE("3d-only path") {
    Validity v = all_valid(3, 0);
    EncodeResult r = encode(vis3, pos3, Tensor(), Tensor(), enc, v);
    CHECK(r.joint.shape() == std::vector<int>{3, c});
    CHECK_FALSE(r.e2d.defined());
  }
  SUBCASE("values at invalid key positions cannot touch a query") {
    // 1 block; both cross directions invalid for every pair
    Validity v = all_valid(3, 4);
    for (int q = 0; q < 3; ++q)
      for (int k = 3; k < 7; ++k) v.valid[static_cast<size_t>(q) * 7 + k] = false;
    EncodeResult base = encode(vis3, pos3, vis2, pos2, enc, v);
    Tensor vis2_poked = add(vis2, random_rows(4, c, 55, 3.0));
    EncodeResult poked = encode(vis3, pos3, vis2_poked, pos2, enc, v);
    CHECK(same_bits(base.e3d.values(), poked.e3d.values(), 0, 3 * c));
    // sanity: the 2d rows themselves did change
    CHECK_FALSE(same_bits(base.e2d.values(), poked.e2d.values(), 0, 4 * c));
  }
  SUBCASE("reordering 2d tokens with their validity permutes the outputs") {
    std::vector<Vec3> centers{{0, 0, 0}, {0.5, 0.5, 0}, {-0.4, 0.2, 0.6}};
    ViewSpec view = default_view(64, 64);
    std::vector<int> cells{10, 0, 5, 12};
    Validity v = correlation_mask(centers, cells, 4, view, {true, true});
    EncodeResult base = encode(vis3, pos3, vis2, pos2, enc, v);

    const std::vector<int> perm{2, 0, 3, 1};  // new position i takes old perm[i]
    std::vector<int> cells_p(4);
    for (int i = 0; i < 4; ++i) cells_p[i] = cells[perm[i]];
    Validity vp = correlation_mask(centers, cells_p, 4, view, {true, true});
    Tensor vis2_p = gather_rows(vis2, perm), pos2_p = gather_rows(pos2, perm);
    EncodeResult out = encode(vis3, pos3, vis2_p, pos2_p, enc, vp);

    for (int i = 0; i < 3 * c; ++i)
      CHECK(out.e3d.values()[i] == doctest::Approx(base.e3d.values()[i]).epsilon(1e-12));
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < c; ++j)
        CHECK(out.e2d.values()[i * c + j] ==
              doctest::Approx(base.e2d.values()[perm[i] * c + j]).epsilon(1e-12));
  }
  SUBCASE("count mismatch refused") {
    CHECK_THROWS(encode(vis3, pos3, vis2, pos2, enc, all_valid(3, 3)));
  }
}

TEST_CASE("cross block") {
  ParameterTree pt(61);
  BlockParams p = make_block_params(pt, "x", 8);
  Tensor q = random_rows(5, 8, 6);

  SUBCASE("single key-value row is handed to every query") {
    Tensor kv = random_rows(1, 8, 7);
    AttnTrace trace;
    cross_block(q, kv, p, 2, &trace);
    // every attended row equals the value projection of the one kv row
    REQUIRE(trace.attended.size() == 5 * 8);
    for (int i = 0; i < 5; ++i)
      CHECK(std::memcmp(trace.attended.data() + i * 8, trace.values.data(),
                        8 * sizeof(double)) == 0);
  }
  SUBCASE("zeroed projections reduce to the identity on queries") {
    zero_param(p.wo);
    zero_param(p.mlp2_w);
    Tensor y = cross_block(q, random_rows(7, 8, 9), p, 2);
    CHECK(y.values() == q.values());
  }
}
