// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tataa/refmodel.hpp"

using namespace tataa;
using namespace tataa::refmodel;

TEST_CASE("compare metrics: exactness, orthogonality, closed-form RMSE") {
  std::vector<double> a = {1, 2, 3, 4};
  auto r = compare(a, a);
  CHECK(r.rmse == 0.0);
  CHECK(r.cosine == 1.0);
  CHECK(r.max_abs == 0.0);

  auto o = compare({1, 0}, {0, 1});
  CHECK(o.cosine == 0.0);

  // Perturbing one element of an n-vector by delta: RMSE = delta / sqrt(n).
  const int n = 64;
  const double delta = 0.25;
  std::vector<double> u(n, 1.0), v(n, 1.0);
  v[17] += delta;
  CHECK(compare(u, v).rmse == doctest::Approx(delta / std::sqrt(double(n))).epsilon(1e-12));
}

TEST_CASE("compare_bits reports ulp histogram") {
  std::vector<uint16_t> a = {0x3F80, 0x4000, 0x4040};
  std::vector<uint16_t> b = {0x3F80, 0x4001, 0x4043};
  auto r = compare_bits(a, b);
  CHECK(r.ulp_hist[0] == 1);
  CHECK(r.ulp_hist[1] == 1);
  CHECK(r.ulp_hist[3] == 1);
}

TEST_CASE("reference operator identities") {
  RefTensor x{{0.0, 1.0, -2.0, 5.0}, {2, 2}};
  auto gl = gelu(x);
  CHECK(gl.data[0] == 0.0);
  CHECK(gl.data[3] == doctest::Approx(5.0).epsilon(1e-5));  // asymptotically x
  CHECK(gl.data[2] < 0.0);
  CHECK(std::fabs(gl.data[2]) < 0.06);  // large negative x decays to zero

  auto sm = softmax_rows(RefTensor{{0.0, 0.0, 1.0, 1.0}, {2, 2}});
  CHECK(sm.data[0] == doctest::Approx(0.5));
  CHECK(sm.data[2] == doctest::Approx(0.5));

  // Uniform-row layernorm collapses to beta.
  RefTensor c{{3.0, 3.0, 3.0, 3.0}, {1, 4}};
  RefTensor gam{{2, 2, 2, 2}, {4}};
  RefTensor bet{{0.5, 0.5, 0.5, 0.5}, {4}};
  auto ln = layernorm(c, gam, bet, 1e-5);
  for (double v : ln.data) CHECK(v == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("hand-computed single-head attention at tiny size") {
  // seq=2, d=4, one head: attention with scale 1/2.
  BlockSpec spec;
  spec.seq = 2;
  spec.hidden = 4;
  spec.heads = 1;
  spec.mlp = 8;
  auto w = make_block_weights(spec, 42);
  auto x = make_block_input(spec, 7);
  auto tape = ref_block(spec, w, x);

  // Recompute attention by hand from the tape's pre-matmul tensors.
  const auto& q = tape.at("q_q_h0");
  const auto& k = tape.at("kT_q_h0");
  const auto& v = tape.at("v_q_h0");
  double scale = 0.5;  // 1/sqrt(4)
  for (int i = 0; i < 2; ++i) {
    double s0 = 0, s1 = 0;
    for (int c = 0; c < 4; ++c) {
      s0 += q.data[static_cast<size_t>(i * 4 + c)] * k.data[static_cast<size_t>(0 * 4 + c)];
      s1 += q.data[static_cast<size_t>(i * 4 + c)] * k.data[static_cast<size_t>(1 * 4 + c)];
    }
    s0 *= scale;
    s1 *= scale;
    CHECK(tape.at("scores_h0").data[static_cast<size_t>(i * 2)] == doctest::Approx(s0).epsilon(1e-12));
    double e0 = std::exp(s0), e1 = std::exp(s1);
    double p0 = e0 / (e0 + e1);
    CHECK(tape.at("probs_h0").data[static_cast<size_t>(i * 2)] == doctest::Approx(p0).epsilon(1e-12));
    for (int c = 0; c < 4; ++c) {
      double sv = p0 * v.data[static_cast<size_t>(0 * 4 + c)] +
                  (1 - p0) * v.data[static_cast<size_t>(1 * 4 + c)];
      CHECK(tape.at("sv_q_h0").data[static_cast<size_t>(i * 4 + c)] == doctest::Approx(sv).epsilon(1e-12));
    }
  }
}

TEST_CASE("zero input and zero weights yield zero output") {
  BlockSpec spec;
  spec.seq = 4;
  spec.hidden = 8;
  spec.heads = 2;
  spec.mlp = 16;
  TensorMap w = make_block_weights(spec, 1);
  for (auto& [name, t] : w)
    for (auto& v : t.data) v = 0.0;
  RefTensor x{std::vector<double>(32, 0.0), {4, 8}};
  auto tape = ref_block(spec, w, x);
  for (double v : tape.at("y").data) CHECK(v == 0.0);
}

TEST_CASE("ref_block is deterministic and batch-permutation equivariant") {
  BlockSpec spec;
  auto w = make_block_weights(spec, 5);
  auto x1 = make_block_input(spec, 11);
  auto x2 = make_block_input(spec, 12);
  auto y1a = ref_block(spec, w, x1).at("y");
  auto y1b = ref_block(spec, w, x1).at("y");
  CHECK(y1a.data == y1b.data);
  // Items are independent: evaluating x2 before x1 changes nothing.
  auto y2 = ref_block(spec, w, x2).at("y");
  auto y1c = ref_block(spec, w, x1).at("y");
  CHECK(y1a.data == y1c.data);
  CHECK(y2.data != y1a.data);
}

TEST_CASE("calibration scales are positive and cover the tape") {
  BlockSpec spec;
  auto w = make_block_weights(spec, 5);
  auto scales = calibrate_block(spec, w, 99, 4);
  for (const char* name : {"ln1_q", "q_q_h0", "kT_q_h1", "probs_q_h0", "act_q"}) {
    REQUIRE(scales.count(name));
    CHECK(scales.at(name) > 0.0);
  }
}
