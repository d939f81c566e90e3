#include <doctest.h>

#include <cmath>

#include "avu/attention.hpp"
#include "avu/errors.hpp"
#include "avu/ops.hpp"
#include "avu/spm.hpp"
#include "avu/tpgl.hpp"
#include "avu/tpm.hpp"
#include "oracles.hpp"

using namespace avu;

namespace {

oracle::Mat rows(const Tensor& t, std::size_t offset = 0, std::size_t count = 0) {
  const std::size_t c = t.dim(t.rank() - 1);
  if (count == 0) count = t.numel() / c;
  oracle::Mat m(count, std::vector<double>(c));
  for (std::size_t r = 0; r < count; ++r)
    for (std::size_t j = 0; j < c; ++j) m[r][j] = t.data()[(offset + r) * c + j];
  return m;
}

std::vector<double> vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

oracle::Mat project(const Affine& a, const oracle::Mat& x) {
  return oracle::affine(x, vec(a.w), vec(a.b), a.in_dim(), a.out_dim());
}

// Dense single-head attention of one site, through the oracle.
oracle::Mat site_oracle(const AttentionSite& s, const oracle::Mat& q, const oracle::Mat& ctx,
                        const std::vector<std::vector<bool>>* allowed = nullptr) {
  return oracle::attention(project(s.query, q), project(s.key, ctx), project(s.value, ctx),
                           allowed);
}

Affine zero_bias(Affine a) {
  a.b = Tensor::zeros({a.out_dim()});
  return a;
}

void check_close(const oracle::Mat& want, const Tensor& got, double tol) {
  const std::size_t c = got.dim(got.rank() - 1);
  REQUIRE(want.size() * c == got.numel());
  for (std::size_t r = 0; r < want.size(); ++r)
    for (std::size_t j = 0; j < c; ++j) CHECK(got.data()[r * c + j] == doctest::Approx(want[r][j]).epsilon(tol));
}

}  // namespace

TEST_CASE("attend matches the dense oracle") {
  Rng rng(11);
  ParamStore store;
  const AttentionSite site = make_attention_site(store, rng, "s", 6, 1, all_tasks());
  const Tensor q = randn(rng, {3, 6});
  const Tensor ctx = randn(rng, {5, 6});
  check_close(site_oracle(site, rows(q), rows(ctx)), attend(site, q, ctx).out, 1e-12);
}

TEST_CASE("attend degenerate contexts") {
  Rng rng(12);
  ParamStore store;
  const AttentionSite site = make_attention_site(store, rng, "s", 4, 2, all_tasks());
  const Tensor q = randn(rng, {3, 4});
  SUBCASE("singleton context returns its value projection") {
    const Tensor ctx = randn(rng, {1, 4});
    const Tensor v = site.value(ctx);
    const Tensor out = attend(site, q, ctx).out;
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t j = 0; j < 4; ++j) CHECK(out.data()[r * 4 + j] == doctest::Approx(v.data()[j]).epsilon(1e-12));
  }
  SUBCASE("identical context rows") {
    const Tensor row = randn(rng, {1, 4});
    const Tensor ctx = ops::concat({row, row, row}, 0);
    const Tensor v = site.value(row);
    const Tensor out = attend(site, q, ctx).out;
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t j = 0; j < 4; ++j) CHECK(out.data()[r * 4 + j] == doctest::Approx(v.data()[j]).epsilon(1e-12));
  }
  SUBCASE("self attention of a token on itself with identity maps") {
    const Tensor f = randn(rng, {1, 4});
    const Tensor out = self_attend(identity_site(4), f, f).out;
    for (std::size_t j = 0; j < 4; ++j) CHECK(out.data()[j] == doctest::Approx(f.data()[j]).epsilon(1e-12));
  }
  SUBCASE("empty context") {
    CHECK_THROWS_AS(attend(site, q, Tensor::zeros({0, 4})), ContractError);
  }
  SUBCASE("width mismatch") {
    CHECK_THROWS_AS(attend(site, q, Tensor::zeros({2, 5})), ShapeError);
  }
}

TEST_CASE("window indices") {
  CHECK(window_indices(0, 2, 10) == std::vector<std::size_t>{0, 1});
  CHECK(window_indices(5, 4, 10) == std::vector<std::size_t>{3, 4, 5, 6, 7});
  CHECK(window_indices(9, 8, 10) == std::vector<std::size_t>{5, 6, 7, 8, 9});
  const Tensor m = window_mask(4, 2);
  CHECK(m.at({0, 0}) == 0.0);
  CHECK(m.at({0, 1}) == 0.0);
  CHECK(std::isinf(m.at({0, 2})));
  const Tensor open = window_mask(4, 0);
  for (double v : open.data()) CHECK(v == 0.0);
}

TEST_CASE("windowed HAN stage matches the per-position oracle") {
  Rng rng(13);
  TPMConfig tc;
  tc.dim = 4;
  tc.max_window = 2;
  ParamStore store;
  const TPMParams p = make_tpm_params(store, rng, tc, all_tasks());
  const HanSites& sites = p.stages[1];
  const std::size_t t = 6;
  const Tensor a = randn(rng, {t, 4});
  const Tensor v = randn(rng, {t, 4});
  auto [out_a, out_v] = han_scale_block(a, v, 2, sites);
  std::vector<std::vector<bool>> allowed(t, std::vector<bool>(t, false));
  for (std::size_t i = 0; i < t; ++i)
    for (auto j : window_indices(i, 2, t)) allowed[i][j] = true;
  oracle::Mat want = site_oracle(sites.audio_self, rows(a), rows(a), &allowed);
  const oracle::Mat cross = site_oracle(sites.audio_cross, rows(a), rows(v), &allowed);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < 4; ++j) want[i][j] += cross[i][j];
  check_close(want, out_a, 1e-12);
}

TEST_CASE("HAN stage on zero inputs with identity sites is zero") {
  const HanSites sites{identity_site(3), identity_site(3), identity_site(3), identity_site(3)};
  auto [a, v] = han_scale_block(Tensor::zeros({5, 3}), Tensor::zeros({5, 3}), 4, sites);
  for (double x : a.data()) CHECK(x == 0.0);
  for (double x : v.data()) CHECK(x == 0.0);
}

TEST_CASE("multiscale aggregation of one stage with identity output") {
  TPMConfig tc;
  tc.dim = 3;
  tc.max_window = 2;
  tc.include_global = false;
  TPMParams p;
  p.out_audio = identity_affine(3);
  p.out_visual = identity_affine(3);
  Rng rng(14);
  const Tensor a = randn(rng, {4, 3});
  const Tensor v = randn(rng, {4, 3});
  const TemporalStreams s = multiscale_aggregate({a}, {v}, p, tc);
  CHECK(vec(s.audio) == vec(a));
  CHECK(vec(s.visual) == vec(v));
  CHECK_THROWS_AS(multiscale_aggregate({a, a}, {v, v}, p, tc), ContractError);
}

TEST_CASE("tpm config") {
  TPMConfig tc;
  tc.max_window = 8;
  CHECK(tc.scales() == std::vector<std::size_t>{2, 4, 6, 8});
  CHECK(tc.stage_count() == 5);
  tc.max_window = 5;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
}

TEST_CASE("patch self-attention residual cases") {
  Rng rng(15);
  const std::size_t c = 4;
  ParamStore store;
  AttentionSite site = make_attention_site(store, rng, "s", c, 1, all_tasks());
  const Tensor patches = randn(rng, {2, 3, c});
  SUBCASE("zero value map keeps the input") {
    site.value = Affine{Tensor::zeros({c, c}), Tensor::zeros({c})};
    CHECK(vec(patch_self_attention(patches, site)) == vec(patches));
  }
  SUBCASE("single patch adds its value projection") {
    site.value = zero_bias(site.value);
    const Tensor one = randn(rng, {1, c});
    const Tensor out = patch_self_attention(one, site);
    const Tensor want = ops::add(one, site.value(one));
    for (std::size_t j = 0; j < c; ++j) CHECK(out.data()[j] == doctest::Approx(want.data()[j]).epsilon(1e-12));
  }
}

TEST_CASE("audio-guided patches and visual-guided audio") {
  Rng rng(16);
  const std::size_t c = 4, t = 2, m = 3;
  ParamStore store;
  AttentionSite site = make_attention_site(store, rng, "s", c, 1, all_tasks());
  const Tensor patches = randn(rng, {t, m, c});
  SUBCASE("zero audio and bias-free values keep the patches") {
    site.value = zero_bias(site.value);
    const GuidedPatches g = audio_guided_patch_attention(patches, Tensor::zeros({t, 1, c}), site);
    CHECK(vec(g.out) == vec(patches));
  }
  SUBCASE("single audio token gives one branch per frame") {
    const GuidedPatches g = audio_guided_patch_attention(patches, randn(rng, {t, 1, c}), site);
    for (std::size_t s = 0; s < t; ++s)
      for (std::size_t p = 1; p < m; ++p)
        for (std::size_t j = 0; j < c; ++j)
          CHECK(g.branch.data()[(s * m + p) * c + j] == doctest::Approx(g.branch.data()[s * m * c + j]).epsilon(1e-12));
  }
  SUBCASE("identical patches give uniform guide weights") {
    Tensor same = ops::concat({ops::slice(patches, 1, 0, 1), ops::slice(patches, 1, 0, 1),
                               ops::slice(patches, 1, 0, 1)}, 1);
    const GuidedAudio g = visual_guided_audio_attention(randn(rng, {t, c}), same, site);
    for (double w : g.weights.data()) CHECK(w == doctest::Approx(1.0 / m).epsilon(1e-12));
  }
  SUBCASE("per-segment independence") {
    const SPMParams sp = make_spm_params(store, rng, c, 1, all_tasks());
    const Tensor audio = randn(rng, {t, c});
    const SpatialStreams full = spm_forward(sp, audio, ops::reshape(audio, {t, 1, c}), patches);
    const Tensor a0 = ops::slice(audio, 0, 0, 1);
    const SpatialStreams one = spm_forward(sp, a0, ops::reshape(a0, {1, 1, c}), ops::slice(patches, 0, 0, 1));
    for (std::size_t i = 0; i < m * c; ++i) CHECK(one.patches.data()[i] == doctest::Approx(full.patches.data()[i]).epsilon(1e-12));
    for (std::size_t i = 0; i < c; ++i) CHECK(one.audio.data()[i] == doctest::Approx(full.audio.data()[i]).epsilon(1e-12));
  }
}

TEST_CASE("tpgl sequences and weights") {
  Rng rng(17);
  const std::size_t c = 4;
  const TPGLParams id{identity_affine(c), identity_affine(c), identity_affine(c), identity_affine(c)};
  SUBCASE("shapes") {
    CHECK(build_tpm_sequence(id, randn(rng, {10, c}), randn(rng, {10, c})).shape() == Shape{20, c});
    CHECK(build_spm_sequence(id, randn(rng, {10, c}), randn(rng, {10, 16, c})).shape() == Shape{10, 17, c});
    CHECK(build_spm_sequence(id, randn(rng, {1, c}), randn(rng, {1, 1, c})).shape() == Shape{1, 2, c});
    const PromptWeights w = prompt_weights(randn(rng, {1, c}), randn(rng, {20, c}), randn(rng, {10, 17, c}), c);
    CHECK(w.temporal.shape() == Shape{20});
    CHECK(w.spatial.shape() == Shape{10, 17});
    CHECK(UnifiedSequence::expected_length(10, 16) == 190);
  }
  SUBCASE("relu after identity clears negatives") {
    const Tensor neg = Tensor::full({3, c}, -0.5);
    const Tensor seq = build_tpm_sequence(id, neg, neg);
    for (double v : seq.data()) CHECK(v == 0.0);
  }
  SUBCASE("uniform cases") {
    const Tensor row = randn(rng, {1, c});
    const Tensor ts = ops::concat({row, row, row, row}, 0);
    const Tensor ss = ops::reshape(ops::concat({row, row, row, row, row, row}, 0), {2, 3, c});
    const PromptWeights w = prompt_weights(randn(rng, {1, c}), ts, ss, c);
    for (double v : w.temporal.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
    for (double v : w.spatial.data()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));
    // A prompt orthogonal to every row has zero logits.
    const Tensor e0 = Tensor::from({1, 2}, {1, 0});
    const Tensor others = Tensor::from({2, 2}, {0, 3, 0, -1});
    const PromptWeights o = prompt_weights(e0, others, Tensor::from({1, 2, 2}, {0, 2, 0, 5}), 2);
    for (double v : o.temporal.data()) CHECK(v == doctest::Approx(0.5));
    for (double v : o.spatial.data()) CHECK(v == doctest::Approx(0.5));
  }
  SUBCASE("weights are distributions") {
    const PromptWeights w = prompt_weights(randn(rng, {1, c}), randn(rng, {6, c}), randn(rng, {3, 5, c}), c);
    double s = 0.0;
    for (double v : w.temporal.data()) {
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("reweight") {
    const Tensor ts = randn(rng, {4, c});
    const Tensor ss = randn(rng, {2, 3, c});
    auto [tu, su] = reweight(ts, ss, uniform_prompt_weights(2, 2));
    for (std::size_t i = 0; i < ts.numel(); ++i) CHECK(tu.data()[i] == doctest::Approx(ts.data()[i] / 4));
    for (std::size_t i = 0; i < ss.numel(); ++i) CHECK(su.data()[i] == doctest::Approx(ss.data()[i] / 3));
    PromptWeights hot{Tensor::from({4}, {0, 0, 1, 0}), Tensor::full({2, 3}, 1.0 / 3)};
    auto [th, sh] = reweight(ts, ss, hot);
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t j = 0; j < c; ++j) CHECK(th.data()[r * c + j] == (r == 2 ? ts.data()[r * c + j] : 0.0));
  }
  SUBCASE("serialize layout and inverse") {
    const Tensor ts = randn(rng, {4, c});
    const Tensor ss = randn(rng, {2, 3, c});
    const UnifiedSequence u = serialize(ts, ss);
    CHECK(u.length() == 4 + 6);
    CHECK(u.provenance[0] == RowTag{RowKind::kTemporalAudio, 0, 0});
    CHECK(u.provenance[2] == RowTag{RowKind::kTemporalVisual, 0, 0});
    CHECK(u.provenance[4] == RowTag{RowKind::kSpatialAudio, 0, 0});
    CHECK(u.provenance[6] == RowTag{RowKind::kSpatialPatch, 0, 1});
    CHECK(u.provenance[7] == RowTag{RowKind::kSpatialAudio, 1, 0});
    auto [t2, s2] = deserialize(u);
    CHECK(vec(t2) == vec(ts));
    CHECK(vec(s2) == vec(ss));
    CHECK_THROWS_AS(serialize(randn(rng, {3, c}), ss), ShapeError);
  }
}
