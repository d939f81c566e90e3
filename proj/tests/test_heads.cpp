#include <doctest.h>

#include <cmath>
#include <limits>

#include "avu/decoder.hpp"
#include "avu/errors.hpp"
#include "avu/mask_decoder.hpp"
#include "avu/model.hpp"
#include "avu/ops.hpp"
#include "avu/optim.hpp"
#include "avu/prompts.hpp"
#include "avu/ssl.hpp"
#include "avu/synth.hpp"
#include "avu/vocab.hpp"
#include "fixtures.hpp"

using namespace avu;

TEST_CASE("vocabulary layout") {
  const TokenVocab v(6, 16, 8);
  CHECK(v.name(v.bos()) == "BOS");
  CHECK(v.name(v.task(Task::kAVQA)) == "TASK_AVQA");
  CHECK(v.cls(0) == 9);
  CHECK(v.name(v.cls(6)) == "CLS_6");
  CHECK(v.name(v.mod(Modality::kAV)) == "MOD_AV");
  CHECK(v.name(v.bin(15)) == "BIN_15");
  CHECK(v.name(v.ans(7)) == "ANS_7");
  CHECK(v.size() == 4 + 5 + 7 + 3 + 16 + 8 + 1);
  for (int id = 0; id < static_cast<int>(v.size()); ++id) CHECK(v.parse(v.name(id)) == id);
  CHECK_FALSE(v.parse("CLS_99").has_value());
}

TEST_CASE("label encoding examples") {
  const TokenVocab v(6, 16, 8);
  LabelBlock ave;
  ave.payload = AveLabels{6, {0, 5, 5}};
  const TokenProgram p = encode_labels(ave, Task::kAVE, v, 3);
  CHECK(p.tokens == std::vector<int>{v.bos(), v.task(Task::kAVE), v.cls(0), v.cls(5), v.cls(5), v.eos()});

  LabelBlock qa;
  qa.payload = AvqaLabels{8, 7};
  CHECK(encode_labels(qa, Task::kAVQA, v, 10).tokens ==
        std::vector<int>{v.bos(), v.task(Task::kAVQA), v.ans(7), v.eos()});

  TokenProgram ssl{Task::kSSL, {v.bos(), v.task(Task::kSSL), v.bin(3), v.eos()}};
  CHECK(std::get<SslLabels>(decode_tokens(ssl, v, 1).payload).bins == std::vector<std::int32_t>{3});

  LabelBlock avvp;
  AvvpLabels l;
  l.num_classes = 6;
  l.audio.assign(6, 0);
  l.visual.assign(6, 0);
  l.audio[3] = l.visual[3] = 1;  // class 4 on both
  l.visual[0] = 1;               // class 1 visible only
  l.audio[5] = 1;                // class 6 audible only
  avvp.payload = l;
  CHECK(program_to_text(encode_labels(avvp, Task::kAVVP, v, 1), v) ==
        "BOS TASK_AVVP MOD_A CLS_6 MOD_V CLS_1 MOD_AV CLS_4 SEP EOS");
}

TEST_CASE("parse errors") {
  const TokenVocab v(6, 16, 8);
  SUBCASE("missing EOS") {
    TokenProgram p{Task::kAVQA, {v.bos(), v.task(Task::kAVQA), v.ans(1)}};
    try {
      decode_tokens(p, v, 10);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("end of program") != std::string::npos);
    }
  }
  SUBCASE("wrong AVE segment count names T") {
    TokenProgram p{Task::kAVE, {v.bos(), v.task(Task::kAVE), v.cls(1), v.cls(1), v.eos()}};
    try {
      decode_tokens(p, v, 3);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("T=3") != std::string::npos);
    }
  }
  SUBCASE("unsorted AVVP pairs") {
    TokenProgram p{Task::kAVVP, {v.bos(), v.task(Task::kAVVP), v.mod(Modality::kV), v.cls(1),
                                 v.mod(Modality::kA), v.cls(2), v.sep(), v.eos()}};
    CHECK_THROWS_AS(decode_tokens(p, v, 1), ParseError);
  }
  SUBCASE("text round trip and unknown names") {
    const auto p = program_from_text("BOS TASK_AVS MASK EOS", v);
    CHECK(p.task == Task::kAVS);
    CHECK(program_to_text(p, v) == "BOS TASK_AVS MASK EOS");
    CHECK_THROWS_AS(program_from_text("BOS TASK_AVS WHAT EOS", v), ParseError);
  }
}

TEST_CASE("grammar cursor accepts exactly the canonical programs") {
  const TokenVocab v(3, 4, 8);
  Rng rng(21);
  for (Task task : kAllTasks) {
    for (int i = 0; i < 50; ++i) {
      const LabelBlock lb = fixtures::random_labels(task, rng, 3, 3, 4, 8);
      const TokenProgram p = encode_labels(lb, task, v, 3);
      CHECK(p.tokens.size() <= GrammarCursor::max_length(task, 3, 3));
      GrammarCursor g(v, task, 3);
      for (int tok : p.tokens) {
        REQUIRE(g.allows(tok));
        g.advance(tok);
      }
      CHECK(g.finished());
    }
  }
  GrammarCursor g(v, Task::kAVE, 3);
  CHECK(g.allowed() == std::vector<int>{v.bos()});
  CHECK_THROWS_AS(g.advance(v.eos()), ParseError);
}

TEST_CASE("greedy decoding always parses, even under hostile scores") {
  const TokenVocab v(3, 4, 8);
  Rng rng(22);
  for (Task task : kAllTasks) {
    for (int mode = 0; mode < 3; ++mode) {
      const LogitFn fn = [&](const std::vector<int>&, const std::vector<int>&) {
        std::vector<double> s(v.size());
        for (auto& x : s) x = rng.normal(0.0, 5.0);
        if (mode == 1) s.assign(v.size(), std::numeric_limits<double>::quiet_NaN());
        if (mode == 2) s.assign(v.size(), -std::numeric_limits<double>::infinity());
        s[static_cast<std::size_t>(v.eos())] = mode == 0 ? 100.0 : s[0];
        return s;
      };
      const TokenProgram p = greedy_decode(v, task, 3, fn);
      CHECK_NOTHROW(decode_tokens(p, v, 3));
    }
  }
}

namespace {

DecoderConfig small_decoder(std::size_t t, std::size_t m) {
  DecoderConfig dc;
  dc.dim = 8;
  dc.heads = 2;
  dc.ffn_dim = 16;
  dc.segments = t;
  dc.patches = m;
  dc.max_length = 20;
  return dc;
}

UnifiedSequence random_sequence(Rng& rng, std::size_t t, std::size_t m, std::size_t c) {
  return serialize(randn(rng, {2 * t, c}), randn(rng, {t, m + 1, c}));
}

}  // namespace

TEST_CASE("token decoder") {
  Rng rng(23);
  const TokenVocab v(3, 4, 8);
  ParamStore store;
  const DecoderParams p = make_decoder_params(store, rng, small_decoder(3, 4), v.size(), all_tasks());
  const Tensor mem = memory_with_provenance(p, random_sequence(rng, 3, 4, 8));
  CHECK(mem.shape() == Shape{2 * 3 + 3 * 5, 8});

  SUBCASE("logits are causal") {
    const std::vector<int> a = {v.bos(), v.task(Task::kAVE), v.cls(1)};
    const std::vector<int> b = {v.bos(), v.task(Task::kAVE), v.cls(2)};
    const std::vector<int> segs = {3, 0, 1};
    const Tensor la = decoder_logits(p, mem, a, segs);
    const Tensor lb = decoder_logits(p, mem, b, segs);
    for (std::size_t i = 0; i < 2 * v.size(); ++i) CHECK(la.data()[i] == doctest::Approx(lb.data()[i]).epsilon(1e-12));
    const Tensor step = token_decoder_step(p, mem, std::span<const int>(a.data(), 2),
                                           std::span<const int>(segs.data(), 2), v.bos());
    for (std::size_t i = 0; i < v.size(); ++i)
      CHECK(step.data()[i] == doctest::Approx(la.data()[v.size() + i]).epsilon(1e-12));
  }
  SUBCASE("context row and focus") {
    const std::vector<int> a = {v.bos(), v.task(Task::kAVE)};
    const std::vector<int> segs = {3, 0};
    const Tensor zero = Tensor::zeros({1, 8});
    const Tensor plain = decoder_logits(p, mem, a, segs);
    const Tensor with_zero = decoder_logits(p, mem, a, segs, &zero);
    for (std::size_t i = 0; i < plain.numel(); ++i) CHECK(with_zero.data()[i] == plain.data()[i]);
    const Tensor wide = Tensor::zeros({1, 9});
    CHECK_THROWS_AS(decoder_logits(p, mem, a, segs, &wide), ShapeError);

    // Focus touches patch rows only: one-hot at (segment 1, patch 2).
    const UnifiedSequence seq = random_sequence(rng, 3, 4, 8);
    std::vector<double> f(12, 0.0);
    f[1 * 4 + 2] = 1.0;
    const Tensor focus = Tensor::from({3, 4}, f);
    const Tensor base = memory_with_provenance(p, seq);
    const Tensor lit = memory_with_provenance(p, seq, &focus);
    const std::size_t row = 2 * 3 + 1 * 5 + 1 + 2;
    for (std::size_t r = 0; r < base.dim(0); ++r)
      for (std::size_t j = 0; j < 8; ++j) {
        const double want = base.at({r, j}) + (r == row ? p.mem_focus.at({0, j}) : 0.0);
        CHECK(lit.at({r, j}) == doctest::Approx(want).epsilon(1e-14));
      }
    const Tensor bad = Tensor::zeros({3, 5});
    CHECK_THROWS_AS(memory_with_provenance(p, seq, &bad), ShapeError);

    // Summary is the segment mean of focus against where_emb.
    const Tensor s = focus_summary(p, focus);
    for (std::size_t j = 0; j < 8; ++j)
      CHECK(s.at({0, j}) == doctest::Approx(p.where_emb.at({2, j}) / 3).epsilon(1e-14));
  }
  SUBCASE("bad prefixes") {
    const std::vector<int> empty;
    CHECK_THROWS_AS(token_decoder_step(p, mem, empty, empty, v.bos()), ContractError);
    const std::vector<int> no_bos = {v.eos()}, seg = {3};
    CHECK_THROWS_AS(token_decoder_step(p, mem, no_bos, seg, v.bos()), ContractError);
  }
  SUBCASE("teacher plan masks allow every gold target") {
    LabelBlock lb = fixtures::random_labels(Task::kAVVP, rng, 3, 3, 4, 8);
    const TokenProgram prog = encode_labels(lb, Task::kAVVP, v, 3);
    const TeacherPlan plan = teacher_plan(prog, v, 3);
    REQUIRE(plan.inputs.size() == prog.tokens.size() - 1);
    for (std::size_t i = 0; i < plan.targets.size(); ++i)
      CHECK(plan.mask.at({i, static_cast<std::size_t>(plan.targets[i])}) == 0.0);
  }
}

TEST_CASE("teacher-forced loss overfits one sample") {
  SceneConfig sc;
  sc.audio_dim = 16;
  sc.visual_dim = 16;
  const FeatureBundle b = synth_generate(sc, 1, Task::kAVE, 31)[0];
  ModelConfig mc;
  mc.audio_dim = 16;
  mc.visual_dim = 16;
  mc.max_window = 2;
  Model model(mc);
  AdamConfig ac;
  ac.lr = 3e-3;
  Adam opt(model.params().tensors(), ac);
  double loss = 0.0;
  for (int i = 0; i < 500; ++i) {
    model.params().zero_grad();
    const Tensor l = model.loss(b);
    loss = l.item();
    backprop(l);
    opt.step();
  }
  CHECK(loss < 0.05);
  CHECK(std::get<AveLabels>(model.predict(b).labels.payload).classes ==
        std::get<AveLabels>(b.labels.payload).classes);
}

TEST_CASE("mask decoder") {
  MaskDecoderConfig mc;
  CHECK(mc.stage_count() == 4);
  CHECK(mc.stage_channels(0) == 16);
  CHECK(mc.stage_channels(6) == 4);
  mc.height = 48;
  CHECK_THROWS_AS(mc.stage_count(), ConfigError);
  CHECK(grid_side(16) == 4);
  CHECK_THROWS_AS(grid_side(15), ConfigError);

  SUBCASE("zero sequence and zero output conv give zero logits") {
    Rng rng(24);
    MaskDecoderConfig c;
    c.dim = 8;
    c.channels = {4, 2};
    ParamStore store;
    const auto p = make_mask_decoder_params(store, rng, c, all_tasks(), true);
    const UnifiedSequence seq = serialize(Tensor::zeros({6, 8}), Tensor::zeros({3, 17, 8}));
    const Tensor logits = avs_mask_decode(p, seq);
    CHECK(logits.shape() == Shape{3, 1, 64, 64});
    const Tensor probs = ops::sigmoid(logits);
    for (double x : probs.data()) CHECK(x == 0.5);
  }
}

TEST_CASE("ssl heatmap") {
  Rng rng(25);
  const Tensor audio = randn(rng, {1, 4});
  const Tensor row = randn(rng, {1, 4});
  const Tensor same = ops::concat({row, row, row, row}, 0);
  const Tensor flat = ssl_heatmap(same, audio);
  for (double w : flat.data()) CHECK(w == doctest::Approx(0.25).epsilon(1e-12));

  std::vector<double> p(16 * 4, 0.0);
  for (std::size_t j = 0; j < 4; ++j) p[9 * 4 + j] = 3.0 * audio.data()[j];
  const Tensor h = ssl_heatmap(Tensor::from({16, 4}, p), audio);
  std::size_t best = 0;
  for (std::size_t i = 0; i < 16; ++i)
    if (h.data()[i] > h.data()[best]) best = i;
  CHECK(best == 9);
  CHECK(h.shape() == Shape{16});

  // One dominant cell of a 4x4 grid covers its 16x16 block of a 64x64 map.
  std::vector<double> heat(16, 0.01);
  heat[5] = 0.85;
  const auto region = heatmap_region(heat, 4, 64, 64);
  std::size_t on = 0;
  for (auto x : region) on += x;
  CHECK(on == 256);
  CHECK(region[16 * 64 + 16] == 1);
  CHECK(region[0] == 0);
}

TEST_CASE("prompt catalog") {
  const std::size_t k = 6;
  CHECK(prompt_count(k) == 12);
  CHECK(prompt_catalog(k).size() == 12);
  CHECK(prompt_template(exist_prompt_id(3), k).cls == 3);
  CHECK(prompt_template(count_prompt_id(k), k).question == QuestionType::kCount);
  CHECK(prompt_template(location_prompt_id(k), k).question == QuestionType::kLocation);
  CHECK(task_prompt_rows(Task::kAVQA, k) == k + 2);
  CHECK(task_prompt_rows(Task::kAVE, k) == 1);
  CHECK_THROWS_AS(prompt_template(40, k), ConfigError);
  CHECK_THROWS_AS(prompt_template_checked(task_prompt_id(Task::kAVE), k, Task::kAVQA), ConfigError);
  CHECK(quadrant_answer(0, 4) == answer::kTopLeft);
  CHECK(quadrant_answer(3, 4) == answer::kTopRight);
  CHECK(quadrant_answer(12, 4) == answer::kBottomLeft);
  CHECK(quadrant_answer(10, 4) == answer::kBottomRight);
}
