#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "avu/bundle.hpp"
#include "avu/errors.hpp"
#include "avu/model.hpp"
#include "avu/ops.hpp"
#include "avu/synth.hpp"
#include "avu/vocab.hpp"

using namespace avu;

namespace {

SceneConfig fixture_scene() {
  SceneConfig c;
  c.audio_dim = 128;
  c.visual_dim = 512;
  return c;
}

FeatureBundle fixture(Task task, std::uint64_t stream = 1) {
  return synth_generate(fixture_scene(), 1, task, stream).at(0);
}

std::uint16_t le16(const std::vector<std::uint8_t>& b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

}  // namespace

TEST_CASE("bundles start with the magic and a little-endian header") {
  const auto bytes = encode_bundle(fixture(Task::kAVS));
  REQUIRE(bytes.size() > 24);
  CHECK(bytes[0] == 0x41);
  CHECK(bytes[1] == 0x56);
  CHECK(bytes[2] == 0x55);
  CHECK(bytes[3] == 0x46);
  CHECK(le16(bytes, 4) == 1);
  CHECK(bytes[6] == static_cast<std::uint8_t>(Task::kAVS));
  CHECK(le16(bytes, 7) == 10);
  CHECK(le16(bytes, 9) == 16);
  CHECK(le16(bytes, 11) == 128);
  CHECK(le16(bytes, 13) == 512);
  CHECK(le16(bytes, 17) == 64);
  CHECK(le16(bytes, 19) == 64);
}

TEST_CASE("write, read, write is byte-identical for every task") {
  for (Task t : kAllTasks) {
    const FeatureBundle b = fixture(t, 3);
    const auto first = encode_bundle(b);
    const FeatureBundle back = decode_bundle(first);
    CHECK(encode_bundle(back) == first);
    CHECK(back.task == t);
    CHECK(back.audio == b.audio);
    CHECK(back.patch == b.patch);
    CHECK(back.labels.prompt_template == b.labels.prompt_template);
    CHECK(back.labels.payload.index() == b.labels.payload.index());
  }
}

TEST_CASE("generated fixtures load with the feature extractor widths") {
  const FeatureBundle b = decode_bundle(encode_bundle(fixture(Task::kAVE)));
  CHECK(audio_tensor(b).shape() == Shape{10, 128});
  CHECK(frame_tensor(b).shape() == Shape{10, 512});
  CHECK(patch_tensor(b).shape() == Shape{10, 16, 512});
}

TEST_CASE("read errors") {
  auto bytes = encode_bundle(fixture(Task::kAVE));
  SUBCASE("bad magic") {
    bytes[0] = 'X';
    CHECK_THROWS_AS(decode_bundle(bytes), FormatError);
  }
  SUBCASE("unsupported version") {
    bytes[4] = 9;
    CHECK_THROWS_AS(decode_bundle(bytes), FormatError);
  }
  SUBCASE("truncated in the patch tensor names both lengths") {
    const std::size_t header = 4 + 2 + 1 + 7 * 2;
    const std::size_t cut = header + (10 * 128 + 10 * 512 + 100) * 4;
    bytes.resize(cut);
    try {
      decode_bundle(bytes);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("patch") != std::string::npos);
      CHECK(msg.find(std::to_string(10 * 16 * 512 * 4)) != std::string::npos);
    }
  }
  SUBCASE("trailing bytes") {
    bytes.push_back(0);
    CHECK_THROWS_AS(decode_bundle(bytes), FormatError);
  }
  SUBCASE("NaN payload") {
    const std::size_t header = 4 + 2 + 1 + 7 * 2;
    const float nan = std::nanf("");
    std::memcpy(bytes.data() + header, &nan, 4);
    CHECK_THROWS_AS(decode_bundle(bytes), ValidationError);
  }
}

TEST_CASE("validation rejects before writing") {
  FeatureBundle b = fixture(Task::kAVE);
  std::ostringstream sink;
  SUBCASE("non-square patch grid") {
    b.patches = 15;
    CHECK_THROWS_AS(write_bundle(b, sink), ValidationError);
  }
  SUBCASE("non-finite feature") {
    b.audio[3] = INFINITY;
    CHECK_THROWS_AS(write_bundle(b, sink), ValidationError);
  }
  SUBCASE("label block of another task") {
    b.labels.payload = AvqaLabels{8, 1};
    CHECK_THROWS_AS(write_bundle(b, sink), ValidationError);
  }
  SUBCASE("class index out of range") {
    std::get<AveLabels>(b.labels.payload).classes[0] = 200;
    CHECK_THROWS_AS(write_bundle(b, sink), ValidationError);
  }
  CHECK(sink.str().empty());
}

TEST_CASE("file round trip and manifest") {
  const auto dir = std::filesystem::temp_directory_path() / "avu_bundle_test";
  std::filesystem::create_directories(dir);
  const FeatureBundle b = fixture(Task::kSSL);
  const auto path = dir / "clip.avuf";
  write_bundle_file(b, path);
  write_manifest(b, path, "synthetic", "test");
  CHECK(encode_bundle(read_bundle_file(path)) == encode_bundle(b));
  CHECK(std::filesystem::exists(dir / "clip.json"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("input projections") {
  FeatureBundle b = fixture(Task::kAVE);
  SUBCASE("identity on square widths is passthrough") {
    SceneConfig c = fixture_scene();
    c.audio_dim = 8;
    c.visual_dim = 8;
    FeatureBundle s = synth_generate(c, 1, Task::kAVE, 2)[0];
    InputProjections proj{identity_affine(8), identity_affine(8), identity_affine(8)};
    const auto out = project_inputs(s, proj, Tensor::zeros({1, 8}));
    for (std::size_t i = 0; i < out.audio.numel(); ++i)
      CHECK(out.audio.data()[i] == static_cast<double>(s.audio[i]));
    for (std::size_t i = 0; i < out.patch.numel(); ++i)
      CHECK(out.patch.data()[i] == static_cast<double>(s.patch[i]));
  }
  SUBCASE("zero projection gives zero streams") {
    Affine za{Tensor::zeros({128, 4}), Tensor::zeros({4})};
    Affine zv{Tensor::zeros({512, 4}), Tensor::zeros({4})};
    Affine zt{Tensor::zeros({4, 4}), Tensor::zeros({4})};
    const auto out = project_inputs(b, {za, zv, zt}, Tensor::zeros({1, 4}));
    for (const Tensor& t : {out.audio, out.frame, out.patch, out.prompt})
      for (double v : t.data()) CHECK(v == 0.0);
  }
  SUBCASE("mismatched widths") {
    Affine wrong{Tensor::zeros({64, 4}), Tensor::zeros({4})};
    Affine zv{Tensor::zeros({512, 4}), Tensor::zeros({4})};
    CHECK_THROWS_AS(project_inputs(b, {wrong, zv, zv}, Tensor::zeros({1, 512})), ShapeError);
  }
}

// Contract for bundles coming from the feature extractor: unlabeled, real
// encoder widths, prompt given by template id only.
TEST_CASE("unlabeled extractor-shaped bundle is read and inferred") {
  FeatureBundle b = fixture(Task::kAVE, 5);
  b.labels = LabelBlock{};
  b.labels.labeled = false;
  b.labels.prompt_template = 0;
  const auto bytes = encode_bundle(b);
  const FeatureBundle back = decode_bundle(bytes);
  CHECK_FALSE(back.labels.labeled);
  CHECK(back.audio_dim == 128);
  CHECK(back.visual_dim == 512);

  ModelConfig mc;
  mc.audio_dim = 128;
  mc.visual_dim = 512;
  const Model model(mc);
  const Prediction p = model.predict(back);
  const TokenVocab& v = model.vocab();
  CHECK_NOTHROW(decode_tokens(p.program, v, 10));
  CHECK_THROWS_AS(model.loss(back), ValidationError);
}
