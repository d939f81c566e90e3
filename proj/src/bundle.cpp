#include "avu/bundle.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>

#include "avu/errors.hpp"
#include "avu/ops.hpp"
#include "json.hpp"

namespace avu {

namespace {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) {
    buf_.push_back(static_cast<std::uint8_t>(v & 0xFF));
    buf_.push_back(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof bits);
    u32(bits);
  }
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& b) : buf_(b) {}

  void need(std::size_t n, const char* what) const {
    if (pos_ + n > buf_.size()) {
      throw FormatError("bundle truncated while reading " + std::string(what) +
                        " at offset " + std::to_string(pos_) + ": expected " +
                        std::to_string(n) + " bytes, " +
                        std::to_string(buf_.size() - pos_) + " available");
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return buf_[pos_++];
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    const auto v = static_cast<std::uint16_t>(buf_[pos_] | (buf_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  void f32s(std::vector<float>& out, std::size_t n, const char* what) {
    need(4 * n, what);
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t bits = 0;
      for (int k = 0; k < 4; ++k)
        bits |= static_cast<std::uint32_t>(buf_[pos_ + 4 * i + k]) << (8 * k);
      std::memcpy(&out[i], &bits, sizeof bits);
    }
    pos_ += 4 * n;
  }
  void u8s(std::vector<std::uint8_t>& out, std::size_t n, const char* what) {
    need(n, what);
    out.assign(buf_.begin() + static_cast<std::ptrdiff_t>(pos_),
               buf_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
  }
  std::size_t offset() const { return pos_; }
  std::size_t size() const { return buf_.size(); }

 private:
  const std::vector<std::uint8_t>& buf_;
  std::size_t pos_ = 0;
};

[[noreturn]] void invalid(const std::string& field, const std::string& why) {
  throw ValidationError("bundle field '" + field + "': " + why);
}

void check_finite(const std::vector<float>& v, const char* field) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) invalid(field, "non-finite value at index " + std::to_string(i));
  }
}

void check_size(const std::vector<float>& v, std::size_t n, const char* field) {
  if (v.size() != n) {
    invalid(field, "expected " + std::to_string(n) + " values, got " + std::to_string(v.size()));
  }
}

std::size_t payload_index(Task t) {
  switch (t) {
    case Task::kAVE: return 1;
    case Task::kAVVP: return 2;
    case Task::kSSL: return 3;
    case Task::kAVS: return 4;
    case Task::kAVQA: return 5;
  }
  return 0;
}

Tensor to_tensor(const std::vector<float>& v, Shape shape) {
  return Tensor::from(std::move(shape), std::vector<double>(v.begin(), v.end()));
}

}  // namespace

std::size_t FeatureBundle::grid() const {
  const auto g = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(patches))));
  return g;
}

void validate_bundle(const FeatureBundle& b) {
  if (static_cast<unsigned>(b.task) >= kNumTasks) invalid("task", "unknown task id");
  if (b.segments == 0) invalid("T", "must be positive");
  if (b.patches == 0) invalid("M", "must be positive");
  if (b.grid() * b.grid() != b.patches) invalid("M", "must be a perfect square");
  if (b.audio_dim == 0) invalid("D_a", "must be positive");
  if (b.visual_dim == 0) invalid("D_v", "must be positive");
  if (b.height == 0) invalid("H", "must be positive");
  if (b.width == 0) invalid("W", "must be positive");
  const std::size_t t = b.segments;
  check_size(b.audio, t * b.audio_dim, "audio");
  check_size(b.frame, t * b.visual_dim, "frame");
  check_size(b.patch, t * b.patches * b.visual_dim, "patch");
  check_size(b.prompt, b.prompt_dim, "prompt");
  check_finite(b.audio, "audio");
  check_finite(b.frame, "frame");
  check_finite(b.patch, "patch");
  check_finite(b.prompt, "prompt");

  const auto& lb = b.labels;
  if (!lb.labeled) {
    if (lb.payload.index() != 0) invalid("labels", "unlabeled bundle carries a label payload");
    return;
  }
  if (lb.payload.index() != payload_index(b.task)) {
    invalid("labels", "label block does not match task " + std::string(task_name(b.task)));
  }
  switch (b.task) {
    case Task::kAVE: {
      const auto& l = std::get<AveLabels>(lb.payload);
      if (l.num_classes == 0) invalid("labels.num_classes", "must be positive");
      if (l.classes.size() != t) invalid("labels.classes", "need one class per segment");
      for (auto c : l.classes)
        if (c > l.num_classes) invalid("labels.classes", "class id out of range");
      break;
    }
    case Task::kAVVP: {
      const auto& l = std::get<AvvpLabels>(lb.payload);
      if (l.num_classes == 0) invalid("labels.num_classes", "must be positive");
      if (l.audio.size() != t * l.num_classes || l.visual.size() != t * l.num_classes) {
        invalid("labels.multi_hot", "need T * num_classes entries per modality");
      }
      for (auto v : l.audio)
        if (v > 1) invalid("labels.audio", "multi-hot entries must be 0 or 1");
      for (auto v : l.visual)
        if (v > 1) invalid("labels.visual", "multi-hot entries must be 0 or 1");
      break;
    }
    case Task::kSSL: {
      const auto& l = std::get<SslLabels>(lb.payload);
      if (l.bins.size() != t) invalid("labels.bins", "need one bin per segment");
      for (auto v : l.bins)
        if (v != SslLabels::kSilent && (v < 0 || v >= static_cast<std::int32_t>(b.patches)))
          invalid("labels.bins", "patch bin out of range");
      break;
    }
    case Task::kAVS: {
      const auto& l = std::get<AvsLabels>(lb.payload);
      if (l.num_classes == 0) invalid("labels.num_classes", "must be positive");
      if (l.masks.size() != t * b.height * b.width) invalid("labels.masks", "need T * H * W pixels");
      for (auto v : l.masks)
        if (v > l.num_classes) invalid("labels.masks", "pixel class out of range");
      break;
    }
    case Task::kAVQA: {
      const auto& l = std::get<AvqaLabels>(lb.payload);
      if (l.num_answers == 0) invalid("labels.num_answers", "must be positive");
      if (l.answer >= l.num_answers) invalid("labels.answer", "answer id out of range");
      break;
    }
  }
}

std::vector<std::uint8_t> encode_bundle(const FeatureBundle& b) {
  validate_bundle(b);
  ByteWriter w;
  w.bytes(kBundleMagic, 4);
  w.u16(kBundleVersion);
  w.u8(static_cast<std::uint8_t>(b.task));
  w.u16(b.segments);
  w.u16(b.patches);
  w.u16(b.audio_dim);
  w.u16(b.visual_dim);
  w.u16(b.prompt_dim);
  w.u16(b.height);
  w.u16(b.width);
  for (float f : b.audio) w.f32(f);
  for (float f : b.frame) w.f32(f);
  for (float f : b.patch) w.f32(f);
  for (float f : b.prompt) w.f32(f);

  const auto& lb = b.labels;
  w.u8(lb.labeled ? 1 : 0);
  w.u16(lb.prompt_template);
  if (lb.labeled) {
    switch (b.task) {
      case Task::kAVE: {
        const auto& l = std::get<AveLabels>(lb.payload);
        w.u16(l.num_classes);
        w.bytes(l.classes.data(), l.classes.size());
        break;
      }
      case Task::kAVVP: {
        const auto& l = std::get<AvvpLabels>(lb.payload);
        w.u16(l.num_classes);
        w.bytes(l.audio.data(), l.audio.size());
        w.bytes(l.visual.data(), l.visual.size());
        break;
      }
      case Task::kSSL: {
        const auto& l = std::get<SslLabels>(lb.payload);
        for (auto v : l.bins)
          w.u16(v == SslLabels::kSilent ? 0xFFFF : static_cast<std::uint16_t>(v));
        break;
      }
      case Task::kAVS: {
        const auto& l = std::get<AvsLabels>(lb.payload);
        w.u8(l.num_classes);
        w.bytes(l.masks.data(), l.masks.size());
        break;
      }
      case Task::kAVQA: {
        const auto& l = std::get<AvqaLabels>(lb.payload);
        w.u16(l.num_answers);
        w.u16(l.answer);
        break;
      }
    }
  }
  return std::move(w.buffer());
}

std::size_t write_bundle(const FeatureBundle& bundle, std::ostream& sink) {
  const auto bytes = encode_bundle(bundle);
  sink.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
  if (!sink) throw FormatError("write_bundle: stream write failed");
  return bytes.size();
}

FeatureBundle decode_bundle(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kBundleMagic, 4) != 0) {
    throw FormatError("bad magic: expected \"AVUF\"");
  }
  for (int i = 0; i < 4; ++i) r.u8("magic");
  const auto version = r.u16("version");
  if (version != kBundleVersion) {
    throw FormatError("unsupported bundle version " + std::to_string(version));
  }
  FeatureBundle b;
  const auto task = r.u8("task");
  if (task >= kNumTasks) throw FormatError("unknown task id " + std::to_string(task));
  b.task = static_cast<Task>(task);
  b.segments = r.u16("T");
  b.patches = r.u16("M");
  b.audio_dim = r.u16("D_a");
  b.visual_dim = r.u16("D_v");
  b.prompt_dim = r.u16("D_t");
  b.height = r.u16("H");
  b.width = r.u16("W");
  const std::size_t t = b.segments;
  r.f32s(b.audio, t * b.audio_dim, "audio tensor");
  r.f32s(b.frame, t * b.visual_dim, "frame tensor");
  r.f32s(b.patch, t * b.patches * b.visual_dim, "patch tensor");
  r.f32s(b.prompt, b.prompt_dim, "prompt tensor");

  auto& lb = b.labels;
  lb.labeled = r.u8("label flag") != 0;
  lb.prompt_template = r.u16("prompt template");
  if (lb.labeled) {
    switch (b.task) {
      case Task::kAVE: {
        AveLabels l;
        l.num_classes = r.u16("AVE class count");
        r.u8s(l.classes, t, "AVE labels");
        lb.payload = std::move(l);
        break;
      }
      case Task::kAVVP: {
        AvvpLabels l;
        l.num_classes = r.u16("AVVP class count");
        r.u8s(l.audio, t * l.num_classes, "AVVP audio labels");
        r.u8s(l.visual, t * l.num_classes, "AVVP visual labels");
        lb.payload = std::move(l);
        break;
      }
      case Task::kSSL: {
        SslLabels l;
        for (std::size_t i = 0; i < t; ++i) {
          const auto v = r.u16("SSL labels");
          l.bins.push_back(v == 0xFFFF ? SslLabels::kSilent : static_cast<std::int32_t>(v));
        }
        lb.payload = std::move(l);
        break;
      }
      case Task::kAVS: {
        AvsLabels l;
        l.num_classes = r.u8("AVS class count");
        r.u8s(l.masks, t * b.height * b.width, "AVS masks");
        lb.payload = std::move(l);
        break;
      }
      case Task::kAVQA: {
        AvqaLabels l;
        l.num_answers = r.u16("AVQA answer count");
        l.answer = r.u16("AVQA answer");
        lb.payload = l;
        break;
      }
    }
  }
  if (r.offset() != r.size()) {
    throw FormatError("trailing bytes after label block at offset " +
                      std::to_string(r.offset()));
  }
  validate_bundle(b);
  return b;
}

FeatureBundle read_bundle(std::istream& source) {
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(source)),
                                  std::istreambuf_iterator<char>());
  return decode_bundle(bytes);
}

void write_bundle_file(const FeatureBundle& bundle, const std::filesystem::path& path) {
  const auto bytes = encode_bundle(bundle);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

FeatureBundle read_bundle_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_bundle(in);
}

void write_manifest(const FeatureBundle& b, const std::filesystem::path& bundle_path,
                    const std::string& source_id, const std::string& created_by) {
  nlohmann::ordered_json j;
  j["file"] = bundle_path.filename().string();
  j["task"] = std::string(task_name(b.task));
  j["source"] = source_id;
  j["created_by"] = created_by;
  j["format"] = {{"magic", "AVUF"}, {"version", kBundleVersion}};
  j["T"] = b.segments;
  j["M"] = b.patches;
  j["D_a"] = b.audio_dim;
  j["D_v"] = b.visual_dim;
  j["D_t"] = b.prompt_dim;
  j["H"] = b.height;
  j["W"] = b.width;
  j["labeled"] = b.labels.labeled;
  j["prompt_template"] = b.labels.prompt_template;
  auto path = bundle_path;
  path.replace_extension(".json");
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

Tensor audio_tensor(const FeatureBundle& b) {
  return to_tensor(b.audio, {b.segments, b.audio_dim});
}
Tensor frame_tensor(const FeatureBundle& b) {
  return to_tensor(b.frame, {b.segments, b.visual_dim});
}
Tensor patch_tensor(const FeatureBundle& b) {
  return to_tensor(b.patch, {b.segments, b.patches, b.visual_dim});
}
Tensor prompt_tensor(const FeatureBundle& b) { return to_tensor(b.prompt, {1, b.prompt_dim}); }

ProjectedInputs project_inputs(const FeatureBundle& b, const InputProjections& proj,
                               const Tensor& prompt_raw) {
  auto check = [](const Affine& a, std::size_t in, const char* which) {
    if (a.in_dim() != in) {
      throw ShapeError(std::string("project_inputs: ") + which + " projection expects " +
                       std::to_string(a.in_dim()) + " inputs, bundle has " +
                       std::to_string(in));
    }
  };
  check(proj.audio, b.audio_dim, "audio");
  check(proj.visual, b.visual_dim, "visual");
  if (prompt_raw.rank() != 2 || prompt_raw.dim(0) != 1) {
    throw ShapeError("project_inputs: prompt must be [1, D_t], got " +
                     shape_str(prompt_raw.shape()));
  }
  check(proj.prompt, prompt_raw.dim(1), "prompt");
  const std::size_t c = proj.audio.out_dim();
  if (proj.visual.out_dim() != c || proj.prompt.out_dim() != c) {
    throw ShapeError("project_inputs: projections disagree on the common dim");
  }
  return {proj.audio(audio_tensor(b)), proj.visual(frame_tensor(b)),
          proj.visual(patch_tensor(b)), proj.prompt(prompt_raw)};
}

}  // namespace avu
