#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "avu/params.hpp"
#include "avu/task.hpp"
#include "avu/tensor.hpp"

namespace avu {

// Per-segment event class; 0 is background, 1..num_classes are events.
struct AveLabels {
  std::uint16_t num_classes = 0;
  std::vector<std::uint8_t> classes;  // [T]
};

// Per-segment, per-modality multi-hot. Column j stands for event class j + 1.
struct AvvpLabels {
  std::uint16_t num_classes = 0;
  std::vector<std::uint8_t> audio;   // [T * num_classes]
  std::vector<std::uint8_t> visual;  // [T * num_classes]

  bool audible(std::size_t t, std::size_t cls) const { return audio[t * num_classes + cls - 1] != 0; }
  bool visible(std::size_t t, std::size_t cls) const { return visual[t * num_classes + cls - 1] != 0; }
};

// Patch bin of the sounding object per segment, kSilent when nothing sounds.
struct SslLabels {
  static constexpr std::int32_t kSilent = -1;
  std::vector<std::int32_t> bins;  // [T]
};

// Per-segment masks with pixel class ids; num_classes == 1 is the binary case.
struct AvsLabels {
  std::uint8_t num_classes = 1;
  std::vector<std::uint8_t> masks;  // [T * H * W]
};

struct AvqaLabels {
  std::uint16_t num_answers = 0;
  std::uint16_t answer = 0;
};

struct LabelBlock {
  bool labeled = true;
  // Row of the prompt table; for AVQA this is the question template.
  std::uint16_t prompt_template = 0;
  std::variant<std::monostate, AveLabels, AvvpLabels, SslLabels, AvsLabels, AvqaLabels>
      payload;
};

// One clip's features and labels. Values are kept as float32, as on disk.
struct FeatureBundle {
  Task task = Task::kAVE;
  std::uint16_t segments = 0;   // T
  std::uint16_t patches = 0;    // M = g * g
  std::uint16_t audio_dim = 0;  // D_a
  std::uint16_t visual_dim = 0; // D_v
  std::uint16_t prompt_dim = 0; // D_t; 0 when no raw prompt vector is carried
  std::uint16_t height = 0;     // mask H
  std::uint16_t width = 0;      // mask W

  std::vector<float> audio;   // [T, D_a]
  std::vector<float> frame;   // [T, D_v]
  std::vector<float> patch;   // [T, M, D_v]
  std::vector<float> prompt;  // [D_t]
  LabelBlock labels;

  std::size_t grid() const;  // g
};

inline constexpr char kBundleMagic[4] = {'A', 'V', 'U', 'F'};
inline constexpr std::uint16_t kBundleVersion = 1;

// Throws ValidationError naming the first violated field.
void validate_bundle(const FeatureBundle& bundle);

// Returns bytes written. Validation runs before anything is written.
std::size_t write_bundle(const FeatureBundle& bundle, std::ostream& sink);
std::vector<std::uint8_t> encode_bundle(const FeatureBundle& bundle);

FeatureBundle read_bundle(std::istream& source);
FeatureBundle decode_bundle(const std::vector<std::uint8_t>& bytes);

void write_bundle_file(const FeatureBundle& bundle, const std::filesystem::path& path);
FeatureBundle read_bundle_file(const std::filesystem::path& path);

// Sidecar `<stem>.json` with task, source id and creation metadata.
void write_manifest(const FeatureBundle& bundle, const std::filesystem::path& bundle_path,
                    const std::string& source_id, const std::string& created_by);

// Float64 views of the bundle streams.
Tensor audio_tensor(const FeatureBundle& b);   // [T, D_a]
Tensor frame_tensor(const FeatureBundle& b);   // [T, D_v]
Tensor patch_tensor(const FeatureBundle& b);   // [T, M, D_v]
Tensor prompt_tensor(const FeatureBundle& b);  // [1, D_t]

struct InputProjections {
  Affine audio;   // D_a -> C
  Affine visual;  // D_v -> C, shared by frame and patch streams
  Affine prompt;  // D_t -> C
};

struct ProjectedInputs {
  Tensor audio;   // [T, C]
  Tensor frame;   // [T, C]
  Tensor patch;   // [T, M, C]
  Tensor prompt;  // [1, C]
};

// `prompt_raw` [1, D_t] is the prompt feature before projection (the bundle's
// raw vector, or a prompt-table row).
ProjectedInputs project_inputs(const FeatureBundle& bundle, const InputProjections& proj,
                               const Tensor& prompt_raw);

}  // namespace avu
