#pragma once

#include <array>
#include <optional>
#include <vector>

#include "avu/bundle.hpp"
#include "avu/decoder.hpp"
#include "avu/mask_decoder.hpp"
#include "avu/spm.hpp"
#include "avu/tpgl.hpp"
#include "avu/tpm.hpp"
#include "avu/vocab.hpp"

namespace avu {

struct ModelConfig {
  std::size_t segments = 10;   // T
  std::size_t patches = 16;    // M
  std::size_t audio_dim = 128;
  std::size_t visual_dim = 512;
  std::size_t prompt_dim = 0;  // raw prompt width accepted from bundles; 0 = table only
  std::size_t dim = 64;        // C
  std::size_t heads = 1;
  std::size_t num_classes = 6;  // K
  std::size_t answers = 8;      // K_ans
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t max_window = 8;  // S
  bool include_global = true;
  bool use_tpm = true;
  bool use_spm = true;
  bool use_tpgl = true;
  bool layer_norm = true;
  std::size_t ffn_dim = 128;
  std::vector<std::size_t> mask_channels = {16, 8, 8, 4, 4};
  std::uint64_t seed = 1;

  TPMConfig tpm() const;
  DecoderConfig decoder() const;
  MaskDecoderConfig mask() const;
  std::size_t grid() const;
  void validate() const;
};

// Intermediate streams of one forward pass.
struct Encoding {
  ProjectedInputs inputs;
  TemporalStreams temporal;
  SpatialStreams spatial;
  Tensor tpm_sequence;  // [2T, C] before reweighting
  Tensor spm_sequence;  // [T, M+1, C]
  PromptWeights weights;
  UnifiedSequence unified;
};

struct Prediction {
  Task task = Task::kAVE;
  TokenProgram program;
  LabelBlock labels;
  std::vector<double> heatmap;      // SSL: [T * M]
  std::vector<std::uint8_t> masks;  // AVS: [T * H * W]
  std::vector<double> prompt_temporal;  // [2T]
  std::vector<double> prompt_spatial;   // [T * (M+1)]
  std::vector<double> guide_weights;    // [T * M]
};

class Model {
 public:
  explicit Model(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  const TokenVocab& vocab() const { return vocab_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  // Throws ValidationError when the bundle does not fit the configured dims.
  void check_bundle(const FeatureBundle& b) const;
  Tensor prompt_feature(const FeatureBundle& b) const;  // [1, C]
  Encoding encode(const FeatureBundle& b) const;

  // Vocabulary logits [N, V] for a prefix, with SSL bin logits replaced by the
  // patch-audio scores of the position's segment.
  Tensor token_logits(const Encoding& enc, Task task, std::span<const int> prefix,
                      std::span<const int> segments) const;
  Tensor mask_logits(const Encoding& enc) const;  // [T, 1, H, W]

  // Training loss of the bundle's own task.
  Tensor loss(const FeatureBundle& b) const;
  Prediction predict(const FeatureBundle& b) const;

  const DecoderParams& decoder() const { return decoder_; }
  const MaskDecoderParams& mask_decoder() const { return mask_; }
  const TPMParams& tpm_params() const { return tpm_; }
  const SPMParams& spm_params() const { return spm_; }
  const TPGLParams& tpgl_params() const { return tpgl_; }

 private:
  // Provenance memory with the patch-audio localisation weights as focus, and
  // the decoder's context row (prompt plus focus summary).
  std::pair<Tensor, Tensor> decoder_inputs(const Encoding& enc) const;

  ModelConfig config_;
  TokenVocab vocab_;
  ParamStore store_;
  InputProjections proj_;
  bool raw_prompt_ = false;
  std::array<Tensor, kNumTasks> prompt_tables_;
  TPMParams tpm_;
  SPMParams spm_;
  TPGLParams tpgl_;
  DecoderParams decoder_;
  MaskDecoderParams mask_;
};

}  // namespace avu
