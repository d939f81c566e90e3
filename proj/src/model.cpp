#include "avu/model.hpp"

#include <cmath>

#include "avu/errors.hpp"
#include "avu/metrics.hpp"
#include "avu/ops.hpp"
#include "avu/prompts.hpp"
#include "avu/ssl.hpp"

namespace avu {

TPMConfig ModelConfig::tpm() const {
  TPMConfig c;
  c.max_window = max_window;
  c.include_global = include_global;
  c.dim = dim;
  c.heads = heads;
  return c;
}

DecoderConfig ModelConfig::decoder() const {
  DecoderConfig c;
  c.dim = dim;
  c.heads = heads;
  c.ffn_dim = ffn_dim;
  c.segments = segments;
  c.patches = patches;
  c.layer_norm = layer_norm;
  std::size_t longest = 0;
  for (Task t : kAllTasks)
    longest = std::max(longest, GrammarCursor::max_length(t, segments, num_classes));
  c.max_length = longest;
  return c;
}

MaskDecoderConfig ModelConfig::mask() const {
  MaskDecoderConfig c;
  c.dim = dim;
  c.grid = grid();
  c.height = height;
  c.width = width;
  c.channels = mask_channels;
  c.out_channels = 1;
  return c;
}

std::size_t ModelConfig::grid() const { return grid_side(patches); }

void ModelConfig::validate() const {
  auto fail = [](const std::string& why) { throw ConfigError("model config: " + why); };
  if (segments == 0) fail("segments must be positive");
  if (audio_dim == 0 || visual_dim == 0) fail("feature dims must be positive");
  if (dim == 0 || heads == 0 || dim % heads != 0) fail("dim must be a positive multiple of heads");
  if (num_classes == 0 || num_classes > 255) fail("num_classes must be in [1, 255]");
  if (answers == 0) fail("answers must be positive");
  if (ffn_dim == 0) fail("ffn_dim must be positive");
  grid();
  mask().stage_count();
  if (use_tpm) tpm().validate();
}

Model::Model(ModelConfig config)
    : config_(std::move(config)),
      vocab_((config_.validate(), config_.num_classes), config_.patches, config_.answers) {
  Rng rng(config_.seed);
  const std::size_t c = config_.dim;
  const TaskSet every = all_tasks();
  TaskSet token_tasks = every;
  token_tasks.reset(task_index(Task::kAVS));

  proj_.audio = make_affine(store_, rng, "proj.audio", config_.audio_dim, c, every);
  proj_.visual = make_affine(store_, rng, "proj.visual", config_.visual_dim, c, every);
  raw_prompt_ = config_.prompt_dim > 0;
  proj_.prompt = raw_prompt_
                     ? make_affine(store_, rng, "proj.prompt", config_.prompt_dim, c, every)
                     : identity_affine(c);
  for (Task t : kAllTasks) {
    const std::size_t rows = task_prompt_rows(t, config_.num_classes);
    const double sd = 1.0 / std::sqrt(static_cast<double>(c));
    std::vector<double> v(rows * c);
    for (auto& x : v) x = rng.normal(0.0, sd);
    std::string name = "prompt." + std::string(task_name(t));
    for (auto& ch : name) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    prompt_tables_[task_index(t)] = store_.add(name, {rows, c}, std::move(v), only(t));
  }
  if (config_.use_tpm) tpm_ = make_tpm_params(store_, rng, config_.tpm(), every);
  if (config_.use_spm) spm_ = make_spm_params(store_, rng, c, config_.heads, every);
  tpgl_ = make_tpgl_params(store_, rng, c, every);
  decoder_ = make_decoder_params(store_, rng, config_.decoder(), vocab_.size(), token_tasks);
  mask_ = make_mask_decoder_params(store_, rng, config_.mask(), only(Task::kAVS));
}

void Model::check_bundle(const FeatureBundle& b) const {
  auto fail = [](const std::string& field, std::size_t got, std::size_t want) {
    throw ValidationError("bundle field " + field + " = " + std::to_string(got) +
                          ", model expects " + std::to_string(want));
  };
  if (b.segments != config_.segments) fail("segments", b.segments, config_.segments);
  if (b.patches != config_.patches) fail("patches", b.patches, config_.patches);
  if (b.audio_dim != config_.audio_dim) fail("audio_dim", b.audio_dim, config_.audio_dim);
  if (b.visual_dim != config_.visual_dim) fail("visual_dim", b.visual_dim, config_.visual_dim);
  if (b.task == Task::kAVS) {
    if (b.height != config_.height) fail("height", b.height, config_.height);
    if (b.width != config_.width) fail("width", b.width, config_.width);
  }
}

Tensor Model::prompt_feature(const FeatureBundle& b) const {
  if (raw_prompt_ && b.prompt_dim == config_.prompt_dim) return proj_.prompt(prompt_tensor(b));
  prompt_template_checked(b.labels.prompt_template, config_.num_classes, b.task);
  const int row = static_cast<int>(prompt_row(b.labels.prompt_template, config_.num_classes));
  return ops::embed_lookup(prompt_tables_[task_index(b.task)], std::span<const int>(&row, 1));
}

Encoding Model::encode(const FeatureBundle& b) const {
  check_bundle(b);
  Encoding e;
  const std::size_t t = config_.segments;
  const std::size_t c = config_.dim;
  e.inputs.audio = proj_.audio(audio_tensor(b));
  e.inputs.frame = proj_.visual(frame_tensor(b));
  e.inputs.patch = proj_.visual(patch_tensor(b));
  e.inputs.prompt = prompt_feature(b);

  if (config_.use_tpm) {
    e.temporal = tpm_forward(tpm_, config_.tpm(), e.inputs.audio, e.inputs.frame);
  } else {
    e.temporal = {e.inputs.audio, e.inputs.frame};
  }
  if (config_.use_spm) {
    e.spatial = spm_forward(spm_, e.temporal.audio, ops::reshape(e.temporal.audio, {t, 1, c}),
                            e.inputs.patch);
  } else {
    e.spatial = {e.temporal.audio, e.inputs.patch,
                 Tensor::full({t, config_.patches}, 1.0 / static_cast<double>(config_.patches))};
  }
  e.tpm_sequence = build_tpm_sequence(tpgl_, e.temporal.audio, e.temporal.visual);
  e.spm_sequence = build_spm_sequence(tpgl_, e.spatial.audio, e.spatial.patches);
  e.weights = config_.use_tpgl
                  ? prompt_weights(e.inputs.prompt, e.tpm_sequence, e.spm_sequence, c)
                  : uniform_prompt_weights(t, config_.patches);
  auto [tw, sw] = reweight(e.tpm_sequence, e.spm_sequence, e.weights);
  e.unified = serialize(tw, sw);
  return e;
}

std::pair<Tensor, Tensor> Model::decoder_inputs(const Encoding& enc) const {
  const Tensor focus = ssl_heatmap(enc.spatial.patches, enc.spatial.audio);
  return {memory_with_provenance(decoder_, enc.unified, &focus),
          ops::add(enc.inputs.prompt, focus_summary(decoder_, focus))};
}

Tensor Model::token_logits(const Encoding& enc, Task task, std::span<const int> prefix,
                           std::span<const int> segments) const {
  if (task == Task::kAVS) throw ContractError("token_logits: AVS uses the mask decoder");
  const auto [memory, context] = decoder_inputs(enc);
  Tensor logits = decoder_logits(decoder_, memory, prefix, segments, &context);
  if (task != Task::kSSL) return logits;
  const std::size_t m = config_.patches;
  const std::size_t v = vocab_.size();
  const auto base = static_cast<std::size_t>(vocab_.bin_base());
  Tensor scores = ssl_scores(enc.spatial.patches, enc.spatial.audio);  // [T, M]
  Tensor table = ops::concat({scores, Tensor::zeros({1, m})}, 0);
  Tensor pointer = ops::embed_lookup(table, segments);
  return ops::concat({ops::slice(logits, 1, 0, base), pointer, ops::slice(logits, 1, base + m, v)},
                     1);
}

Tensor Model::mask_logits(const Encoding& enc) const { return avs_mask_decode(mask_, enc.unified); }

Tensor Model::loss(const FeatureBundle& b) const {
  if (!b.labels.labeled) throw ValidationError("loss: bundle carries no labels");
  const Encoding enc = encode(b);
  if (b.task == Task::kAVS) {
    const auto* l = std::get_if<AvsLabels>(&b.labels.payload);
    if (!l) throw ValidationError("loss: AVS bundle without mask labels");
    std::vector<double> target(l->masks.begin(), l->masks.end());
    for (auto& x : target) x = x != 0.0 ? 1.0 : 0.0;
    return ops::binary_cross_entropy(mask_logits(enc), target);
  }
  const TokenProgram program = encode_labels(b.labels, b.task, vocab_, config_.segments);
  const TeacherPlan plan = teacher_plan(program, vocab_, config_.segments);
  Tensor logits = ops::add(token_logits(enc, b.task, plan.inputs, plan.segments), plan.mask);
  return ops::cross_entropy(logits, plan.targets);
}

Prediction Model::predict(const FeatureBundle& b) const {
  NoGradGuard no_grad;
  const Encoding enc = encode(b);
  Prediction p;
  p.task = b.task;
  auto copy = [](const Tensor& t) { return std::vector<double>(t.data().begin(), t.data().end()); };
  p.prompt_temporal = copy(enc.weights.temporal);
  p.prompt_spatial = copy(enc.weights.spatial);
  p.guide_weights = copy(enc.spatial.guide_weights);
  const std::size_t t = config_.segments;

  if (b.task == Task::kAVS) {
    const Tensor logits = mask_logits(enc);
    p.masks = binarize_logits(logits.data());
    p.program.task = Task::kAVS;
    p.program.tokens = {vocab_.bos(), vocab_.task(Task::kAVS), vocab_.mask(), vocab_.eos()};
    p.labels.payload = AvsLabels{1, p.masks};
  } else {
    if (b.task == Task::kSSL) {
      p.heatmap = copy(ops::softmax_lastdim(ssl_scores(enc.spatial.patches, enc.spatial.audio)));
    }
    const auto [memory, context] = decoder_inputs(enc);
    const Task task = b.task;
    const LogitFn fn = [&](const std::vector<int>& prefix, const std::vector<int>& segs) {
      Tensor logits;
      if (task == Task::kSSL) {
        logits = token_logits(enc, task, prefix, segs);
      } else {
        logits = decoder_logits(decoder_, memory, prefix, segs, &context);
      }
      const std::size_t n = prefix.size(), v = logits.dim(1);
      auto row = logits.data().subspan((n - 1) * v, v);
      return std::vector<double>(row.begin(), row.end());
    };
    p.program = greedy_decode(vocab_, task, t, fn);
    p.labels = decode_tokens(p.program, vocab_, t);
  }
  p.labels.labeled = true;
  p.labels.prompt_template = b.labels.prompt_template;
  return p;
}

}  // namespace avu
