#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "avu/bundle.hpp"
#include "avu/metrics.hpp"
#include "avu/model.hpp"
#include "avu/optim.hpp"
#include "avu/rng.hpp"

namespace avu {

using TaskPools = std::array<std::vector<FeatureBundle>, kNumTasks>;

struct TrainConfig {
  double lr = 1e-4;
  double lr_decay = 0.1;
  std::size_t decay_epochs = 10;
  std::size_t batch = 16;
  std::size_t iterations = 2000;
  std::array<double, kNumTasks> mix = {1, 1, 1, 1, 1};
  std::uint64_t seed = 1;

  void validate() const;
};

// Iterations per epoch: one pass over the pooled training samples.
std::size_t epoch_length(const TaskPools& pools, std::size_t batch);
double learning_rate(const TrainConfig& cfg, std::size_t iteration, std::size_t epoch_len);

struct TaskBatch {
  Task task = Task::kAVE;
  std::vector<std::size_t> indices;
};

// One task per batch, drawn with the mix weights; samples drawn uniformly
// from that task's pool. Throws ConfigError when a task with positive weight
// has an empty pool or no task has positive weight.
TaskBatch sample_task_batch(const TaskPools& pools, std::span<const double> mix,
                            std::size_t batch, Rng& rng);

// Sum of w_i * loss_i with w_i = [i == target]; tasks other than the target
// need not be computed.
double masked_loss(std::span<const double> per_task, Task target);
Tensor masked_loss(const std::array<std::optional<Tensor>, kNumTasks>& per_task, Task target);

struct LossRecord {
  std::size_t iteration = 0;
  Task task = Task::kAVE;
  double loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<LossRecord> curve;
};

// Called after the gradients of a step are complete, before the update.
using StepHook = std::function<void(std::size_t iteration, Task task, const Model& model)>;

// Deterministic given config.seed. On a non-finite loss the parameters before
// the failing step are written to `last_good` (when set) and NumericsError is
// thrown.
TrainResult train(Model& model, const TaskPools& pools, const TrainConfig& config,
                  const std::optional<std::filesystem::path>& last_good = std::nullopt,
                  const StepHook& hook = nullptr);

void write_loss_csv(const TrainResult& result, const std::filesystem::path& path);

struct LatentScene;

// Per-task metrics over the non-empty pools; ConfigError when all are empty.
// `ssl_scenes` (parallel to the SSL pool) supplies the true source disks for
// cIoU; without it a disk of radius 0.5 at the labelled bin is used.
MetricReport evaluate(const Model& model, const TaskPools& pools,
                      const std::vector<LatentScene>* ssl_scenes = nullptr);

// The two halves of evaluate. Predictions run on up to max_workers() threads.
using PoolPredictions = std::array<std::vector<Prediction>, kNumTasks>;
PoolPredictions predict_pools(const Model& model, const TaskPools& pools);
MetricReport score_predictions(const ModelConfig& config, const TaskPools& pools,
                               const PoolPredictions& preds,
                               const std::vector<LatentScene>* ssl_scenes = nullptr);

struct AblationSwitches {
  bool tpm = true;
  bool spm = true;
  bool tpgl = true;
};

struct AblationResult {
  MetricReport reference;  // all modules on
  MetricReport variant;    // switches applied
};

// Trains both arms from the same seed on the same data and evaluates them.
AblationResult ablate(const ModelConfig& model_config, const AblationSwitches& switches,
                      const TaskPools& train_pools, const TaskPools& eval_pools,
                      const TrainConfig& train_config);

inline constexpr char kCheckpointMagic[4] = {'A', 'V', 'U', 'C'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace avu
