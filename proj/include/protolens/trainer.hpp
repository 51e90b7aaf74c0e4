// SPDX-License-Identifier: Apache-2.0
//
// Teacher-forced training with Adam, dev-set model selection and evaluation
// of checkpoints against gold Latin forms.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "protolens/checkpoint.hpp"
#include "protolens/corpus.hpp"
#include "protolens/metrics.hpp"
#include "protolens/model.hpp"

namespace protolens::trainer {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;  // dev evaluations without improvement
  double grad_clip = 5.0;
  std::uint64_t seed = 0;

  /// Throws ValidationError unless every field is positive.
  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;  // mean cross entropy per target symbol
  std::optional<double> dev_avg_edit;
  std::optional<double> dev_exact_rate;
};

struct TrainResult {
  model::Checkpoint checkpoint;  // best dev epoch, or the last epoch without dev data
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

/// Called after every epoch; returning false ends training.
using EpochCallback = std::function<bool(const EpochLog&)>;

/// Trains a fresh model. The vocabulary and inventories come from `train`;
/// dev symbols outside it map to UNK. With an empty dev set the final epoch
/// is kept. Throws ValidationError for an empty train set or a
/// max_decode_len shorter than the longest Latin word + 1, and
/// TrainingDiverged when the loss stops being finite.
TrainResult train(const corpus::Dataset& train_set, const corpus::Dataset& dev_set,
                  const model::ModelConfig& model_config, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// "epoch,train_loss,dev_avg_edit,dev_exact_rate"; dev cells are empty
/// when no dev set was used.
std::string log_csv(const std::vector<EpochLog>& log);

/// Decodes every entry (greedy when beam_width is 1). Symbols outside the
/// checkpoint vocabulary map to UNK.
std::vector<model::Reconstruction> reconstruct_all(const corpus::Dataset& ds,
                                                   const model::Checkpoint& ckpt,
                                                   std::size_t beam_width = 1);

struct Evaluation {
  metrics::EditDistanceReport report;
  std::vector<corpus::Word> predictions;
};

/// Throws ValidationError for an empty dataset or a mode that differs from
/// the checkpoint's.
Evaluation evaluate(const corpus::Dataset& ds, const model::Checkpoint& ckpt,
                    std::size_t beam_width = 1,
                    metrics::NormalizeBy by = metrics::NormalizeBy::Gold);

}  // namespace protolens::trainer
