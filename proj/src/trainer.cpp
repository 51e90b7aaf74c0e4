// SPDX-License-Identifier: Apache-2.0
#include "protolens/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "protolens/autodiff/adam.hpp"
#include "protolens/error.hpp"
#include "protolens/parallel.hpp"

namespace protolens::trainer {

using corpus::Dataset;
using corpus::EncodedExample;
using corpus::OovPolicy;
using corpus::Vocabulary;
using model::ModelParams;

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
  if (batch_size == 0) throw ValidationError("batch_size must be positive");
  if (max_epochs == 0) throw ValidationError("max_epochs must be positive");
  if (patience == 0) throw ValidationError("patience must be positive");
  if (!(grad_clip > 0.0)) throw ValidationError("grad_clip must be positive");
}

namespace {

std::vector<EncodedExample> encode_all(const Dataset& ds, const Vocabulary& vocab,
                                       OovPolicy oov) {
  std::vector<EncodedExample> out(ds.size());
  parallel_for(ds.size(), [&](std::size_t i) { out[i] = corpus::encode_example(ds[i], vocab, oov); });
  return out;
}

std::vector<model::Reconstruction> decode_all(const std::vector<EncodedExample>& examples,
                                              const ModelParams<float>& params,
                                              std::size_t max_len, std::size_t beam_width) {
  std::vector<model::Reconstruction> out(examples.size());
  parallel_for(examples.size(), [&](std::size_t i) {
    out[i] = beam_width <= 1 ? model::greedy_decode<float>(examples[i], params, max_len)
                             : model::beam_decode<float>(examples[i], params, max_len, beam_width);
  });
  return out;
}

metrics::EditDistanceReport score(const Dataset& ds,
                                  const std::vector<model::Reconstruction>& recon,
                                  const Vocabulary& vocab, corpus::Mode mode,
                                  metrics::NormalizeBy by,
                                  std::vector<corpus::Word>* predictions = nullptr) {
  std::vector<std::pair<corpus::Word, corpus::Word>> pairs;
  pairs.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    pairs.emplace_back(corpus::decode_ids(recon[i].ids, vocab, mode), ds[i].latin);
  }
  auto r = metrics::report(pairs, by);
  if (predictions) {
    predictions->clear();
    for (auto& p : pairs) predictions->push_back(std::move(p.first));
  }
  return r;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

TrainResult train(const Dataset& train_set, const Dataset& dev_set,
                  const model::ModelConfig& model_config, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  if (train_set.empty()) throw ValidationError("training set is empty");
  model_config.validate();
  config.validate();
  std::size_t longest = 0;
  for (const auto& cs : train_set) longest = std::max(longest, cs.latin.size());
  if (model_config.max_decode_len < longest + 1) {
    throw ValidationError("max_decode_len " + std::to_string(model_config.max_decode_len) +
                          " is shorter than the longest training Latin word + 1 (" +
                          std::to_string(longest + 1) + ")");
  }

  TrainResult result;
  auto& ckpt = result.checkpoint;
  ckpt.config = model_config;
  ckpt.mode = train_set.front().latin.mode;
  ckpt.vocab = corpus::build_vocab(train_set);
  ckpt.inventory = corpus::collect_inventory(train_set);

  const auto train_examples = encode_all(train_set, ckpt.vocab, OovPolicy::Error);
  const auto dev_examples = encode_all(dev_set, ckpt.vocab, OovPolicy::MapToUnk);

  auto params = ModelParams<float>::init(model_config, ckpt.vocab.size());
  auto param_ptrs = params.tensors();
  auto adam = ad::AdamState<float>::init(param_ptrs, {config.learning_rate, 0.9, 0.999, 1e-8});
  const std::size_t hidden = model_config.hidden_dim;

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train_examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  double best_dev = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  ckpt.params = params;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t symbol_count = 0;

    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<const EncodedExample*> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train_examples[order[i]]);

      ad::Tape<float> tape;
      const auto bound = model::BoundParams<float>::bind(tape, params);
      std::size_t count = 0;
      const auto total = model::sequence_loss<float>(bound, batch, hidden, &count);
      const double batch_loss = total.value()[0];
      if (!std::isfinite(batch_loss)) {
        throw TrainingDiverged("loss became " + format_double(batch_loss) + " in epoch " +
                               std::to_string(epoch) + " at batch starting " +
                               std::to_string(start / config.batch_size + 1));
      }
      loss_sum += batch_loss;
      symbol_count += count;
      tape.backward(ad::scale(total, 1.0f / static_cast<float>(count)));

      std::vector<ad::Tensor<float>> grads;
      grads.reserve(param_ptrs.size());
      for (const auto& v : bound.vars()) grads.push_back(tape.grad(v));
      std::vector<ad::Tensor<float>*> grad_ptrs;
      for (auto& g : grads) grad_ptrs.push_back(&g);
      const double norm = ad::clip_global_norm<float>(grad_ptrs, config.grad_clip);
      if (!std::isfinite(norm)) {
        throw TrainingDiverged("gradient norm became " + format_double(norm) + " in epoch " +
                               std::to_string(epoch));
      }
      std::vector<const ad::Tensor<float>*> cgrads(grad_ptrs.begin(), grad_ptrs.end());
      ad::adam_step<float>(param_ptrs, cgrads, adam);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / static_cast<double>(symbol_count);
    bool stop = false;
    if (dev_examples.empty()) {
      ckpt.params = params;
      result.best_epoch = epoch;
    } else {
      const auto recon = decode_all(dev_examples, params, model_config.max_decode_len, 1);
      const auto rep = score(dev_set, recon, ckpt.vocab, ckpt.mode, metrics::NormalizeBy::Gold);
      entry.dev_avg_edit = rep.average;
      entry.dev_exact_rate = rep.exact_rate();
      if (rep.average < best_dev) {
        best_dev = rep.average;
        since_best = 0;
        ckpt.params = params;
        result.best_epoch = epoch;
      } else if (++since_best >= config.patience) {
        stop = true;
      }
      // Nothing can beat a perfect dev score, and ties keep the earlier epoch.
      if (rep.average == 0.0) stop = true;
    }
    result.log.push_back(entry);
    if (on_epoch && !on_epoch(entry)) stop = true;
    if (stop) {
      result.stopped_early = epoch < config.max_epochs;
      break;
    }
  }
  return result;
}

std::string log_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,train_loss,dev_avg_edit,dev_exact_rate\n";
  for (const auto& e : log) {
    out += std::to_string(e.epoch) + "," + format_double(e.train_loss) + ",";
    if (e.dev_avg_edit) out += format_double(*e.dev_avg_edit);
    out += ",";
    if (e.dev_exact_rate) out += format_double(*e.dev_exact_rate);
    out += "\n";
  }
  return out;
}

std::vector<model::Reconstruction> reconstruct_all(const Dataset& ds,
                                                   const model::Checkpoint& ckpt,
                                                   std::size_t beam_width) {
  const auto examples = encode_all(ds, ckpt.vocab, OovPolicy::MapToUnk);
  return decode_all(examples, ckpt.params, ckpt.config.max_decode_len, beam_width);
}

Evaluation evaluate(const Dataset& ds, const model::Checkpoint& ckpt, std::size_t beam_width,
                    metrics::NormalizeBy by) {
  if (ds.empty()) throw ValidationError("evaluation dataset is empty");
  if (ds.front().latin.mode != ckpt.mode) {
    throw ValidationError("dataset is " + std::string(corpus::mode_name(ds.front().latin.mode)) +
                          " but the checkpoint was trained on " +
                          std::string(corpus::mode_name(ckpt.mode)) + " data");
  }
  const auto recon = reconstruct_all(ds, ckpt, beam_width);
  Evaluation ev;
  ev.report = score(ds, recon, ckpt.vocab, ckpt.mode, by, &ev.predictions);
  return ev;
}

}  // namespace protolens::trainer
