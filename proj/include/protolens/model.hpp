// SPDX-License-Identifier: Apache-2.0
//
// Character-level multi-source encoder-decoder. Each input character c of
// language l enters as W E[c] + U L[l] (shared symbol table E, language table
// L). A unidirectional GRU encodes the concatenated daughters; a GRU decoder
// initialised from the final encoder state attends to the encoder states with
// dot-product attention, and [context; state] goes through a tanh MLP to
// vocabulary logits.
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "protolens/autodiff/ops.hpp"
#include "protolens/autodiff/tape.hpp"
#include "protolens/autodiff/tensor.hpp"
#include "protolens/corpus.hpp"

namespace protolens::model {

using ad::Tape;
using ad::Tensor;
using ad::Var;
using corpus::EncodedExample;
using corpus::SymbolId;

struct ModelConfig {
  std::size_t embed_dim = 100;
  std::size_t hidden_dim = 150;
  std::size_t mlp_hidden = 200;
  std::size_t lang_embed_dim = 100;
  std::size_t max_decode_len = 30;
  std::uint64_t seed = 0;

  /// Throws ValidationError if any dimension is zero.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename T>
struct GruParams {
  Tensor<T> input_weights;     // [in x 3H], gate blocks ordered reset|update|candidate
  Tensor<T> hidden_gates;      // [H x 2H], reset|update
  Tensor<T> hidden_candidate;  // [H x H], applied to (reset * h)
  Tensor<T> bias;              // [1 x 3H]
};

template <typename T>
struct ModelParams {
  Tensor<T> symbol_embedding;     // E: [V x embed_dim]
  Tensor<T> language_embedding;   // L: [6 x lang_embed_dim]
  Tensor<T> symbol_projection;    // W: [embed_dim x embed_dim]
  Tensor<T> language_projection;  // U: [lang_embed_dim x embed_dim]
  GruParams<T> encoder;
  GruParams<T> decoder;
  Tensor<T> mlp_hidden_weights;   // [2H x mlp_hidden]
  Tensor<T> mlp_hidden_bias;      // [1 x mlp_hidden]
  Tensor<T> mlp_output_weights;   // [mlp_hidden x V]
  Tensor<T> mlp_output_bias;      // [1 x V]

  /// Seeded initialisation: Glorot-uniform matrices, U(-0.5, 0.5) embedding
  /// tables, zero biases.
  static ModelParams init(const ModelConfig& config, std::size_t vocab_size);

  /// All tensors in checkpoint order; names() lines up with it.
  std::vector<Tensor<T>*> tensors();
  std::vector<const Tensor<T>*> tensors() const;
  static const std::vector<std::string>& names();
  /// Expected shapes for `config` and `vocab_size`, in checkpoint order.
  static std::vector<ad::Shape> shapes(const ModelConfig& config, std::size_t vocab_size);

  std::size_t parameter_count() const;
  std::size_t vocab_size() const { return symbol_embedding.shape()[0]; }

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    auto dst = out.tensors();
    auto src = tensors();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = src[i]->template cast<U>();
    return out;
  }
};

/// Closed-form parameter count.
std::size_t expected_parameter_count(const ModelConfig& config, std::size_t vocab_size);

// ---------------------------------------------------------------------------
// Differentiable building blocks (shared by training and inference).
// ---------------------------------------------------------------------------

template <typename T>
struct BoundGru {
  Var<T> input_weights, hidden_gates, hidden_candidate, bias;
};

/// Model parameters registered as leaves on one tape.
template <typename T>
struct BoundParams {
  Var<T> symbol_embedding, language_embedding, symbol_projection, language_projection;
  BoundGru<T> encoder, decoder;
  Var<T> mlp_hidden_weights, mlp_hidden_bias, mlp_output_weights, mlp_output_bias;

  static BoundParams bind(Tape<T>& tape, const ModelParams<T>& params);
  std::vector<Var<T>> vars() const;  // checkpoint order
};

/// [n x embed_dim] rows W E[symbols[i]] + U L[langs[i]].
template <typename T>
Var<T> embed_inputs(const BoundParams<T>& p, std::span<const SymbolId> symbols,
                    std::span<const std::int32_t> langs);

/// One GRU step on precomputed input gates `gx` = x W_in + b ([B x 3H]):
///   r = s(gx_r + h U_r), z = s(gx_z + h U_z), n = tanh(gx_n + (r*h) U_n),
///   h' = (1 - z) * n + z * h.
template <typename T>
Var<T> gru_step(const BoundGru<T>& g, Var<T> gx, Var<T> h, std::size_t hidden);

/// Same step from the raw input x ([B x in]).
template <typename T>
Var<T> gru_cell(const BoundGru<T>& g, Var<T> x, Var<T> h, std::size_t hidden);

template <typename T>
struct EncoderOutput {
  Var<T> states;              // [B x steps x H]
  Var<T> final_state;         // [B x H], state after each example's last input
  Tensor<T> attention_mask;   // [B x steps], 0 or -inf past an example's end
  bool padded = false;        // whether any mask entry is -inf
  std::size_t batch = 0;
  std::size_t steps = 0;
};

/// Runs the encoder over a padded batch. Padded steps carry the state forward
/// unchanged, so `final_state` is each example's own last state.
template <typename T>
EncoderOutput<T> encode_batch(const BoundParams<T>& p,
                              std::span<const EncodedExample* const> batch,
                              std::size_t hidden);

template <typename T>
struct StepOutput {
  Var<T> logits;   // [B x V]
  Var<T> state;    // [B x H]
  Var<T> weights;  // [B x steps]
};

/// Decoder GRU over embed(prev, Latin), attention with the new state, MLP.
template <typename T>
StepOutput<T> decode_step_batch(const BoundParams<T>& p, std::span<const SymbolId> prev,
                                Var<T> state, const EncoderOutput<T>& enc,
                                std::size_t hidden);

/// Teacher-forced summed cross entropy over every target symbol in the
/// batch (EOS included). `target_count` receives the number of symbols.
template <typename T>
Var<T> sequence_loss(const BoundParams<T>& p, std::span<const EncodedExample* const> batch,
                     std::size_t hidden, std::size_t* target_count = nullptr);

// ---------------------------------------------------------------------------
// Single-example API.
// ---------------------------------------------------------------------------

/// W E[c] + U L[l] as a [1 x embed_dim] row. Throws ValidationError on an
/// out-of-range id.
template <typename T>
Tensor<T> embed_input(SymbolId symbol, std::int32_t language, const ModelParams<T>& params);

/// Per-position encoder states, [n x H].
template <typename T>
Tensor<T> encode(const EncodedExample& example, const ModelParams<T>& params);

template <typename T>
struct Attention {
  Tensor<T> context;  // [1 x H]
  Tensor<T> weights;  // [1 x n]
};

/// Dot-product attention of a [1 x H] query over [n x H] states.
template <typename T>
Attention<T> attend(const Tensor<T>& decoder_state, const Tensor<T>& encoder_states);

template <typename T>
struct DecodeStep {
  Tensor<T> logits;   // [1 x V]
  Tensor<T> state;    // [1 x H]
  Tensor<T> weights;  // [1 x n]
};

template <typename T>
DecodeStep<T> decode_step(SymbolId prev, const Tensor<T>& decoder_state,
                          const Tensor<T>& encoder_states, const ModelParams<T>& params);

struct AttentionStep {
  std::vector<double> weights;  // over input positions, sums to 1
  SymbolId emitted = 0;
};

struct AttentionTrace {
  std::vector<SymbolId> input_ids;
  std::vector<std::int32_t> input_langs;
  std::vector<AttentionStep> steps;  // one per decoding step, EOS step included
};

struct Reconstruction {
  std::vector<SymbolId> ids;  // EOS stripped
  AttentionTrace trace;
  bool truncated = false;     // max_decode_len reached without EOS
};

/// Optional in-place transform applied to each step's logits before argmax.
template <typename T>
using LogitTransform = std::function<void(std::span<T>)>;

/// Greedy decoding from BOS; argmax ties go to the lowest symbol id.
template <typename T>
Reconstruction greedy_decode(const EncodedExample& example, const ModelParams<T>& params,
                             std::size_t max_decode_len,
                             const LogitTransform<T>& transform = {});

/// Beam search of the given width; width 1 reproduces greedy_decode. The
/// trace follows the best hypothesis.
template <typename T>
Reconstruction beam_decode(const EncodedExample& example, const ModelParams<T>& params,
                           std::size_t max_decode_len, std::size_t width);

}  // namespace protolens::model
