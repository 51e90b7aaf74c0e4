// SPDX-License-Identifier: Apache-2.0
#include "protolens/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>

#include "protolens/error.hpp"

namespace protolens::model {

using ad::Shape;
using corpus::Language;
using corpus::Vocabulary;

namespace {

constexpr auto kLatin = static_cast<std::int32_t>(Language::Latin);

class UniformSource {
 public:
  explicit UniformSource(std::uint64_t seed) : rng_(seed) {}
  // 53 random bits mapped to [lo, hi); independent of the standard library's
  // distribution implementations.
  double operator()(double lo, double hi) {
    const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }

 private:
  std::mt19937_64 rng_;
};

template <typename T>
Tensor<T> uniform(const Shape& shape, double limit, UniformSource& src) {
  Tensor<T> t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(src(-limit, limit));
  return t;
}

template <typename T>
Tensor<T> glorot(const Shape& shape, UniformSource& src) {
  const double limit = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
  return uniform<T>(shape, limit, src);
}

template <typename T>
std::size_t hidden_of(const ModelParams<T>& p) {
  return p.encoder.hidden_candidate.shape()[0];
}

std::vector<Shape> gru_shapes(std::size_t in, std::size_t h) {
  return {{in, 3 * h}, {h, 2 * h}, {h, h}, {1, 3 * h}};
}

}  // namespace

void ModelConfig::validate() const {
  if (embed_dim == 0 || hidden_dim == 0 || mlp_hidden == 0 || lang_embed_dim == 0 ||
      max_decode_len == 0) {
    throw ValidationError("model dimensions and max_decode_len must be positive");
  }
}

std::size_t expected_parameter_count(const ModelConfig& c, std::size_t v) {
  const std::size_t e = c.embed_dim, l = c.lang_embed_dim, h = c.hidden_dim,
                    m = c.mlp_hidden;
  const std::size_t gru = e * 3 * h + h * 2 * h + h * h + 3 * h;
  return v * e + corpus::kNumLanguages * l + e * e + l * e + 2 * gru + 2 * h * m + m +
         m * v + v;
}

template <typename T>
std::vector<Shape> ModelParams<T>::shapes(const ModelConfig& c, std::size_t v) {
  std::vector<Shape> out = {{v, c.embed_dim},
                            {corpus::kNumLanguages, c.lang_embed_dim},
                            {c.embed_dim, c.embed_dim},
                            {c.lang_embed_dim, c.embed_dim}};
  for (int i = 0; i < 2; ++i) {
    for (auto& s : gru_shapes(c.embed_dim, c.hidden_dim)) out.push_back(s);
  }
  out.push_back({2 * c.hidden_dim, c.mlp_hidden});
  out.push_back({1, c.mlp_hidden});
  out.push_back({c.mlp_hidden, v});
  out.push_back({1, v});
  return out;
}

template <typename T>
ModelParams<T> ModelParams<T>::init(const ModelConfig& c, std::size_t v) {
  c.validate();
  if (v <= static_cast<std::size_t>(Vocabulary::kNumSpecials)) {
    throw ValidationError("vocabulary holds no content symbols");
  }
  UniformSource src(c.seed);
  const auto s = shapes(c, v);
  ModelParams p;
  p.symbol_embedding = uniform<T>(s[0], 0.5, src);
  p.language_embedding = uniform<T>(s[1], 0.5, src);
  p.symbol_projection = glorot<T>(s[2], src);
  p.language_projection = glorot<T>(s[3], src);
  std::size_t k = 4;
  for (auto* g : {&p.encoder, &p.decoder}) {
    g->input_weights = glorot<T>(s[k++], src);
    g->hidden_gates = glorot<T>(s[k++], src);
    g->hidden_candidate = glorot<T>(s[k++], src);
    g->bias = Tensor<T>(s[k++], T(0));
  }
  p.mlp_hidden_weights = glorot<T>(s[k++], src);
  p.mlp_hidden_bias = Tensor<T>(s[k++], T(0));
  p.mlp_output_weights = glorot<T>(s[k++], src);
  p.mlp_output_bias = Tensor<T>(s[k++], T(0));
  return p;
}

template <typename T>
std::vector<Tensor<T>*> ModelParams<T>::tensors() {
  return {&symbol_embedding,         &language_embedding,      &symbol_projection,
          &language_projection,      &encoder.input_weights,   &encoder.hidden_gates,
          &encoder.hidden_candidate, &encoder.bias,            &decoder.input_weights,
          &decoder.hidden_gates,     &decoder.hidden_candidate, &decoder.bias,
          &mlp_hidden_weights,       &mlp_hidden_bias,         &mlp_output_weights,
          &mlp_output_bias};
}

template <typename T>
std::vector<const Tensor<T>*> ModelParams<T>::tensors() const {
  auto mut = const_cast<ModelParams*>(this)->tensors();
  return {mut.begin(), mut.end()};
}

template <typename T>
const std::vector<std::string>& ModelParams<T>::names() {
  static const std::vector<std::string> kNames = {
      "symbol_embedding",         "language_embedding",      "symbol_projection",
      "language_projection",      "encoder.input_weights",   "encoder.hidden_gates",
      "encoder.hidden_candidate", "encoder.bias",            "decoder.input_weights",
      "decoder.hidden_gates",     "decoder.hidden_candidate", "decoder.bias",
      "mlp.hidden_weights",       "mlp.hidden_bias",         "mlp.output_weights",
      "mlp.output_bias"};
  return kNames;
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* t : tensors()) n += t->size();
  return n;
}

// ---------------------------------------------------------------------------

template <typename T>
BoundParams<T> BoundParams<T>::bind(Tape<T>& tape, const ModelParams<T>& p) {
  const auto gru = [&](const GruParams<T>& g) {
    return BoundGru<T>{tape.parameter(g.input_weights), tape.parameter(g.hidden_gates),
                       tape.parameter(g.hidden_candidate), tape.parameter(g.bias)};
  };
  BoundParams b;
  b.symbol_embedding = tape.parameter(p.symbol_embedding);
  b.language_embedding = tape.parameter(p.language_embedding);
  b.symbol_projection = tape.parameter(p.symbol_projection);
  b.language_projection = tape.parameter(p.language_projection);
  b.encoder = gru(p.encoder);
  b.decoder = gru(p.decoder);
  b.mlp_hidden_weights = tape.parameter(p.mlp_hidden_weights);
  b.mlp_hidden_bias = tape.parameter(p.mlp_hidden_bias);
  b.mlp_output_weights = tape.parameter(p.mlp_output_weights);
  b.mlp_output_bias = tape.parameter(p.mlp_output_bias);
  return b;
}

template <typename T>
std::vector<Var<T>> BoundParams<T>::vars() const {
  return {symbol_embedding,         language_embedding,     symbol_projection,
          language_projection,      encoder.input_weights,  encoder.hidden_gates,
          encoder.hidden_candidate, encoder.bias,           decoder.input_weights,
          decoder.hidden_gates,     decoder.hidden_candidate, decoder.bias,
          mlp_hidden_weights,       mlp_hidden_bias,        mlp_output_weights,
          mlp_output_bias};
}

template <typename T>
Var<T> embed_inputs(const BoundParams<T>& p, std::span<const SymbolId> symbols,
                    std::span<const std::int32_t> langs) {
  if (symbols.size() != langs.size()) {
    throw ShapeError("embed_inputs: " + std::to_string(symbols.size()) + " symbols but " +
                     std::to_string(langs.size()) + " language ids");
  }
  const auto chars = ad::embedding_gather(p.symbol_embedding, symbols);
  const auto languages = ad::embedding_gather(p.language_embedding, langs);
  return ad::add(ad::matmul(chars, p.symbol_projection),
                 ad::matmul(languages, p.language_projection));
}

template <typename T>
Var<T> gru_step(const BoundGru<T>& g, Var<T> gx, Var<T> h, std::size_t hidden) {
  const std::size_t H = hidden;
  const auto gh = ad::matmul(h, g.hidden_gates);
  const auto reset = ad::sigmoid(ad::add(ad::slice_cols(gx, 0, H), ad::slice_cols(gh, 0, H)));
  const auto update =
      ad::sigmoid(ad::add(ad::slice_cols(gx, H, 2 * H), ad::slice_cols(gh, H, 2 * H)));
  const auto candidate = ad::tanh(ad::add(
      ad::slice_cols(gx, 2 * H, 3 * H), ad::matmul(ad::mul(reset, h), g.hidden_candidate)));
  // (1 - z) * n + z * h, written as n + z * (h - n).
  return ad::add(candidate, ad::mul(update, ad::sub(h, candidate)));
}

template <typename T>
Var<T> gru_cell(const BoundGru<T>& g, Var<T> x, Var<T> h, std::size_t hidden) {
  const auto gx = ad::add_row(ad::matmul(x, g.input_weights), g.bias);
  return gru_step(g, gx, h, hidden);
}

template <typename T>
EncoderOutput<T> encode_batch(const BoundParams<T>& p,
                              std::span<const EncodedExample* const> batch,
                              std::size_t hidden) {
  if (batch.empty()) throw ValidationError("encode: empty batch");
  Tape<T>& tape = *p.symbol_embedding.tape;
  const std::size_t B = batch.size();
  std::size_t steps = 0;
  for (const auto* ex : batch) {
    if (ex->input_ids.empty()) throw ValidationError("encode: empty input sequence");
    if (ex->input_ids.size() != ex->input_langs.size()) {
      throw ValidationError("encode: input ids and languages differ in length");
    }
    steps = std::max(steps, ex->input_ids.size());
  }

  // Time-major layout: row t * B + b holds example b at step t.
  std::vector<SymbolId> ids(steps * B, Vocabulary::kPad);
  std::vector<std::int32_t> langs(steps * B, kLatin);
  EncoderOutput<T> out;
  out.batch = B;
  out.steps = steps;
  out.attention_mask = Tensor<T>({B, steps}, T(0));
  for (std::size_t b = 0; b < B; ++b) {
    const auto& ex = *batch[b];
    for (std::size_t t = 0; t < steps; ++t) {
      if (t < ex.input_ids.size()) {
        ids[t * B + b] = ex.input_ids[t];
        langs[t * B + b] = ex.input_langs[t];
      } else {
        out.attention_mask.at(b, t) = -std::numeric_limits<T>::infinity();
        out.padded = true;
      }
    }
  }

  const auto x = embed_inputs(p, ids, langs);
  const auto gates = ad::add_row(ad::matmul(x, p.encoder.input_weights), p.encoder.bias);
  auto h = tape.constant(Tensor<T>({B, hidden}, T(0)));
  std::vector<Var<T>> states;
  states.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const auto gx = steps == 1 ? gates : ad::slice_rows(gates, t * B, (t + 1) * B);
    auto next = gru_step(p.encoder, gx, h, hidden);
    bool any_ended = false;
    Tensor<T> keep({B, hidden}, T(1));
    for (std::size_t b = 0; b < B; ++b) {
      if (t >= batch[b]->input_ids.size()) {
        any_ended = true;
        std::fill(keep.data() + b * hidden, keep.data() + (b + 1) * hidden, T(0));
      }
    }
    if (any_ended) {
      // h + keep * (next - h): exactly h where keep is 0.
      next = ad::add(h, ad::mul(tape.constant(std::move(keep)), ad::sub(next, h)));
    }
    h = next;
    states.push_back(h);
  }
  const auto flat = steps == 1 ? states[0] : ad::concat<T>(states, 1);
  out.states = ad::reshape(flat, {B, steps, hidden});
  out.final_state = h;
  return out;
}

template <typename T>
StepOutput<T> decode_step_batch(const BoundParams<T>& p, std::span<const SymbolId> prev,
                                Var<T> state, const EncoderOutput<T>& enc,
                                std::size_t hidden) {
  Tape<T>& tape = *p.symbol_embedding.tape;
  const std::size_t B = enc.batch;
  if (prev.size() != B) throw ShapeError("decode_step: batch size mismatch");
  const std::vector<std::int32_t> latin(B, kLatin);
  const auto x = embed_inputs(p, prev, latin);
  const auto h = gru_cell(p.decoder, x, state, hidden);

  auto scores = ad::reshape(
      ad::batched_matmul(enc.states, ad::reshape(h, {B, hidden, 1})), {B, enc.steps});
  if (enc.padded) scores = ad::add(scores, tape.constant(enc.attention_mask));
  const auto weights = ad::softmax(scores, 1);
  const auto context = ad::reshape(
      ad::batched_matmul(ad::reshape(weights, {B, 1, enc.steps}), enc.states), {B, hidden});

  const std::array<Var<T>, 2> parts = {context, h};
  const auto mlp_in = ad::concat<T>(parts, 1);
  const auto mlp_h =
      ad::tanh(ad::add_row(ad::matmul(mlp_in, p.mlp_hidden_weights), p.mlp_hidden_bias));
  const auto logits =
      ad::add_row(ad::matmul(mlp_h, p.mlp_output_weights), p.mlp_output_bias);
  return {logits, h, weights};
}

template <typename T>
Var<T> sequence_loss(const BoundParams<T>& p, std::span<const EncodedExample* const> batch,
                     std::size_t hidden, std::size_t* target_count) {
  const auto enc = encode_batch(p, batch, hidden);
  const std::size_t B = batch.size();
  std::size_t len = 0;
  std::size_t count = 0;
  for (const auto* ex : batch) {
    if (ex->target_ids.empty()) throw ValidationError("sequence_loss: empty target");
    len = std::max(len, ex->target_ids.size());
    count += ex->target_ids.size();
  }
  if (target_count) *target_count = count;

  auto state = enc.final_state;
  std::vector<SymbolId> prev(B, Vocabulary::kBos);
  std::vector<std::int32_t> targets(B);
  std::vector<Var<T>> losses;
  losses.reserve(len);
  for (std::size_t s = 0; s < len; ++s) {
    for (std::size_t b = 0; b < B; ++b) {
      const auto& tgt = batch[b]->target_ids;
      targets[b] = s < tgt.size() ? tgt[s] : -1;
    }
    const auto step = decode_step_batch(p, prev, state, enc, hidden);
    losses.push_back(ad::cross_entropy<T>(step.logits, targets));
    state = step.state;
    for (std::size_t b = 0; b < B; ++b) {
      const auto& tgt = batch[b]->target_ids;
      prev[b] = s < tgt.size() ? tgt[s] : Vocabulary::kPad;
    }
  }
  auto total = losses[0];
  for (std::size_t s = 1; s < losses.size(); ++s) total = ad::add(total, losses[s]);
  return total;
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> embed_input(SymbolId symbol, std::int32_t language, const ModelParams<T>& params) {
  if (symbol < 0 || static_cast<std::size_t>(symbol) >= params.vocab_size()) {
    throw ValidationError("embed_input: symbol id " + std::to_string(symbol) +
                          " out of range");
  }
  if (language < 0 || static_cast<std::size_t>(language) >= corpus::kNumLanguages) {
    throw ValidationError("embed_input: language id " + std::to_string(language) +
                          " out of range");
  }
  Tape<T> tape;
  const auto p = BoundParams<T>::bind(tape, params);
  const SymbolId s[1] = {symbol};
  const std::int32_t l[1] = {language};
  return embed_inputs<T>(p, s, l).value();
}

template <typename T>
Tensor<T> encode(const EncodedExample& example, const ModelParams<T>& params) {
  Tape<T> tape;
  const auto p = BoundParams<T>::bind(tape, params);
  const EncodedExample* batch[1] = {&example};
  const auto enc = encode_batch<T>(p, batch, hidden_of(params));
  return enc.states.value().reshaped({enc.steps, hidden_of(params)});
}

template <typename T>
Attention<T> attend(const Tensor<T>& decoder_state, const Tensor<T>& encoder_states) {
  if (decoder_state.rank() != 2 || encoder_states.rank() != 2 ||
      decoder_state.shape()[0] != 1 ||
      decoder_state.shape()[1] != encoder_states.shape()[1]) {
    throw ShapeError("attend: query " + ad::shape_str(decoder_state.shape()) +
                     " does not match states " + ad::shape_str(encoder_states.shape()));
  }
  const std::size_t n = encoder_states.shape()[0], h = encoder_states.shape()[1];
  Tape<T> tape;
  const auto states = tape.constant(encoder_states.reshaped({1, n, h}));
  const auto query = tape.constant(decoder_state.reshaped({1, h, 1}));
  const auto scores = ad::reshape(ad::batched_matmul(states, query), {1, n});
  const auto weights = ad::softmax(scores, 1);
  const auto context =
      ad::reshape(ad::batched_matmul(ad::reshape(weights, {1, 1, n}), states), {1, h});
  return {context.value(), weights.value()};
}

template <typename T>
DecodeStep<T> decode_step(SymbolId prev, const Tensor<T>& decoder_state,
                          const Tensor<T>& encoder_states, const ModelParams<T>& params) {
  const std::size_t hidden = hidden_of(params);
  if (encoder_states.rank() != 2 || encoder_states.shape()[1] != hidden ||
      decoder_state.size() != hidden) {
    throw ShapeError("decode_step: states do not match hidden size " +
                     std::to_string(hidden));
  }
  Tape<T> tape;
  const auto p = BoundParams<T>::bind(tape, params);
  EncoderOutput<T> enc;
  enc.batch = 1;
  enc.steps = encoder_states.shape()[0];
  enc.states = tape.constant(encoder_states.reshaped({1, enc.steps, hidden}));
  enc.attention_mask = Tensor<T>({1, enc.steps}, T(0));
  const SymbolId prev_ids[1] = {prev};
  const auto step = decode_step_batch<T>(p, prev_ids, tape.constant(decoder_state.reshaped({1, hidden})),
                                         enc, hidden);
  return {step.logits.value(), step.state.value(), step.weights.value()};
}

template <typename T>
Reconstruction greedy_decode(const EncodedExample& example, const ModelParams<T>& params,
                             std::size_t max_decode_len, const LogitTransform<T>& transform) {
  const std::size_t hidden = hidden_of(params);
  Tape<T> tape;
  const auto p = BoundParams<T>::bind(tape, params);
  const EncodedExample* batch[1] = {&example};
  const auto enc = encode_batch<T>(p, batch, hidden);

  Reconstruction out;
  out.trace.input_ids = example.input_ids;
  out.trace.input_langs = example.input_langs;
  auto state = enc.final_state;
  SymbolId prev = Vocabulary::kBos;
  bool finished = false;
  for (std::size_t s = 0; s < max_decode_len; ++s) {
    const SymbolId prev_ids[1] = {prev};
    const auto step = decode_step_batch<T>(p, prev_ids, state, enc, hidden);
    Tensor<T> logits = step.logits.value();
    if (transform) transform(std::span<T>(logits.data(), logits.size()));
    SymbolId best = 0;
    for (std::size_t v = 1; v < logits.size(); ++v) {
      if (logits[v] > logits[static_cast<std::size_t>(best)]) best = static_cast<SymbolId>(v);
    }
    const auto& w = step.weights.value();
    out.trace.steps.push_back({std::vector<double>(w.values().begin(), w.values().end()), best});
    if (best == Vocabulary::kEos) {
      finished = true;
      break;
    }
    out.ids.push_back(best);
    prev = best;
    state = step.state;
  }
  out.truncated = !finished;
  return out;
}

template <typename T>
Reconstruction beam_decode(const EncodedExample& example, const ModelParams<T>& params,
                           std::size_t max_decode_len, std::size_t width) {
  if (width == 0) throw ValidationError("beam width must be positive");
  const std::size_t hidden = hidden_of(params);
  Tape<T> tape;
  const auto p = BoundParams<T>::bind(tape, params);
  const EncodedExample* batch[1] = {&example};
  const auto enc = encode_batch<T>(p, batch, hidden);

  struct Hypothesis {
    double score = 0.0;
    std::vector<SymbolId> ids;
    std::vector<AttentionStep> steps;
    Var<T> state;
    bool done = false;
  };
  std::vector<Hypothesis> beam = {{0.0, {}, {}, enc.final_state, false}};
  for (std::size_t s = 0; s < max_decode_len; ++s) {
    if (std::all_of(beam.begin(), beam.end(), [](const auto& h) { return h.done; })) break;
    std::vector<Hypothesis> next;
    for (const auto& hyp : beam) {
      if (hyp.done) {
        next.push_back(hyp);
        continue;
      }
      const SymbolId prev[1] = {hyp.ids.empty() ? Vocabulary::kBos : hyp.ids.back()};
      const auto step = decode_step_batch<T>(p, prev, hyp.state, enc, hidden);
      const auto& logits = step.logits.value();
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t v = 0; v < logits.size(); ++v) mx = std::max(mx, double(logits[v]));
      double z = 0.0;
      for (std::size_t v = 0; v < logits.size(); ++v) z += std::exp(double(logits[v]) - mx);
      const double lse = mx + std::log(z);
      const auto& w = step.weights.value();
      for (std::size_t v = 0; v < logits.size(); ++v) {
        Hypothesis h;
        h.score = hyp.score + double(logits[v]) - lse;
        h.ids = hyp.ids;
        h.steps = hyp.steps;
        h.steps.push_back({std::vector<double>(w.values().begin(), w.values().end()),
                           static_cast<SymbolId>(v)});
        h.state = step.state;
        h.done = static_cast<SymbolId>(v) == Vocabulary::kEos;
        if (!h.done) h.ids.push_back(static_cast<SymbolId>(v));
        next.push_back(std::move(h));
      }
    }
    // Stable sort keeps earlier hypotheses (and lower ids) first on ties.
    std::stable_sort(next.begin(), next.end(),
                     [](const auto& a, const auto& b) { return a.score > b.score; });
    if (next.size() > width) next.resize(width);
    beam = std::move(next);
  }
  const auto& best = beam.front();
  Reconstruction out;
  out.ids = best.ids;
  out.trace.input_ids = example.input_ids;
  out.trace.input_langs = example.input_langs;
  out.trace.steps = best.steps;
  out.truncated = !best.done;
  return out;
}

#define PROTOLENS_INSTANTIATE_MODEL(T)                                                     \
  template struct ModelParams<T>;                                                          \
  template struct BoundParams<T>;                                                          \
  template Var<T> embed_inputs<T>(const BoundParams<T>&, std::span<const SymbolId>,        \
                                  std::span<const std::int32_t>);                          \
  template Var<T> gru_step<T>(const BoundGru<T>&, Var<T>, Var<T>, std::size_t);            \
  template Var<T> gru_cell<T>(const BoundGru<T>&, Var<T>, Var<T>, std::size_t);            \
  template EncoderOutput<T> encode_batch<T>(const BoundParams<T>&,                         \
                                            std::span<const EncodedExample* const>,        \
                                            std::size_t);                                  \
  template StepOutput<T> decode_step_batch<T>(const BoundParams<T>&,                       \
                                              std::span<const SymbolId>, Var<T>,           \
                                              const EncoderOutput<T>&, std::size_t);       \
  template Var<T> sequence_loss<T>(const BoundParams<T>&,                                  \
                                   std::span<const EncodedExample* const>, std::size_t,    \
                                   std::size_t*);                                          \
  template Tensor<T> embed_input<T>(SymbolId, std::int32_t, const ModelParams<T>&);        \
  template Tensor<T> encode<T>(const EncodedExample&, const ModelParams<T>&);              \
  template Attention<T> attend<T>(const Tensor<T>&, const Tensor<T>&);                     \
  template DecodeStep<T> decode_step<T>(SymbolId, const Tensor<T>&, const Tensor<T>&,      \
                                        const ModelParams<T>&);                            \
  template Reconstruction greedy_decode<T>(const EncodedExample&, const ModelParams<T>&,   \
                                           std::size_t, const LogitTransform<T>&);         \
  template Reconstruction beam_decode<T>(const EncodedExample&, const ModelParams<T>&,     \
                                         std::size_t, std::size_t);

PROTOLENS_INSTANTIATE_MODEL(float)
PROTOLENS_INSTANTIATE_MODEL(double)

}  // namespace protolens::model
