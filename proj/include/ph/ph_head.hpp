#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ph/base_lm.hpp"
#include "ph/encoder.hpp"
#include "ph/errors.hpp"
#include "ph/rng.hpp"
#include "ph/tape.hpp"
#include "ph/tensor.hpp"

namespace ph {

// Binary output convention: logit 0 scores True, logit 1 scores False.
constexpr std::size_t kTrueLogit = 0;
constexpr std::size_t kFalseLogit = 1;
constexpr int kTargetTrue = 0;
constexpr int kTargetFalse = 1;

struct PHConfig {
  std::size_t d_model{64};
  std::size_t d_ff{64};   // feed-forward hidden width, the primary size knob
  std::size_t n_heads{2};
  float dropout_p{0.1f};
  std::uint64_t seed{0};
};

// Per-user head: one encoder block plus a two-logit output layer read from
// the [CLS] position. Exclusively owned while training; immutable and
// shareable once trained.
template <class S>
struct PersonalizationHeadT {
  PHConfig config;
  EncoderLayerWeights<S> block;
  TensorT<S> w_out;  // [d_model, 2]
  TensorT<S> b_out;  // [2]

  template <class Fn>
  void for_each_weight(Fn&& fn) {
    block.for_each(fn);
    fn(w_out);
    fn(b_out);
  }
  template <class Fn>
  void for_each_weight(Fn&& fn) const {
    block.for_each(fn);
    fn(w_out);
    fn(b_out);
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for_each_weight([&n](const TensorT<S>& t) { n += t.size(); });
    return n;
  }
};

using PersonalizationHead = PersonalizationHeadT<float>;

template <class S>
PersonalizationHeadT<S> init_head_t(const PHConfig& config) {
  if (config.n_heads == 0 || config.d_model % config.n_heads != 0) {
    throw ConfigError("d_model " + std::to_string(config.d_model) + " not divisible by n_heads " +
                      std::to_string(config.n_heads));
  }
  if (config.d_ff < 1 || config.d_model < 1) throw ConfigError("PH dims must be >= 1");
  if (config.dropout_p < 0.0f || config.dropout_p >= 1.0f) {
    throw ConfigError("PH dropout_p must be in [0,1)");
  }
  Rng rng(config.seed);
  PersonalizationHeadT<S> head;
  head.config = config;
  head.block = EncoderLayerWeights<S>::init(config.d_model, config.d_ff, rng);
  head.w_out = TensorT<S>::zeros({config.d_model, 2});
  glorot_fill(head.w_out, config.d_model, 2, rng);
  head.b_out = TensorT<S>::zeros({2});
  head.w_out.requires_grad = true;
  head.b_out.requires_grad = true;
  return head;
}

inline PersonalizationHead init_head(const PHConfig& config) { return init_head_t<float>(config); }

namespace detail {

template <class S>
typename TapeT<S>::Ref ph_logits_graph_impl(TapeT<S>& tape, PersonalizationHeadT<S>* mut,
                                            const PersonalizationHeadT<S>* imm,
                                            typename TapeT<S>::Ref hidden, bool training, Rng* rng,
                                            std::vector<TensorT<S>>* attn_out) {
  const PersonalizationHeadT<S>& head = mut != nullptr ? *mut : *imm;
  if (tape.val(hidden).cols() != head.config.d_model) {
    throw ConfigError("encoding width " + std::to_string(tape.val(hidden).cols()) +
                      " does not match head d_model " + std::to_string(head.config.d_model));
  }
  const auto refs = mut != nullptr ? block_params(tape, mut->block) : block_frozen(tape, imm->block);
  const auto h2 = encoder_block<S>(tape, hidden, refs, head.config.n_heads, static_cast<S>(1e-5),
                                   training ? head.config.dropout_p : 0.0, training, rng, attn_out);
  const auto cls = tape.take_row(h2, Encoding::cls_index);
  const auto w = mut != nullptr ? tape.param(mut->w_out) : tape.frozen(imm->w_out);
  const auto b = mut != nullptr ? tape.param(mut->b_out) : tape.frozen(imm->b_out);
  return tape.add_row(tape.matmul(cls, w), b);  // [1,2]
}

}  // namespace detail

// Trainable variant: head weights are registered as parameters.
template <class S>
typename TapeT<S>::Ref ph_logits_graph(TapeT<S>& tape, PersonalizationHeadT<S>& head,
                                       typename TapeT<S>::Ref hidden, bool training, Rng* rng,
                                       std::vector<TensorT<S>>* attn_out = nullptr) {
  return detail::ph_logits_graph_impl<S>(tape, &head, nullptr, hidden, training, rng, attn_out);
}

// Inference variant over an immutable head.
template <class S>
typename TapeT<S>::Ref ph_logits_graph(TapeT<S>& tape, const PersonalizationHeadT<S>& head,
                                       typename TapeT<S>::Ref hidden, bool training = false,
                                       Rng* rng = nullptr, std::vector<TensorT<S>>* attn_out = nullptr) {
  return detail::ph_logits_graph_impl<S>(tape, nullptr, &head, hidden, training, rng, attn_out);
}

// Eval-mode forward pass over a precomputed encoding.
inline std::array<float, 2> ph_forward(const PersonalizationHead& head, const Encoding& enc,
                                       std::vector<Tensor>* attn_out = nullptr) {
  if (enc.hidden.rows() < 1) throw DataError("cannot run the head on an empty encoding");
  Tape tape;
  const auto logits = ph_logits_graph<float>(tape, head, tape.frozen(enc.hidden), false, nullptr, attn_out);
  return {tape.val(logits).data[0], tape.val(logits).data[1]};
}

// P(True): softmax over the two logits, returned for the True slot.
inline double confidence(const std::array<float, 2>& logits) {
  const double delta = static_cast<double>(logits[kTrueLogit]) - static_cast<double>(logits[kFalseLogit]);
  return 1.0 / (1.0 + std::exp(-delta));
}

// The linear-only baseline: logits read directly off the frozen encoder's
// [CLS] representation.
template <class S>
struct LinearHeadT {
  std::size_t d_model{0};
  TensorT<S> w;  // [d_model, 2]
  TensorT<S> b;  // [2]

  std::size_t param_count() const { return w.size() + b.size(); }
};

using LinearHead = LinearHeadT<float>;

inline LinearHead init_linear_head(std::size_t d_model, std::uint64_t seed) {
  Rng rng(seed);
  LinearHead head;
  head.d_model = d_model;
  head.w = Tensor::zeros({d_model, 2});
  glorot_fill(head.w, d_model, 2, rng);
  head.b = Tensor::zeros({2});
  head.w.requires_grad = true;
  head.b.requires_grad = true;
  return head;
}

template <class S>
typename TapeT<S>::Ref linear_logits_graph(TapeT<S>& tape, LinearHeadT<S>& head,
                                           typename TapeT<S>::Ref hidden) {
  const auto cls = tape.take_row(hidden, Encoding::cls_index);
  return tape.add_row(tape.matmul(cls, tape.param(head.w)), tape.param(head.b));
}

inline std::array<float, 2> linear_forward(const LinearHead& head, const Encoding& enc) {
  if (enc.hidden.cols() != head.d_model) {
    throw ConfigError("encoding width " + std::to_string(enc.hidden.cols()) +
                      " does not match linear head d_model " + std::to_string(head.d_model));
  }
  Tape tape;
  const auto cls = tape.take_row(tape.frozen(enc.hidden), Encoding::cls_index);
  const auto logits = tape.add_row(tape.matmul(cls, tape.frozen(head.w)), tape.frozen(head.b));
  return {tape.val(logits).data[0], tape.val(logits).data[1]};
}

}  // namespace ph
