#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ph/errors.hpp"
#include "ph/rng.hpp"
#include "ph/tape.hpp"
#include "ph/tensor.hpp"

namespace ph {

// Fills a weight matrix with Glorot-uniform values; biases stay zero.
template <class S>
void glorot_fill(TensorT<S>& w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (S& v : w.data) v = static_cast<S>((rng.next_double() * 2.0 - 1.0) * limit);
}

// One transformer encoder layer's weights: multi-head self-attention
// projections, a two-layer feed-forward net, and two layer norms.
template <class S>
struct EncoderLayerWeights {
  TensorT<S> wq, bq, wk, bk, wv, bv, wo, bo;
  TensorT<S> w1, b1, w2, b2;
  TensorT<S> ln1_g, ln1_b, ln2_g, ln2_b;

  static EncoderLayerWeights init(std::size_t d_model, std::size_t d_ff, Rng& rng) {
    EncoderLayerWeights w;
    for (TensorT<S>* m : {&w.wq, &w.wk, &w.wv, &w.wo}) {
      *m = TensorT<S>::zeros({d_model, d_model});
      glorot_fill(*m, d_model, d_model, rng);
    }
    w.bq = TensorT<S>::zeros({d_model});
    w.bk = TensorT<S>::zeros({d_model});
    w.bv = TensorT<S>::zeros({d_model});
    w.bo = TensorT<S>::zeros({d_model});
    w.w1 = TensorT<S>::zeros({d_model, d_ff});
    glorot_fill(w.w1, d_model, d_ff, rng);
    w.b1 = TensorT<S>::zeros({d_ff});
    w.w2 = TensorT<S>::zeros({d_ff, d_model});
    glorot_fill(w.w2, d_ff, d_model, rng);
    w.b2 = TensorT<S>::zeros({d_model});
    w.ln1_g = TensorT<S>::full({d_model}, S(1));
    w.ln1_b = TensorT<S>::zeros({d_model});
    w.ln2_g = TensorT<S>::full({d_model}, S(1));
    w.ln2_b = TensorT<S>::zeros({d_model});
    for (TensorT<S>* t : {&w.wq, &w.bq, &w.wk, &w.bk, &w.wv, &w.bv, &w.wo, &w.bo,
                          &w.w1, &w.b1, &w.w2, &w.b2, &w.ln1_g, &w.ln1_b, &w.ln2_g, &w.ln2_b}) {
      t->requires_grad = true;
    }
    return w;
  }

  template <class Fn>
  void for_each(Fn&& fn) {
    fn(wq); fn(bq); fn(wk); fn(bk); fn(wv); fn(bv); fn(wo); fn(bo);
    fn(w1); fn(b1); fn(w2); fn(b2);
    fn(ln1_g); fn(ln1_b); fn(ln2_g); fn(ln2_b);
  }
  template <class Fn>
  void for_each(Fn&& fn) const {
    fn(wq); fn(bq); fn(wk); fn(bk); fn(wv); fn(bv); fn(wo); fn(bo);
    fn(w1); fn(b1); fn(w2); fn(b2);
    fn(ln1_g); fn(ln1_b); fn(ln2_g); fn(ln2_b);
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for_each([&n](const TensorT<S>& t) { n += t.size(); });
    return n;
  }
};

template <class S>
struct EncoderBlockRefs {
  using Ref = typename TapeT<S>::Ref;
  Ref wq, bq, wk, bk, wv, bv, wo, bo;
  Ref w1, b1, w2, b2;
  Ref ln1_g, ln1_b, ln2_g, ln2_b;
};

// Registers every layer weight as a trainable parameter leaf.
template <class S>
EncoderBlockRefs<S> block_params(TapeT<S>& tape, EncoderLayerWeights<S>& w) {
  EncoderBlockRefs<S> r;
  r.wq = tape.param(w.wq); r.bq = tape.param(w.bq);
  r.wk = tape.param(w.wk); r.bk = tape.param(w.bk);
  r.wv = tape.param(w.wv); r.bv = tape.param(w.bv);
  r.wo = tape.param(w.wo); r.bo = tape.param(w.bo);
  r.w1 = tape.param(w.w1); r.b1 = tape.param(w.b1);
  r.w2 = tape.param(w.w2); r.b2 = tape.param(w.b2);
  r.ln1_g = tape.param(w.ln1_g); r.ln1_b = tape.param(w.ln1_b);
  r.ln2_g = tape.param(w.ln2_g); r.ln2_b = tape.param(w.ln2_b);
  return r;
}

// Registers every layer weight as a frozen (gradient-free) leaf.
template <class S>
EncoderBlockRefs<S> block_frozen(TapeT<S>& tape, const EncoderLayerWeights<S>& w) {
  EncoderBlockRefs<S> r;
  r.wq = tape.frozen(w.wq); r.bq = tape.frozen(w.bq);
  r.wk = tape.frozen(w.wk); r.bk = tape.frozen(w.bk);
  r.wv = tape.frozen(w.wv); r.bv = tape.frozen(w.bv);
  r.wo = tape.frozen(w.wo); r.bo = tape.frozen(w.bo);
  r.w1 = tape.frozen(w.w1); r.b1 = tape.frozen(w.b1);
  r.w2 = tape.frozen(w.w2); r.b2 = tape.frozen(w.b2);
  r.ln1_g = tape.frozen(w.ln1_g); r.ln1_b = tape.frozen(w.ln1_b);
  r.ln2_g = tape.frozen(w.ln2_g); r.ln2_b = tape.frozen(w.ln2_b);
  return r;
}

// Multi-head self-attention over x [T,d]: d is split evenly into n_heads
// slices of dim d/n_heads, each attended with scaled dot-product
// (scale 1/sqrt(d/n_heads)), then re-concatenated and projected by wo.
// When attn_out is given, each head's row-stochastic attention matrix is
// copied out for inspection.
template <class S>
typename TapeT<S>::Ref multi_head_self_attention(TapeT<S>& tape, typename TapeT<S>::Ref x,
                                                 const EncoderBlockRefs<S>& w, std::size_t n_heads,
                                                 std::vector<TensorT<S>>* attn_out = nullptr) {
  const std::size_t d = tape.val(x).cols();
  if (n_heads == 0 || d % n_heads != 0) {
    throw ConfigError("d_model " + std::to_string(d) + " not divisible by n_heads " +
                      std::to_string(n_heads));
  }
  const std::size_t dh = d / n_heads;
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

  const auto q = tape.add_row(tape.matmul(x, w.wq), w.bq);
  const auto k = tape.add_row(tape.matmul(x, w.wk), w.bk);
  const auto v = tape.add_row(tape.matmul(x, w.wv), w.bv);

  std::vector<typename TapeT<S>::Ref> head_outputs;
  head_outputs.reserve(n_heads);
  for (std::size_t h = 0; h < n_heads; ++h) {
    const std::size_t c0 = h * dh, c1 = (h + 1) * dh;
    const auto qh = tape.col_slice(q, c0, c1);
    const auto kh = tape.col_slice(k, c0, c1);
    const auto vh = tape.col_slice(v, c0, c1);
    const auto scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), scale);
    const auto attn = tape.softmax(scores, -1);
    if (attn_out != nullptr) attn_out->push_back(tape.val(attn));
    head_outputs.push_back(tape.matmul(attn, vh));
  }
  const auto concat = n_heads == 1 ? head_outputs[0] : tape.col_concat(std::move(head_outputs));
  return tape.add_row(tape.matmul(concat, w.wo), w.bo);
}

// Post-norm encoder block:
//   h1 = LayerNorm(x + MHSA(x))
//   h2 = LayerNorm(h1 + Dropout(FFN(h1)))
// with a ReLU two-layer FFN and dropout applied to the FFN output only.
template <class S>
typename TapeT<S>::Ref encoder_block(TapeT<S>& tape, typename TapeT<S>::Ref x,
                                     const EncoderBlockRefs<S>& w, std::size_t n_heads, S ln_eps,
                                     double dropout_p, bool training, Rng* rng,
                                     std::vector<TensorT<S>>* attn_out = nullptr) {
  const auto att = multi_head_self_attention(tape, x, w, n_heads, attn_out);
  const auto h1 = tape.layer_norm(tape.add(x, att), w.ln1_g, w.ln1_b, ln_eps);
  auto ffn = tape.add_row(tape.matmul(tape.relu(tape.add_row(tape.matmul(h1, w.w1), w.b1)), w.w2), w.b2);
  ffn = tape.dropout(ffn, dropout_p, training, rng);
  return tape.layer_norm(tape.add(h1, ffn), w.ln2_g, w.ln2_b, ln_eps);
}

}  // namespace ph
