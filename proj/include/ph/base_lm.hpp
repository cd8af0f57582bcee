#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "ph/crc64.hpp"
#include "ph/encoder.hpp"
#include "ph/errors.hpp"
#include "ph/rng.hpp"
#include "ph/sgd.hpp"
#include "ph/tape.hpp"
#include "ph/tensor.hpp"
#include "ph/tokenizer.hpp"

namespace ph {

struct BaseConfig {
  std::size_t d_model{64};
  std::size_t n_layers{2};
  std::size_t n_heads{4};
  std::size_t d_ff_base{128};
  std::size_t max_seq_len{64};
};

// The shared language model: token + learned position embeddings feeding a
// stack of post-norm encoder blocks, plus a masked-token prediction head
// used only during pretraining. Once frozen it is immutable and safe to
// share across any number of concurrent encodes and fine-tuning runs.
template <class S>
struct BaseLMT {
  Vocab vocab;
  BaseConfig config;
  TensorT<S> tok_emb;  // [V, d_model]
  TensorT<S> pos_emb;  // [max_seq_len, d_model]
  std::vector<EncoderLayerWeights<S>> layers;
  TensorT<S> mlm_w;  // [d_model, V]
  TensorT<S> mlm_b;  // [V]
  bool frozen{false};
  std::uint64_t weights_checksum{0};

  template <class Fn>
  void for_each_weight(Fn&& fn) {
    fn(tok_emb);
    fn(pos_emb);
    for (auto& layer : layers) layer.for_each(fn);
    fn(mlm_w);
    fn(mlm_b);
  }
  template <class Fn>
  void for_each_weight(Fn&& fn) const {
    fn(tok_emb);
    fn(pos_emb);
    for (const auto& layer : layers) layer.for_each(fn);
    fn(mlm_w);
    fn(mlm_b);
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for_each_weight([&n](const TensorT<S>& t) { n += t.size(); });
    return n;
  }
};

using BaseLM = BaseLMT<float>;

template <class S>
BaseLMT<S> init_base_lm(Vocab vocab, const BaseConfig& config, std::uint64_t seed) {
  if (config.n_heads == 0 || config.d_model % config.n_heads != 0) {
    throw ConfigError("d_model " + std::to_string(config.d_model) + " not divisible by n_heads " +
                      std::to_string(config.n_heads));
  }
  Rng rng(seed);
  BaseLMT<S> m;
  m.vocab = std::move(vocab);
  m.config = config;
  const std::size_t v = static_cast<std::size_t>(m.vocab.size());

  m.tok_emb = TensorT<S>::zeros({v, config.d_model});
  m.pos_emb = TensorT<S>::zeros({config.max_seq_len, config.d_model});
  for (S& e : m.tok_emb.data) e = static_cast<S>((rng.next_double() * 2.0 - 1.0) * 0.05);
  for (S& e : m.pos_emb.data) e = static_cast<S>((rng.next_double() * 2.0 - 1.0) * 0.05);

  m.layers.reserve(config.n_layers);
  for (std::size_t i = 0; i < config.n_layers; ++i) {
    m.layers.push_back(EncoderLayerWeights<S>::init(config.d_model, config.d_ff_base, rng));
  }

  // Zero-initialized prediction head: the untrained model scores every
  // vocabulary entry uniformly, so the initial masked loss is exactly ln|V|.
  m.mlm_w = TensorT<S>::zeros({config.d_model, v});
  m.mlm_b = TensorT<S>::zeros({v});

  m.for_each_weight([](TensorT<S>& t) { t.requires_grad = true; });
  return m;
}

// CRC-64 digest over every weight tensor's float32 bytes, little-endian,
// in declared order.
inline std::uint64_t weights_digest(const BaseLM& model) {
  Crc64 crc;
  model.for_each_weight([&crc](const Tensor& t) {
    for (const float v : t.data) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      const unsigned char bytes[4] = {
          static_cast<unsigned char>(bits & 0xFF),
          static_cast<unsigned char>((bits >> 8) & 0xFF),
          static_cast<unsigned char>((bits >> 16) & 0xFF),
          static_cast<unsigned char>((bits >> 24) & 0xFF),
      };
      crc.update(bytes, 4);
    }
  });
  return crc.finish();
}

// Marks all weights non-trainable and records their digest. Idempotent.
inline BaseLM& freeze(BaseLM& model) {
  model.for_each_weight([](Tensor& t) { t.requires_grad = false; });
  model.frozen = true;
  model.weights_checksum = weights_digest(model);
  return model;
}

namespace detail {

// Embedding + encoder stack as a tape graph; trainable and frozen variants.
template <class S>
typename TapeT<S>::Ref encoder_graph(TapeT<S>& tape, BaseLMT<S>* mut, const BaseLMT<S>* imm,
                                     const std::vector<int>& ids) {
  const BaseLMT<S>& model = mut != nullptr ? *mut : *imm;
  const bool trainable = mut != nullptr;
  const auto tok = trainable ? tape.param(mut->tok_emb) : tape.frozen(model.tok_emb);
  const auto pos = trainable ? tape.param(mut->pos_emb) : tape.frozen(model.pos_emb);

  std::vector<int> positions(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) positions[i] = static_cast<int>(i);

  auto hidden = tape.add(tape.embed_rows(tok, ids), tape.embed_rows(pos, positions));
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto refs = trainable ? block_params(tape, mut->layers[l]) : block_frozen(tape, imm->layers[l]);
    hidden = encoder_block<S>(tape, hidden, refs, model.config.n_heads, static_cast<S>(1e-5), 0.0,
                              false, nullptr);
  }
  return hidden;
}

}  // namespace detail

template <class S>
typename TapeT<S>::Ref base_encoder_graph(TapeT<S>& tape, const BaseLMT<S>& model,
                                          const std::vector<int>& ids) {
  return detail::encoder_graph<S>(tape, nullptr, &model, ids);
}

template <class S>
typename TapeT<S>::Ref base_encoder_graph_trainable(TapeT<S>& tape, BaseLMT<S>& model,
                                                    const std::vector<int>& ids) {
  if (model.frozen) throw FrozenParameterError("cannot build a trainable graph over a frozen base");
  return detail::encoder_graph<S>(tape, &model, nullptr, ids);
}

// Hidden states for a token sequence. Position 0 carries the [CLS]
// representation under the framing the pair builders use.
struct Encoding {
  Tensor hidden;  // [T, d_model]
  std::vector<int> token_ids;
  bool truncated{false};
  static constexpr std::size_t cls_index = 0;
};

inline Encoding encode(const BaseLM& model, std::vector<int> ids) {
  Encoding enc;
  if (ids.size() > model.config.max_seq_len) {
    ids.resize(model.config.max_seq_len);
    enc.truncated = true;
  }
  Tape tape;
  const auto hidden = base_encoder_graph<float>(tape, model, ids);
  enc.hidden = tape.val(hidden);
  enc.token_ids = std::move(ids);
  return enc;
}

struct PretrainConfig {
  BaseConfig model;
  double mask_prob{0.15};
  float lr{0.1f};
  std::size_t epochs{30};
  std::uint64_t seed{0};
};

struct PretrainResult {
  BaseLM model;
  double initial_loss{0.0};            // masked loss before any update
  std::vector<double> epoch_losses;    // mean training loss per epoch
};

namespace detail {

// Chooses masked positions among non-reserved tokens; guarantees at least
// one mask whenever any position is eligible.
inline std::vector<std::size_t> choose_masks(const std::vector<int>& ids, double mask_prob, Rng& rng) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= Vocab::kReservedCount) eligible.push_back(i);
  }
  std::vector<std::size_t> chosen;
  for (const std::size_t i : eligible) {
    if (rng.next_double() < mask_prob) chosen.push_back(i);
  }
  if (chosen.empty() && !eligible.empty()) {
    chosen.push_back(eligible[static_cast<std::size_t>(rng.below(eligible.size()))]);
  }
  return chosen;
}

template <class S>
typename TapeT<S>::Ref mlm_loss_graph(TapeT<S>& tape, BaseLMT<S>& model, std::vector<int> masked_ids,
                                      const std::vector<std::size_t>& positions,
                                      const std::vector<int>& targets, bool trainable) {
  const auto hidden = trainable ? base_encoder_graph_trainable(tape, model, masked_ids)
                                : detail::encoder_graph<S>(tape, nullptr, &model, masked_ids);
  std::vector<typename TapeT<S>::Ref> rows;
  rows.reserve(positions.size());
  for (const std::size_t p : positions) rows.push_back(tape.take_row(hidden, p));
  const auto picked = rows.size() == 1 ? rows[0] : tape.stack_rows(std::move(rows));
  const auto w = trainable ? tape.param(model.mlm_w) : tape.frozen(model.mlm_w);
  const auto b = trainable ? tape.param(model.mlm_b) : tape.frozen(model.mlm_b);
  const auto logits = tape.add_row(tape.matmul(picked, w), b);
  return tape.cross_entropy(logits, targets);
}

}  // namespace detail

// Builds a vocabulary from the corpus and trains the encoder with a masked
// token objective: each epoch masks ~mask_prob of the non-reserved tokens
// of every sentence (at least one) and minimizes cross-entropy on the
// masked positions, one SGD step per sentence.
inline PretrainResult pretrain_mlm(const std::vector<std::string>& corpus, const PretrainConfig& cfg) {
  if (corpus.empty()) throw DataError("pretraining corpus is empty");
  if (!(cfg.mask_prob > 0.0) || cfg.mask_prob >= 1.0) {
    throw ConfigError("mask_prob must be in (0,1), got " + std::to_string(cfg.mask_prob));
  }
  Vocab vocab = Vocab::build(corpus);
  if (vocab.size() < 10) {
    throw DataError("corpus too small: vocabulary has " + std::to_string(vocab.size()) +
                    " tokens, need at least 10");
  }

  PretrainResult result;
  result.model = init_base_lm<float>(vocab, cfg.model, cfg.seed);
  BaseLM& model = result.model;

  std::vector<std::vector<int>> sequences;
  for (const std::string& line : corpus) {
    std::vector<int> ids{Vocab::kCls};
    for (const int id : tokenize(line, vocab)) ids.push_back(id);
    if (ids.size() > cfg.model.max_seq_len) ids.resize(cfg.model.max_seq_len);
    bool maskable = false;
    for (const int id : ids) maskable = maskable || id >= Vocab::kReservedCount;
    if (maskable) sequences.push_back(std::move(ids));
  }
  if (sequences.empty()) throw DataError("no corpus sentence contains a maskable token");

  const auto masked_loss = [&](const std::vector<int>& ids, Rng& rng, bool train,
                               Sgd* opt) -> double {
    const std::vector<std::size_t> positions = detail::choose_masks(ids, cfg.mask_prob, rng);
    std::vector<int> masked = ids;
    std::vector<int> targets;
    for (const std::size_t p : positions) {
      targets.push_back(masked[p]);
      masked[p] = Vocab::kMask;
    }
    Tape tape;
    const auto loss = detail::mlm_loss_graph<float>(tape, model, std::move(masked), positions, targets, train);
    const double value = tape.val(loss).data[0];
    if (train) {
      opt->zero_grad();
      tape.backward(loss);
      opt->step();
    }
    return value;
  };

  {
    Rng rng(Rng::mix(cfg.seed, 0xBEEF));
    double sum = 0.0;
    for (const auto& ids : sequences) sum += masked_loss(ids, rng, false, nullptr);
    result.initial_loss = sum / static_cast<double>(sequences.size());
  }

  Sgd opt(cfg.lr);
  model.for_each_weight([&opt](Tensor& t) { opt.add_param(t); });

  std::vector<std::size_t> order(sequences.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(Rng::mix(cfg.seed, epoch + 1));
    rng.shuffle(order);
    double sum = 0.0;
    for (const std::size_t idx : order) sum += masked_loss(sequences[idx], rng, true, &opt);
    result.epoch_losses.push_back(sum / static_cast<double>(sequences.size()));
  }

  model.for_each_weight([](Tensor& t) {
    if (!t.all_finite()) throw NumericError("non-finite base weight after pretraining");
  });
  return result;
}

}  // namespace ph
