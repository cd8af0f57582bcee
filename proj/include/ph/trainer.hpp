#pragma once

#include <chrono>
#include <cstdint>
#include <limits>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ph/base_lm.hpp"
#include "ph/cost_metrics.hpp"
#include "ph/errors.hpp"
#include "ph/ph_head.hpp"
#include "ph/rng.hpp"
#include "ph/sgd.hpp"
#include "ph/task_data.hpp"

namespace ph {

struct TrainConfig {
  std::size_t batch_size{16};
  float lr{0.02f};
  std::size_t epochs{50};
  float anneal_factor{0.5f};
  std::size_t anneal_patience{3};
  float min_lr{1e-4f};
  std::uint64_t seed{0};
  std::size_t negatives_per_example{0};

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr > 0.0f)) throw ConfigError("lr must be positive");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(anneal_factor > 0.0f) || !(anneal_factor < 1.0f)) {
      throw ConfigError("anneal_factor must be in (0,1)");
    }
  }

  nlohmann::json to_json() const {
    return {{"batch_size", batch_size},
            {"lr", lr},
            {"epochs", epochs},
            {"anneal_factor", anneal_factor},
            {"anneal_patience", anneal_patience},
            {"min_lr", min_lr},
            {"seed", seed},
            {"negatives_per_example", negatives_per_example}};
  }
};

struct TrainingReport {
  std::vector<double> epoch_losses;
  std::size_t trainable_param_count{0};
  double wall_time_seconds{0.0};
  std::uint64_t base_checksum_before{0};
  std::uint64_t base_checksum_after{0};
  float final_lr{0.0f};

  nlohmann::json to_json() const {
    return {{"epoch_losses", epoch_losses},
            {"trainable_param_count", trainable_param_count},
            {"wall_time_seconds", wall_time_seconds},
            {"base_checksum_before", base_checksum_before},
            {"base_checksum_after", base_checksum_after},
            {"checksums_match", base_checksum_before == base_checksum_after},
            {"final_lr", final_lr}};
  }
};

struct EvalMetrics {
  double accuracy{0.0};
  double macro_f1{0.0};
  double micro_f1{0.0};
  struct PerClass {
    std::string class_name;
    double precision{0.0};
    double recall{0.0};
    double f1{0.0};
    std::size_t tp{0}, fp{0}, fn{0}, support{0};
  };
  std::vector<PerClass> per_class;
  std::vector<std::vector<std::size_t>> confusion;  // [true class][predicted class]

  nlohmann::json to_json() const {
    nlohmann::json per;
    for (const PerClass& c : per_class) {
      per.push_back({{"class", c.class_name},
                     {"precision", c.precision},
                     {"recall", c.recall},
                     {"f1", c.f1},
                     {"tp", c.tp},
                     {"fp", c.fp},
                     {"fn", c.fn},
                     {"support", c.support}});
    }
    return {{"accuracy", accuracy},
            {"macro_f1", macro_f1},
            {"micro_f1", micro_f1},
            {"per_class", per},
            {"confusion", confusion}};
  }
};

// Per-pair hidden states through the frozen base, computed once and reused
// across epochs and evaluations; valid because a frozen encode is a pure
// function of its input.
class EncodingCache {
 public:
  explicit EncodingCache(const BaseLM& base) : base_(&base) {
    if (!base.frozen) throw FrozenParameterError("encoding cache requires a frozen base");
  }

  const Tensor& hidden(const std::string& label_text, const std::string& input_text) {
    const std::string key = label_text + '\x1f' + input_text;
    const auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    const Encoding enc = encode(*base_, pair_token_ids(label_text, input_text, base_->vocab));
    return cache_.emplace(key, enc.hidden).first->second;
  }

  const BaseLM& base() const { return *base_; }

 private:
  const BaseLM* base_;
  std::unordered_map<std::string, Tensor> cache_;
};

namespace detail {

// Shared mini-batch SGD loop over (label, text) -> True/False pairs.
// `logits_fn` builds the [1,2] logit graph for one cached encoding.
template <class LogitsFn>
class BinaryPairTrainer {
 public:
  BinaryPairTrainer(EncodingCache& cache, std::vector<BinaryTaskExample> pairs, TrainConfig cfg,
                    LogitsFn logits_fn, std::vector<Tensor*> params)
      : cache_(&cache), pairs_(std::move(pairs)), cfg_(cfg), logits_fn_(std::move(logits_fn)),
        params_(std::move(params)), opt_(cfg.lr) {
    cfg_.validate();
    if (pairs_.empty()) throw DataError("cannot train on an empty pair list");
    for (Tensor* p : params_) opt_.add_param(*p);
    for (const BinaryTaskExample& p : pairs_) cache_->hidden(p.label_text, p.input_text);
  }

  void run_epochs(std::size_t n) {
    std::vector<std::size_t> order(pairs_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t e = 0; e < n; ++e, ++epoch_) {
      Rng shuffle_rng(Rng::mix(cfg_.seed, epoch_ + 1));
      Rng dropout_rng(Rng::mix(cfg_.seed, 0xD0D0 + epoch_));
      shuffle_rng.shuffle(order);

      double loss_sum = 0.0;
      for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
        const std::size_t end = std::min(order.size(), start + cfg_.batch_size);
        const float inv_batch = 1.0f / static_cast<float>(end - start);
        opt_.zero_grad();
        for (std::size_t i = start; i < end; ++i) {
          const BinaryTaskExample& pair = pairs_[order[i]];
          Tape tape;
          const auto hidden = tape.frozen(cache_->hidden(pair.label_text, pair.input_text));
          const auto logits = logits_fn_(tape, hidden, dropout_rng);
          const auto loss = tape.cross_entropy(logits, {pair.target ? kTargetTrue : kTargetFalse});
          loss_sum += tape.val(loss).data[0];
          tape.backward(loss, inv_batch);
        }
        opt_.step();
      }
      const double epoch_loss = loss_sum / static_cast<double>(order.size());
      epoch_losses_.push_back(epoch_loss);
      anneal(epoch_loss);
    }
    for (Tensor* p : params_) {
      if (!p->all_finite()) throw NumericError("non-finite head weight after training epoch");
    }
  }

  const std::vector<double>& epoch_losses() const { return epoch_losses_; }
  float lr() const { return opt_.lr(); }
  std::size_t trainable_param_count() const { return opt_.param_element_count(); }

 private:
  // Halve the rate after `anneal_patience` epochs without improvement.
  void anneal(double epoch_loss) {
    if (epoch_loss < best_loss_) {
      best_loss_ = epoch_loss;
      stall_ = 0;
      return;
    }
    if (++stall_ >= cfg_.anneal_patience) {
      opt_.set_lr(std::max(cfg_.min_lr, opt_.lr() * cfg_.anneal_factor));
      stall_ = 0;
    }
  }

  EncodingCache* cache_;
  std::vector<BinaryTaskExample> pairs_;
  TrainConfig cfg_;
  LogitsFn logits_fn_;
  std::vector<Tensor*> params_;
  Sgd opt_;
  std::vector<double> epoch_losses_;
  std::size_t epoch_{0};
  double best_loss_{std::numeric_limits<double>::infinity()};
  std::size_t stall_{0};
};

template <class Trainer>
TrainingReport finish_report(const BaseLM& base, std::uint64_t checksum_before, const Trainer& trainer,
                             std::chrono::steady_clock::time_point started) {
  TrainingReport report;
  report.epoch_losses = trainer.epoch_losses();
  report.trainable_param_count = trainer.trainable_param_count();
  report.final_lr = trainer.lr();
  report.base_checksum_before = checksum_before;
  report.base_checksum_after = weights_digest(base);
  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (report.base_checksum_before != report.base_checksum_after) {
    throw FrozenParameterError("base weights changed during a frozen-base training run");
  }
  return report;
}

}  // namespace detail

// Trains the head (in place) against binary cross-entropy on the user's
// pairs; only head weights enter the optimizer, and the report carries the
// base digest before and after as proof the base never moved.
inline TrainingReport train_head(const BaseLM& base, PersonalizationHead& head,
                                 const std::vector<BinaryTaskExample>& pairs, const TrainConfig& cfg,
                                 EncodingCache* shared_cache = nullptr) {
  if (!base.frozen) throw FrozenParameterError("train_head requires a frozen base");
  if (head.config.d_model != base.config.d_model) {
    throw ConfigError("head d_model " + std::to_string(head.config.d_model) +
                      " does not match base d_model " + std::to_string(base.config.d_model));
  }
  const auto started = std::chrono::steady_clock::now();
  const std::uint64_t before = weights_digest(base);

  EncodingCache local_cache(base);
  EncodingCache& cache = shared_cache != nullptr ? *shared_cache : local_cache;

  std::vector<Tensor*> params;
  head.for_each_weight([&params](Tensor& t) { params.push_back(&t); });

  auto logits_fn = [&head](Tape& tape, Tape::Ref hidden, Rng& dropout_rng) {
    return ph_logits_graph<float>(tape, head, hidden, true, &dropout_rng);
  };
  detail::BinaryPairTrainer trainer(cache, pairs, cfg, std::move(logits_fn), std::move(params));
  trainer.run_epochs(cfg.epochs);
  return detail::finish_report(base, before, trainer, started);
}

// The linear-only baseline: same loop, no encoder block, logits straight off
// the frozen [CLS] representation.
inline std::pair<LinearHead, TrainingReport> train_linear_only(const BaseLM& base,
                                                               const TrainConfig& cfg,
                                                               const std::vector<BinaryTaskExample>& pairs,
                                                               EncodingCache* shared_cache = nullptr) {
  if (!base.frozen) throw FrozenParameterError("train_linear_only requires a frozen base");
  const auto started = std::chrono::steady_clock::now();
  const std::uint64_t before = weights_digest(base);

  EncodingCache local_cache(base);
  EncodingCache& cache = shared_cache != nullptr ? *shared_cache : local_cache;

  LinearHead head = init_linear_head(base.config.d_model, cfg.seed);
  auto logits_fn = [&head](Tape& tape, Tape::Ref hidden, Rng&) {
    return linear_logits_graph<float>(tape, head, hidden);
  };
  detail::BinaryPairTrainer trainer(cache, pairs, cfg, std::move(logits_fn),
                                    std::vector<Tensor*>{&head.w, &head.b});
  trainer.run_epochs(cfg.epochs);
  TrainingReport report = detail::finish_report(base, before, trainer, started);
  return {std::move(head), std::move(report)};
}

// Confidence functions for the two classifier shapes.
inline ConfidenceFn head_confidence_fn(EncodingCache& cache, const PersonalizationHead& head) {
  return [&cache, &head](const std::string& class_name, const std::string& text) {
    const Tensor& hidden = cache.hidden(verbalize_label(class_name), text);
    Tape tape;
    const auto logits = ph_logits_graph<float>(tape, head, tape.frozen(hidden));
    return confidence({tape.val(logits).data[0], tape.val(logits).data[1]});
  };
}

inline ConfidenceFn linear_confidence_fn(EncodingCache& cache, const LinearHead& head) {
  return [&cache, &head](const std::string& class_name, const std::string& text) {
    const Tensor& hidden = cache.hidden(verbalize_label(class_name), text);
    Tape tape;
    const auto cls = tape.take_row(tape.frozen(hidden), Encoding::cls_index);
    const auto logits = tape.add_row(tape.matmul(cls, tape.frozen(head.w)), tape.frozen(head.b));
    return confidence({tape.val(logits).data[0], tape.val(logits).data[1]});
  };
}

// Full-class-set argmax decoding over the test split, scored as accuracy,
// macro-F1 (absent classes count as 0), and micro-F1.
inline EvalMetrics evaluate_confidence(const ConfidenceFn& conf, const std::vector<LabeledExample>& test,
                                       const std::vector<std::string>& classes) {
  if (test.empty()) throw DataError("evaluate needs a nonempty test set");
  if (classes.empty()) throw DataError("evaluate needs a nonempty class list");

  std::unordered_map<std::string, std::size_t> class_index;
  for (std::size_t i = 0; i < classes.size(); ++i) class_index.emplace(classes[i], i);

  EvalMetrics m;
  m.confusion.assign(classes.size(), std::vector<std::size_t>(classes.size(), 0));
  std::size_t correct = 0;
  for (const LabeledExample& ex : test) {
    const auto truth = class_index.find(ex.class_name);
    if (truth == class_index.end()) {
      throw DataError("test example label \"" + ex.class_name + "\" not in the class list");
    }
    const Prediction pred = predict_class(conf, ex.text, classes);
    const std::size_t predicted = class_index.at(pred.class_name);
    m.confusion[truth->second][predicted] += 1;
    if (predicted == truth->second) ++correct;
  }

  m.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
  std::size_t tp_total = 0, fp_total = 0, fn_total = 0;
  double f1_sum = 0.0;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    EvalMetrics::PerClass pc;
    pc.class_name = classes[i];
    for (std::size_t j = 0; j < classes.size(); ++j) {
      if (i == j) {
        pc.tp = m.confusion[i][i];
      } else {
        pc.fn += m.confusion[i][j];
        pc.fp += m.confusion[j][i];
      }
      pc.support += m.confusion[i][j];
    }
    pc.precision = pc.tp + pc.fp == 0 ? 0.0 : static_cast<double>(pc.tp) / static_cast<double>(pc.tp + pc.fp);
    pc.recall = pc.tp + pc.fn == 0 ? 0.0 : static_cast<double>(pc.tp) / static_cast<double>(pc.tp + pc.fn);
    pc.f1 = pc.precision + pc.recall == 0.0 ? 0.0
                                            : 2.0 * pc.precision * pc.recall / (pc.precision + pc.recall);
    f1_sum += pc.f1;
    tp_total += pc.tp;
    fp_total += pc.fp;
    fn_total += pc.fn;
    m.per_class.push_back(std::move(pc));
  }
  m.macro_f1 = f1_sum / static_cast<double>(classes.size());
  const double micro_p =
      tp_total + fp_total == 0 ? 0.0 : static_cast<double>(tp_total) / static_cast<double>(tp_total + fp_total);
  const double micro_r =
      tp_total + fn_total == 0 ? 0.0 : static_cast<double>(tp_total) / static_cast<double>(tp_total + fn_total);
  m.micro_f1 = micro_p + micro_r == 0.0 ? 0.0 : 2.0 * micro_p * micro_r / (micro_p + micro_r);
  return m;
}

inline EvalMetrics evaluate(const BaseLM& base, const PersonalizationHead& head,
                            const std::vector<LabeledExample>& test, const std::vector<std::string>& classes,
                            EncodingCache* shared_cache = nullptr) {
  EncodingCache local_cache(base);
  EncodingCache& cache = shared_cache != nullptr ? *shared_cache : local_cache;
  return evaluate_confidence(head_confidence_fn(cache, head), test, classes);
}

inline EvalMetrics evaluate(const BaseLM& base, const LinearHead& head,
                            const std::vector<LabeledExample>& test, const std::vector<std::string>& classes,
                            EncodingCache* shared_cache = nullptr) {
  EncodingCache local_cache(base);
  EncodingCache& cache = shared_cache != nullptr ? *shared_cache : local_cache;
  return evaluate_confidence(linear_confidence_fn(cache, head), test, classes);
}

// One measured point of the data-vs-epoch grid.
struct GridCell {
  PHConfig config;
  std::size_t per_class{0};
  std::size_t epoch{0};
  EvalMetrics metrics;
};

struct GridResult {
  std::vector<std::size_t> per_class_counts;
  std::vector<std::size_t> epoch_checkpoints;
  std::vector<PHConfig> configs;
  std::vector<GridCell> cells;

  const GridCell& cell(std::size_t config_idx, std::size_t count, std::size_t epoch) const {
    for (const GridCell& c : cells) {
      if (c.per_class == count && c.epoch == epoch && c.config.d_ff == configs[config_idx].d_ff &&
          c.config.n_heads == configs[config_idx].n_heads) {
        return c;
      }
    }
    throw NotFoundError("no grid cell for count " + std::to_string(count) + " epoch " +
                        std::to_string(epoch));
  }
};

// Data-vs-epoch protocol: for every (config, per-class count), one training
// run is evaluated at each epoch checkpoint and then continued (optimizer
// state intact) to the next checkpoint — never restarted. Counts use nested
// subsamples, so a larger count extends the smaller training set.
inline GridResult run_data_epoch_grid(const BaseLM& base, const TrainConfig& cfg, const Dataset& ds,
                                      const std::vector<std::size_t>& per_class_counts,
                                      const std::vector<std::size_t>& epoch_checkpoints,
                                      const std::vector<PHConfig>& ph_configs, std::uint64_t seed) {
  for (std::size_t i = 1; i < per_class_counts.size(); ++i) {
    if (per_class_counts[i] <= per_class_counts[i - 1]) {
      throw ConfigError("per-class counts must be strictly ascending");
    }
  }
  for (std::size_t i = 1; i < epoch_checkpoints.size(); ++i) {
    if (epoch_checkpoints[i] <= epoch_checkpoints[i - 1]) {
      throw ConfigError("epoch checkpoints must be strictly ascending");
    }
  }
  if (epoch_checkpoints.empty() || per_class_counts.empty() || ph_configs.empty()) {
    throw ConfigError("grid needs at least one config, count, and checkpoint");
  }

  GridResult result;
  result.per_class_counts = per_class_counts;
  result.epoch_checkpoints = epoch_checkpoints;
  result.configs = ph_configs;

  EncodingCache cache(base);
  for (std::size_t ci = 0; ci < ph_configs.size(); ++ci) {
    for (std::size_t ki = 0; ki < per_class_counts.size(); ++ki) {
      const std::size_t k = per_class_counts[ki];
      const std::uint64_t cell_seed = Rng::mix(Rng::mix(seed, ci), k);

      const Dataset sub = subsample_per_class(ds, true, k, seed);
      TrainConfig cell_cfg = cfg;
      cell_cfg.seed = cell_seed;
      const auto pairs = make_binary_pairs(sub, cfg.negatives_per_example, cell_seed);

      PHConfig head_cfg = ph_configs[ci];
      head_cfg.d_model = base.config.d_model;
      head_cfg.seed = cell_seed;
      PersonalizationHead head = init_head(head_cfg);

      std::vector<Tensor*> params;
      head.for_each_weight([&params](Tensor& t) { params.push_back(&t); });
      auto logits_fn = [&head](Tape& tape, Tape::Ref hidden, Rng& dropout_rng) {
        return ph_logits_graph<float>(tape, head, hidden, true, &dropout_rng);
      };
      detail::BinaryPairTrainer trainer(cache, pairs, cell_cfg, std::move(logits_fn), std::move(params));

      std::size_t done = 0;
      for (const std::size_t checkpoint : epoch_checkpoints) {
        trainer.run_epochs(checkpoint - done);
        done = checkpoint;
        GridCell cell;
        cell.config = head_cfg;
        cell.per_class = k;
        cell.epoch = checkpoint;
        cell.metrics = evaluate(base, head, ds.test, ds.classes, &cache);
        result.cells.push_back(std::move(cell));
      }
    }
  }
  return result;
}

// Table-style view: one row per config, first cell as the baseline and every
// other cell annotated with its differential against that baseline.
inline std::string grid_markdown(const GridResult& grid) {
  std::ostringstream os;
  os << "| Hidden Dims | # Params |";
  for (const std::size_t k : grid.per_class_counts) {
    for (const std::size_t e : grid.epoch_checkpoints) {
      os << " epoch=" << e << " data/class=" << k << " |";
    }
  }
  os << "\n|---|---|";
  for (std::size_t i = 0; i < grid.per_class_counts.size() * grid.epoch_checkpoints.size(); ++i) os << "---|";
  os << "\n";
  os.precision(2);
  os << std::fixed;
  for (std::size_t ci = 0; ci < grid.configs.size(); ++ci) {
    const PHConfig& cfgi = grid.configs[ci];
    os << "| " << cfgi.d_ff << " | "
       << cost::human_count(cost::count_ph_params(grid.cells.front().config.d_model, cfgi.d_ff, true))
       << " |";
    const double baseline =
        100.0 * grid.cell(ci, grid.per_class_counts.front(), grid.epoch_checkpoints.front()).metrics.macro_f1;
    bool first = true;
    for (const std::size_t k : grid.per_class_counts) {
      for (const std::size_t e : grid.epoch_checkpoints) {
        const double f1 = 100.0 * grid.cell(ci, k, e).metrics.macro_f1;
        if (first) {
          os << " " << f1 << " |";
          first = false;
        } else {
          os << " " << f1 << " (" << (f1 >= baseline ? "+" : "") << f1 - baseline << ") |";
        }
      }
    }
    os << "\n";
  }
  return os.str();
}

inline std::string grid_csv(const GridResult& grid, std::uint64_t seed) {
  std::ostringstream os;
  os << "hidden_dim,heads,per_class,epoch,seed,acc,macro_f1,micro_f1,params\n";
  for (const GridCell& c : grid.cells) {
    os << c.config.d_ff << ',' << c.config.n_heads << ',' << c.per_class << ',' << c.epoch << ','
       << seed << ',' << c.metrics.accuracy << ',' << c.metrics.macro_f1 << ',' << c.metrics.micro_f1
       << ',' << cost::count_ph_params(c.config.d_model, c.config.d_ff, true) << "\n";
  }
  return os.str();
}

}  // namespace ph
