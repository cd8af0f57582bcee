#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ph/errors.hpp"

namespace ph::cost {

// f32 storage: 4 bytes per parameter everywhere.
constexpr std::uint64_t kBytesPerParam = 4;

// Parameter count of one personalization head:
//   Q/K/V/O projections    4*(d_model^2 + d_model)
//   feed-forward           d_model*d_ff + d_ff + d_ff*d_model + d_model
//   two layer norms        4*d_model
//   binary output layer    2*d_model + 2  (optional)
inline std::uint64_t count_ph_params(std::uint64_t d_model, std::uint64_t d_ff, bool include_output) {
  const std::uint64_t attention = 4 * (d_model * d_model + d_model);
  const std::uint64_t ffn = d_model * d_ff + d_ff + d_ff * d_model + d_model;
  const std::uint64_t norms = 4 * d_model;
  const std::uint64_t output = include_output ? 2 * d_model + 2 : 0;
  return attention + ffn + norms + output;
}

inline std::uint64_t count_linear_params(std::uint64_t d_model, std::uint64_t n_out = 2) {
  return d_model * n_out + n_out;
}

struct CostModel {
  std::uint64_t base_params{0};    // shared frozen encoder
  std::uint64_t head_params{0};    // per-user head incl. output layer
  std::uint64_t linear_params{0};  // per-user output layer of the full-finetune baseline
  std::uint64_t n_users{0};
};

enum class FinetuneMode { full_finetune, ph_only };

struct AggregateCost {
  std::uint64_t train_params_total{0};
  std::uint64_t stored_params_total{0};
  std::uint64_t stored_bytes_total{0};
};

// Fleet-level training and storage totals.
//   full fine-tune: every user trains and stores their own base + linear.
//   ph_only:        one shared base is stored once; each user adds only a head.
inline AggregateCost aggregate_cost(const CostModel& m, FinetuneMode mode) {
  AggregateCost out;
  if (mode == FinetuneMode::full_finetune) {
    const std::uint64_t per_user = m.base_params + m.linear_params;
    out.train_params_total = m.n_users * per_user;
    out.stored_params_total = m.n_users * per_user;
  } else {
    out.train_params_total = m.n_users * m.head_params;
    out.stored_params_total = m.base_params + m.n_users * m.head_params;
  }
  out.stored_bytes_total = out.stored_params_total * kBytesPerParam;
  return out;
}

// A personalized head must be strictly smaller than the base it adapts for
// the scaling story to hold; report code asserts this for every config.
inline bool head_smaller_than_base(std::uint64_t head_params, std::uint64_t base_params) {
  return head_params < base_params;
}

enum class ScoreUnit { percent, fraction };

struct PEInput {
  double f_score{0.0};
  ScoreUnit unit{ScoreUnit::percent};
  double training_cost{0.0};  // trainable-parameter count proxy
  double model_size{0.0};     // bytes (any unit, used consistently)
};

// Personalization efficiency: F-score squared over (training cost x model
// size), with trainable parameters standing in for training cost.
inline double personalization_efficiency(const PEInput& in) {
  if (!(in.training_cost > 0.0) || !(in.model_size > 0.0)) {
    throw ConfigError("personalization efficiency needs positive training cost and model size");
  }
  return in.f_score * in.f_score / (in.training_cost * in.model_size);
}

// PE of `x` relative to a reference configuration; scores are converted to a
// common unit first so the ratio does not depend on how they were recorded.
inline double normalized_pe(const PEInput& x, const PEInput& reference) {
  const auto as_percent = [](const PEInput& in) {
    PEInput out = in;
    if (in.unit == ScoreUnit::fraction) {
      out.f_score *= 100.0;
      out.unit = ScoreUnit::percent;
    }
    return out;
  };
  return personalization_efficiency(as_percent(x)) / personalization_efficiency(as_percent(reference));
}

// Personalized-model bytes as a fraction of the user data accumulated over
// an account lifetime.
inline double storage_overhead(double model_bytes, double daily_user_data_bytes, double lifetime_days) {
  if (model_bytes < 0.0 || !(daily_user_data_bytes > 0.0) || !(lifetime_days > 0.0)) {
    throw ConfigError("storage_overhead needs model_bytes >= 0 and positive denominator inputs");
  }
  return model_bytes / (daily_user_data_bytes * lifetime_days);
}

// Human-readable size with table-style rounding (MiB/KiB units).
inline std::string human_size(std::uint64_t bytes) {
  std::ostringstream os;
  const double b = static_cast<double>(bytes);
  const auto round_fmt = [&os](double v, const char* suffix) {
    if (v < 10.0) {
      os.precision(1);
      os << std::fixed << v << suffix;
    } else {
      os << static_cast<std::uint64_t>(std::llround(v)) << suffix;
    }
  };
  if (b >= 1024.0 * 1024.0) {
    round_fmt(b / (1024.0 * 1024.0), "MB");
  } else if (b >= 1024.0) {
    round_fmt(b / 1024.0, "KB");
  } else {
    os << bytes << "B";
  }
  return os.str();
}

inline std::string human_count(std::uint64_t n) {
  std::ostringstream os;
  const auto fmt = [&os](double v, const char* suffix) {
    os.precision(v < 10.0 ? 2 : (v < 100.0 ? 1 : 0));
    os << std::fixed << v << suffix;
  };
  if (n >= 1000000) {
    fmt(static_cast<double>(n) / 1e6, "M");
  } else if (n >= 1000) {
    fmt(static_cast<double>(n) / 1e3, "K");
  } else {
    os << n;
  }
  return os.str();
}

struct HeadShape {
  std::uint64_t d_ff{0};
  std::vector<std::uint64_t> heads;  // attention head counts to list
};

// Markdown table of per-user parameter counts and sizes for a family of
// head configurations at a fixed d_model, plus the linear-only row.
inline std::string params_table_markdown(std::uint64_t d_model, const std::vector<HeadShape>& shapes) {
  std::ostringstream os;
  os << "| Model | Hidden Dim | # Attn. Heads | # Params/User | Size/User |\n";
  os << "|---|---|---|---|---|\n";
  const std::uint64_t linear = count_linear_params(d_model);
  os << "| Linear layer only | - | - | " << human_count(linear) << " | "
     << human_size(linear * kBytesPerParam) << " |\n";
  for (const HeadShape& s : shapes) {
    const std::uint64_t params = count_ph_params(d_model, s.d_ff, true);
    for (const std::uint64_t h : s.heads) {
      os << "| PH w/ frozen LM | " << s.d_ff << " | " << h << " | " << human_count(params) << " | "
         << human_size(params * kBytesPerParam) << " |\n";
    }
  }
  return os.str();
}

inline nlohmann::json aggregate_json(const CostModel& m) {
  const AggregateCost full = aggregate_cost(m, FinetuneMode::full_finetune);
  const AggregateCost ph = aggregate_cost(m, FinetuneMode::ph_only);
  nlohmann::json j;
  j["inputs"] = {{"base_params", m.base_params},
                 {"head_params", m.head_params},
                 {"linear_params", m.linear_params},
                 {"n_users", m.n_users}};
  j["full_finetune"] = {{"train_params_total", full.train_params_total},
                        {"stored_params_total", full.stored_params_total},
                        {"stored_bytes_total", full.stored_bytes_total}};
  j["ph_only"] = {{"train_params_total", ph.train_params_total},
                  {"stored_params_total", ph.stored_params_total},
                  {"stored_bytes_total", ph.stored_bytes_total}};
  j["head_smaller_than_base"] = head_smaller_than_base(m.head_params, m.base_params);
  if (ph.stored_params_total > 0) {
    j["stored_ratio_full_over_ph"] =
        static_cast<double>(full.stored_params_total) / static_cast<double>(ph.stored_params_total);
  }
  return j;
}

}  // namespace ph::cost
