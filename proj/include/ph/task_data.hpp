#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ph/errors.hpp"
#include "ph/rng.hpp"
#include "ph/tokenizer.hpp"

namespace ph {

struct LabeledExample {
  std::string text;
  std::string class_name;
};

// One (label, text) -> True/False query of the binary formulation.
struct BinaryTaskExample {
  std::string label_text;
  std::string input_text;
  bool target{true};
};

struct Dataset {
  std::string name;
  std::vector<std::string> classes;  // fixed order; drives tie-breaking
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> test;

  const std::vector<LabeledExample>& split(bool train_split) const { return train_split ? train : test; }
};

// Class identifiers are rendered as natural-language label text: lowercase
// with underscores as spaces, so the label carries lexical signal.
inline std::string verbalize_label(const std::string& class_name) {
  std::string out;
  out.reserve(class_name.size());
  for (const char ch : class_name) {
    const unsigned char u = static_cast<unsigned char>(ch);
    out.push_back(u == '_' ? ' ' : static_cast<char>(u < 0x80 ? std::tolower(u) : u));
  }
  return out;
}

// [CLS] label_tokens [SEP] text_tokens
inline std::vector<int> pair_token_ids(const std::string& label_text, const std::string& input_text,
                                       const Vocab& vocab) {
  std::vector<int> ids{Vocab::kCls};
  for (const int id : tokenize(label_text, vocab)) ids.push_back(id);
  ids.push_back(Vocab::kSep);
  for (const int id : tokenize(input_text, vocab)) ids.push_back(id);
  return ids;
}

// JSONL dataset format: one JSON object per line with string fields "text"
// and "label" and an optional "split" of "train" (default) or "test".
// An optional first line {"classes": [...], "name": ...} pins the class
// order; without it, classes are the sorted unique labels.
inline Dataset load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path.string());

  Dataset ds;
  ds.name = path.stem().string();
  bool have_header = false;
  bool first_content_line = true;
  std::size_t line_no = 0;
  std::string line;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;

    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
    }
    if (!obj.is_object()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected a JSON object");
    }

    if (first_content_line && obj.contains("classes")) {
      if (!obj["classes"].is_array()) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": \"classes\" must be an array");
      }
      for (const auto& c : obj["classes"]) {
        if (!c.is_string()) {
          throw DataError(path.string() + ":" + std::to_string(line_no) + ": class names must be strings");
        }
        ds.classes.push_back(c.get<std::string>());
      }
      if (obj.contains("name") && obj["name"].is_string()) ds.name = obj["name"].get<std::string>();
      have_header = true;
      first_content_line = false;
      continue;
    }
    first_content_line = false;

    if (!obj.contains("text") || !obj["text"].is_string() || !obj.contains("label") ||
        !obj["label"].is_string()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": each example needs string fields \"text\" and \"label\"");
    }
    LabeledExample ex{obj["text"].get<std::string>(), obj["label"].get<std::string>()};
    if (ex.class_name.empty()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": empty label");
    }

    bool is_test = false;
    if (obj.contains("split")) {
      if (!obj["split"].is_string()) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": \"split\" must be a string");
      }
      const std::string split = obj["split"].get<std::string>();
      if (split == "test") {
        is_test = true;
      } else if (split != "train") {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": unknown split \"" + split + "\"");
      }
    }
    (is_test ? ds.test : ds.train).push_back(std::move(ex));
  }

  if (ds.train.empty() && ds.test.empty() && !have_header) {
    throw DataError(path.string() + ": no examples and no class header (empty dataset)");
  }

  if (!have_header) {
    std::set<std::string> unique;
    for (const auto& ex : ds.train) unique.insert(ex.class_name);
    for (const auto& ex : ds.test) unique.insert(ex.class_name);
    ds.classes.assign(unique.begin(), unique.end());
  } else {
    const std::set<std::string> declared(ds.classes.begin(), ds.classes.end());
    for (const auto* split : {&ds.train, &ds.test}) {
      for (const auto& ex : *split) {
        if (declared.find(ex.class_name) == declared.end()) {
          throw DataError(path.string() + ": label \"" + ex.class_name +
                          "\" not in the declared class set");
        }
      }
    }
  }
  return ds;
}

inline void save_jsonl(const std::filesystem::path& path, const Dataset& ds) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write dataset " + path.string());
  nlohmann::json header;
  header["classes"] = ds.classes;
  header["name"] = ds.name;
  out << header.dump() << "\n";
  const auto emit = [&out](const LabeledExample& ex, const char* split) {
    nlohmann::json obj;
    obj["text"] = ex.text;
    obj["label"] = ex.class_name;
    obj["split"] = split;
    out << obj.dump() << "\n";
  };
  for (const auto& ex : ds.train) emit(ex, "train");
  for (const auto& ex : ds.test) emit(ex, "test");
  if (!out) throw IoError("write failed for " + path.string());
}

// True-only pair construction, optionally extended with sampled negatives.
// negatives_per_example = 0 reproduces the pure True-pair protocol where
// |pairs| == |examples| instead of |examples| x |classes|.
inline std::vector<BinaryTaskExample> make_binary_pairs(const Dataset& ds,
                                                        std::size_t negatives_per_example,
                                                        std::uint64_t seed) {
  if (ds.classes.empty()) throw DataError("dataset has no classes");
  if (negatives_per_example >= ds.classes.size()) {
    throw ConfigError("negatives_per_example " + std::to_string(negatives_per_example) +
                      " must be < number of classes " + std::to_string(ds.classes.size()));
  }
  Rng rng(Rng::mix(seed, 0x9A125));
  std::vector<BinaryTaskExample> pairs;
  pairs.reserve(ds.train.size() * (1 + negatives_per_example));
  for (const LabeledExample& ex : ds.train) {
    pairs.push_back({verbalize_label(ex.class_name), ex.text, true});
    if (negatives_per_example == 0) continue;
    std::vector<std::string> others;
    others.reserve(ds.classes.size() - 1);
    for (const std::string& c : ds.classes) {
      if (c != ex.class_name) others.push_back(c);
    }
    // partial Fisher-Yates: first `negatives_per_example` entries are a
    // uniform sample without replacement
    for (std::size_t i = 0; i < negatives_per_example; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(others.size() - i));
      std::swap(others[i], others[j]);
      pairs.push_back({verbalize_label(others[i]), ex.text, false});
    }
  }
  rng.shuffle(pairs);
  return pairs;
}

// Exactly k seeded samples per class, without replacement. Nested: the
// selection for k is a prefix of the selection for any larger k at the same
// seed, so growing a training set keeps all previously chosen examples.
inline Dataset subsample_per_class(const Dataset& ds, bool train_split, std::size_t k,
                                   std::uint64_t seed) {
  const std::vector<LabeledExample>& pool = ds.split(train_split);
  std::vector<std::size_t> keep;
  for (std::size_t ci = 0; ci < ds.classes.size(); ++ci) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (pool[i].class_name == ds.classes[ci]) members.push_back(i);
    }
    if (members.size() < k) {
      throw DataError("class \"" + ds.classes[ci] + "\" has " + std::to_string(members.size()) +
                      " examples, fewer than requested " + std::to_string(k));
    }
    Rng rng(Rng::mix(seed, ci));
    rng.shuffle(members);
    keep.insert(keep.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(k));
  }
  std::sort(keep.begin(), keep.end());

  Dataset out;
  out.name = ds.name;
  out.classes = ds.classes;
  std::vector<LabeledExample>& target = train_split ? out.train : out.test;
  for (const std::size_t i : keep) target.push_back(pool[i]);
  const std::vector<LabeledExample>& other = train_split ? ds.test : ds.train;
  (train_split ? out.test : out.train) = other;
  return out;
}

using ConfidenceFn = std::function<double(const std::string& class_name, const std::string& text)>;

struct Prediction {
  std::string class_name;
  double confidence{0.0};
  std::vector<std::pair<std::string, double>> ranking;  // confidence-descending
};

// Evaluates the per-class confidence for every class (exactly once each) and
// returns the argmax of P(True). Exact ties go to the earliest class in the
// dataset's fixed class order; the stable sort gives the ranking the same
// tie behavior.
inline Prediction predict_class(const ConfidenceFn& confidence_of, const std::string& text,
                                const std::vector<std::string>& classes) {
  if (classes.empty()) throw DataError("predict_class needs a nonempty class list");
  Prediction pred;
  pred.ranking.reserve(classes.size());
  std::size_t best = 0;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const double c = confidence_of(classes[i], text);
    pred.ranking.emplace_back(classes[i], c);
    if (c > pred.ranking[best].second) best = i;
  }
  pred.class_name = classes[best];
  pred.confidence = pred.ranking[best].second;
  std::stable_sort(pred.ranking.begin(), pred.ranking.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return pred;
}

}  // namespace ph
