#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "ph/base_lm.hpp"
#include "ph/serialize.hpp"
#include "ph/sgd.hpp"
#include "ph/tokenizer.hpp"

using ph::BaseConfig;
using ph::BaseLM;
using ph::PretrainConfig;
using ph::Vocab;

namespace {

std::vector<std::string> tiny_corpus() {
  return {
      "play some jazz music now",      "play a rock song for me",
      "what is the weather in oslo",   "will it rain in paris today",
      "set an alarm for seven am",     "wake me up at six am",
      "book a table for two tonight",  "send a message to alice",
      "turn on the kitchen lights",    "tell me a funny joke",
      "play the new pop playlist",     "what is the forecast for tokyo",
  };
}

// Small synthetic corpus with reused words so masked prediction is learnable.
std::vector<std::string> synthetic_corpus(std::size_t n) {
  const std::vector<std::string> subjects = {"the cat", "a dog", "the bird", "my friend", "the robot"};
  const std::vector<std::string> verbs = {"likes", "sees", "finds", "wants", "follows"};
  const std::vector<std::string> objects = {"the ball", "a song", "the house", "fresh food", "the garden"};
  ph::Rng rng(12345);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(subjects[rng.below(subjects.size())] + " " + verbs[rng.below(verbs.size())] + " " +
                  objects[rng.below(objects.size())]);
  }
  return out;
}

const ph::PretrainResult& trained_tiny_model() {
  static const ph::PretrainResult result = [] {
    PretrainConfig cfg;
    cfg.model = BaseConfig{16, 1, 2, 32, 32};
    cfg.epochs = 5;
    cfg.lr = 0.1f;
    cfg.seed = 7;
    return ph::pretrain_mlm(tiny_corpus(), cfg);
  }();
  return result;
}

}  // namespace

TEST_CASE("tokenize splits on whitespace and punctuation, lowercases, maps OOV to UNK", "[baselm]") {
  Vocab vocab = Vocab::build({"play music loud, please"});
  CHECK(ph::tokenize("Play Music", vocab) == std::vector<int>{vocab.id("play"), vocab.id("music")});
  CHECK(ph::tokenize("", vocab).empty());
  CHECK(ph::tokenize("zxqv", vocab) == std::vector<int>{Vocab::kUnk});
  CHECK(ph::tokenize("music,loud", vocab) ==
        std::vector<int>{vocab.id("music"), vocab.id(","), vocab.id("loud")});
}

TEST_CASE("vocab reserves fixed special ids", "[baselm]") {
  Vocab vocab = Vocab::build({"alpha beta"});
  CHECK(vocab.id("[PAD]") == 0);
  CHECK(vocab.id("[UNK]") == 1);
  CHECK(vocab.id("[CLS]") == 2);
  CHECK(vocab.id("[SEP]") == 3);
  CHECK(vocab.id("[MASK]") == 4);
  // ids dense in [0, size)
  for (int i = 0; i < vocab.size(); ++i) CHECK(vocab.id(vocab.token(i)) == i);
}

TEST_CASE("encode emits [T, d_model] hidden states deterministically", "[baselm]") {
  const BaseLM& model = trained_tiny_model().model;
  const std::vector<int> ids = {Vocab::kCls, model.vocab.id("play"), model.vocab.id("music")};

  const ph::Encoding enc = ph::encode(model, ids);
  CHECK(enc.hidden.shape == std::vector<std::size_t>{3, 16});
  CHECK_FALSE(enc.truncated);
  CHECK(enc.hidden.all_finite());

  const ph::Encoding enc2 = ph::encode(model, ids);
  CHECK(enc.hidden.data == enc2.hidden.data);
}

TEST_CASE("encode is position sensitive", "[baselm]") {
  const BaseLM& model = trained_tiny_model().model;
  const int a = model.vocab.id("play"), b = model.vocab.id("music");
  const ph::Encoding ab = ph::encode(model, {Vocab::kCls, a, b});
  const ph::Encoding ba = ph::encode(model, {Vocab::kCls, b, a});
  CHECK(ab.hidden.data != ba.hidden.data);
}

TEST_CASE("encode truncates over-long sequences and flags it", "[baselm]") {
  const BaseLM& model = trained_tiny_model().model;
  std::vector<int> ids(model.config.max_seq_len + 10, model.vocab.id("play"));
  ids[0] = Vocab::kCls;
  const ph::Encoding enc = ph::encode(model, ids);
  CHECK(enc.truncated);
  CHECK(enc.hidden.rows() == model.config.max_seq_len);
  CHECK(enc.token_ids.size() == model.config.max_seq_len);
}

TEST_CASE("untrained masked loss equals ln|V|", "[baselm]") {
  PretrainConfig cfg;
  cfg.model = BaseConfig{16, 1, 2, 32, 32};
  cfg.mask_prob = 1e-9;  // the at-least-one-mask floor still applies
  cfg.epochs = 1;
  cfg.seed = 3;
  const auto result = ph::pretrain_mlm({"one two three four five six seven eight nine ten"}, cfg);
  const double expected = std::log(static_cast<double>(result.model.vocab.size()));
  CHECK(result.initial_loss == Catch::Approx(expected).epsilon(1e-4));
}

TEST_CASE("masked pretraining halves the loss on a synthetic corpus", "[baselm][slow]") {
  PretrainConfig cfg;
  cfg.model = BaseConfig{32, 1, 2, 64, 32};
  cfg.epochs = 30;
  cfg.lr = 0.1f;
  cfg.seed = 11;
  const auto result = ph::pretrain_mlm(synthetic_corpus(200), cfg);
  REQUIRE(result.epoch_losses.size() == 30);
  CHECK(result.epoch_losses.back() < 0.5 * result.initial_loss);
  CHECK(result.epoch_losses.back() < result.initial_loss);
}

TEST_CASE("pretraining is deterministic per seed", "[baselm]") {
  PretrainConfig cfg;
  cfg.model = BaseConfig{16, 1, 2, 32, 32};
  cfg.epochs = 2;
  cfg.seed = 99;
  auto a = ph::pretrain_mlm(tiny_corpus(), cfg);
  auto b = ph::pretrain_mlm(tiny_corpus(), cfg);
  ph::freeze(a.model);
  ph::freeze(b.model);
  CHECK(a.model.weights_checksum == b.model.weights_checksum);
  CHECK(ph::serialize_base(a.model) == ph::serialize_base(b.model));
}

TEST_CASE("too-small corpus is rejected", "[baselm]") {
  PretrainConfig cfg;
  cfg.model = BaseConfig{16, 1, 2, 32, 32};
  CHECK_THROWS_AS(ph::pretrain_mlm({"a b a b"}, cfg), ph::DataError);
  CHECK_THROWS_AS(ph::pretrain_mlm({}, cfg), ph::DataError);
}

TEST_CASE("freeze is idempotent and blocks optimizer registration", "[baselm]") {
  PretrainConfig cfg;
  cfg.model = BaseConfig{16, 1, 2, 32, 32};
  cfg.epochs = 1;
  cfg.seed = 5;
  auto result = ph::pretrain_mlm(tiny_corpus(), cfg);
  BaseLM& model = result.model;

  ph::freeze(model);
  const std::uint64_t digest = model.weights_checksum;
  CHECK(model.frozen);

  ph::freeze(model);
  CHECK(model.weights_checksum == digest);

  ph::Sgd opt(0.02f);
  CHECK_THROWS_AS(opt.add_param(model.tok_emb), ph::FrozenParameterError);
}

TEST_CASE("base model round-trips through its binary format", "[baselm]") {
  auto result = trained_tiny_model();
  ph::freeze(result.model);
  const auto dir = std::filesystem::temp_directory_path() / "ph_base_roundtrip";
  std::filesystem::create_directories(dir);
  const auto path = dir / "base.pibm";

  ph::save_base(path, result.model);
  const BaseLM loaded = ph::load_base(path);

  CHECK(loaded.frozen);
  CHECK(loaded.weights_checksum == result.model.weights_checksum);
  CHECK(ph::serialize_base(loaded) == ph::serialize_base(result.model));

  const std::vector<int> ids = {Vocab::kCls, loaded.vocab.id("music"), loaded.vocab.id("play")};
  CHECK(ph::encode(loaded, ids).hidden.data == ph::encode(result.model, ids).hidden.data);
}

TEST_CASE("corrupted base files are rejected by CRC", "[baselm]") {
  auto result = trained_tiny_model();
  const auto dir = std::filesystem::temp_directory_path() / "ph_base_corrupt";
  std::filesystem::create_directories(dir);
  const auto path = dir / "base.pibm";
  ph::save_base(path, result.model);

  std::string blob = ph::detail::read_file(path);
  blob[blob.size() / 2] = static_cast<char>(blob[blob.size() / 2] ^ 0x40);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  }
  CHECK_THROWS_AS(ph::load_base(path), ph::CorruptionError);
}
