#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ph/registry.hpp"
#include "ph/serialize.hpp"

using ph::BaseConfig;
using ph::BaseLM;
using ph::PersonalizationHead;
using ph::PHConfig;
using ph::Registry;

namespace {

namespace fs = std::filesystem;

BaseLM registry_base() {
  const std::vector<std::string> words = {
      "music weather alarm lights joke play tell turn set what",
      "jazz rain kitchen funny seven bright warm thing sample probe",
  };
  BaseConfig cfg;
  cfg.d_model = 32;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_ff_base = 64;
  cfg.max_seq_len = 32;
  BaseLM base = ph::init_base_lm<float>(ph::Vocab::build(words), cfg, 1234);
  ph::freeze(base);
  return base;
}

PersonalizationHead make_head(std::uint64_t seed, std::size_t d_model = 32) {
  PHConfig cfg;
  cfg.d_model = d_model;
  cfg.d_ff = 16;
  cfg.n_heads = 2;
  cfg.seed = seed;
  return ph::init_head(cfg);
}

fs::path fresh_root(const std::string& name) {
  const fs::path root = fs::temp_directory_path() / "ph_registry_tests" / name;
  fs::remove_all(root);
  return root;
}

}  // namespace

TEST_CASE("puts assign monotonically increasing versions, latest wins", "[registry]") {
  Registry reg = Registry::create(fresh_root("versions"), registry_base());

  const PersonalizationHead h1 = make_head(1);
  const PersonalizationHead h2 = make_head(2);
  CHECK(reg.put_head("alice", h1) == 1);
  CHECK(reg.put_head("alice", h2) == 2);
  CHECK(reg.versions("alice") == std::vector<std::uint32_t>{1, 2});

  CHECK(ph::serialize_head(reg.get_head("alice")) == ph::serialize_head(h2));
  CHECK(ph::serialize_head(reg.get_head("alice", 1)) == ph::serialize_head(h1));
}

TEST_CASE("round-trip through the registry preserves weights and predictions", "[registry]") {
  Registry reg = Registry::create(fresh_root("roundtrip"), registry_base());
  const PersonalizationHead head = make_head(7);
  reg.put_head("bob", head);
  const PersonalizationHead loaded = reg.get_head("bob");
  CHECK(ph::serialize_head(loaded) == ph::serialize_head(head));

  ph::EncodingCache cache(reg.base());
  const auto conf_stored = ph::head_confidence_fn(cache, loaded);
  const auto conf_orig = ph::head_confidence_fn(cache, head);
  ph::Rng rng(55);
  const std::vector<std::string> words = {"music", "weather", "jazz", "rain", "funny", "bright"};
  for (int i = 0; i < 100; ++i) {
    std::string text;
    for (int w = 0; w < 3; ++w) text += words[rng.below(words.size())] + " ";
    const std::string cls = words[rng.below(words.size())];
    CHECK(conf_stored(cls, text) == conf_orig(cls, text));
  }
}

TEST_CASE("missing users and corrupted files are reported, never served", "[registry]") {
  const fs::path root = fresh_root("corrupt");
  Registry reg = Registry::create(root, registry_base());
  CHECK_THROWS_AS(reg.get_head("nobody"), ph::NotFoundError);
  CHECK_THROWS_AS(reg.serve_predict("nobody", "text", {"music"}), ph::NotFoundError);

  reg.put_head("carol", make_head(3));
  const fs::path head_path = root / "users" / "carol" / "v1.piph";
  std::string blob = ph::detail::read_file(head_path);
  blob[blob.size() / 3] = static_cast<char>(blob[blob.size() / 3] ^ 0x10);
  {
    std::ofstream out(head_path, std::ios::binary | std::ios::trunc);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  }
  CHECK_THROWS_AS(reg.get_head("carol"), ph::CorruptionError);
  CHECK_THROWS_AS(reg.serve_predict("carol", "text", {"music"}), ph::CorruptionError);
}

TEST_CASE("user ids outside the safe charset are rejected", "[registry]") {
  Registry reg = Registry::create(fresh_root("charset"), registry_base());
  const PersonalizationHead head = make_head(4);
  CHECK_THROWS_AS(reg.put_head("", head), ph::ValidationError);
  CHECK_THROWS_AS(reg.put_head("a/b", head), ph::ValidationError);
  CHECK_THROWS_AS(reg.put_head("..", head), ph::ValidationError);
  CHECK_THROWS_AS(reg.put_head("sp ace", head), ph::ValidationError);
  CHECK(reg.put_head("A-ok_1.2", head) == 1);
}

TEST_CASE("put_head rejects heads built for another base width", "[registry]") {
  Registry reg = Registry::create(fresh_root("width"), registry_base());
  CHECK_THROWS_AS(reg.put_head("dave", make_head(5, 64)), ph::ConfigError);
}

TEST_CASE("serve_predict is deterministic and covers the class list", "[registry]") {
  Registry reg = Registry::create(fresh_root("serve"), registry_base());
  reg.put_head("erin", make_head(6));

  const std::vector<std::string> classes = {"music", "weather", "alarm"};
  const auto a = reg.serve_predict("erin", "jazz bright thing", classes);
  const auto b = reg.serve_predict("erin", "jazz bright thing", classes);
  CHECK(a.class_name == b.class_name);
  CHECK(a.confidence == b.confidence);
  CHECK(a.ranking.size() == classes.size());

  CHECK(reg.serve_predict("erin", "anything", {"only_class"}).class_name == "only_class");
}

TEST_CASE("different users' heads can disagree on the same input", "[registry]") {
  Registry reg = Registry::create(fresh_root("two_users"), registry_base());
  reg.put_head("u1", make_head(100));
  reg.put_head("u2", make_head(200));

  const std::vector<std::string> classes = {"music", "weather", "alarm", "lights", "joke"};
  ph::Rng rng(9);
  const std::vector<std::string> words = {"jazz", "rain", "kitchen", "funny", "seven", "warm"};
  bool diverged = false;
  for (int i = 0; i < 20 && !diverged; ++i) {
    std::string text;
    for (int w = 0; w < 3; ++w) text += words[rng.below(words.size())] + " ";
    diverged = reg.serve_predict("u1", text, classes).class_name !=
               reg.serve_predict("u2", text, classes).class_name;
  }
  CHECK(diverged);
}

TEST_CASE("stats sum on-disk sizes against the f32 storage contract", "[registry]") {
  const fs::path root = fresh_root("stats");
  Registry reg = Registry::create(root, registry_base());

  const auto empty = reg.stats();
  CHECK(empty.n_users == 0);
  CHECK(empty.total_head_bytes == 0);
  CHECK(empty.base_bytes == fs::file_size(root / "base.pibm"));

  for (const char* user : {"u1", "u2", "u3"}) reg.put_head(user, make_head(11));
  const auto s = reg.stats();
  CHECK(s.n_users == 3);

  const std::uint64_t params = make_head(11).param_count();
  CHECK(s.total_head_bytes == 3 * (4 * params + ph::kHeadFileOverhead));
  for (const auto& [user, bytes] : s.bytes_per_user) {
    const double ratio = static_cast<double>(bytes) / (4.0 * static_cast<double>(params));
    CHECK(ratio < 1.01);
    CHECK(ratio > 0.99);
  }

  // exactly one base model regardless of user count
  std::size_t base_files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.path().extension() == ".pibm") ++base_files;
  }
  CHECK(base_files == 1);
}

TEST_CASE("interrupted writes leave previous versions retrievable", "[registry]") {
  const fs::path root = fresh_root("crash");
  const PersonalizationHead h1 = make_head(21);
  {
    Registry reg = Registry::create(root, registry_base());
    reg.put_head("frank", h1);
  }
  // simulate a put that died before rename
  {
    std::ofstream partial(root / "users" / "frank" / ".tmp-v2.piph", std::ios::binary);
    partial << "partial garbage";
  }

  Registry reopened = Registry::open(root);
  CHECK(reopened.versions("frank") == std::vector<std::uint32_t>{1});
  CHECK(ph::serialize_head(reopened.get_head("frank")) == ph::serialize_head(h1));

  // the rebuilt index.json cache agrees with the disk scan
  std::ifstream in(root / "index.json");
  const auto index = nlohmann::json::parse(in);
  CHECK(index["users"]["frank"]["latest"] == 1);
  CHECK(index["users"]["frank"]["versions"] == nlohmann::json::array({1}));
}

TEST_CASE("open requires a base model", "[registry]") {
  CHECK_THROWS_AS(Registry::open(fresh_root("nobase")), ph::NotFoundError);
}
