#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <vector>

#include "ph/cost_metrics.hpp"
#include "ph/ph_head.hpp"
#include "ph/serialize.hpp"

using ph::Encoding;
using ph::PersonalizationHead;
using ph::PHConfig;
using ph::Tensor;

namespace {

Encoding fake_encoding(std::size_t t, std::size_t d, std::uint64_t seed) {
  Encoding enc;
  enc.hidden = Tensor::zeros({t, d});
  ph::Rng rng(seed);
  for (float& v : enc.hidden.data) v = static_cast<float>(rng.next_double() * 2.0 - 1.0);
  enc.token_ids.assign(t, 5);
  return enc;
}

// double-precision row helpers for the hand-trace oracle
std::vector<double> vec_mat(const std::vector<double>& v, const Tensor& m) {
  std::vector<double> out(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out[j] += v[i] * static_cast<double>(m.at(i, j));
  return out;
}

std::vector<double> add_bias(std::vector<double> v, const Tensor& b) {
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += static_cast<double>(b.data[i]);
  return v;
}

std::vector<double> layer_norm_row(const std::vector<double>& x, const Tensor& g, const Tensor& b) {
  double mu = 0.0;
  for (const double v : x) mu += v;
  mu /= static_cast<double>(x.size());
  double var = 0.0;
  for (const double v : x) var += (v - mu) * (v - mu);
  var /= static_cast<double>(x.size());
  const double inv = 1.0 / std::sqrt(var + 1e-5);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = (x[i] - mu) * inv * static_cast<double>(g.data[i]) + static_cast<double>(b.data[i]);
  }
  return out;
}

}  // namespace

TEST_CASE("head init is deterministic per seed with unit layer-norm gains", "[phhead]") {
  PHConfig cfg;
  cfg.d_model = 16;
  cfg.d_ff = 32;
  cfg.n_heads = 2;
  cfg.seed = 12;
  const PersonalizationHead a = ph::init_head(cfg);
  const PersonalizationHead b = ph::init_head(cfg);
  CHECK(ph::serialize_head(a) == ph::serialize_head(b));

  for (const float v : a.block.ln1_g.data) CHECK(v == 1.0f);
  for (const float v : a.block.ln2_g.data) CHECK(v == 1.0f);
  for (const float v : a.block.ln1_b.data) CHECK(v == 0.0f);
  for (const float v : a.b_out.data) CHECK(v == 0.0f);

  cfg.seed = 13;
  CHECK(ph::serialize_head(ph::init_head(cfg)) != ph::serialize_head(a));
}

TEST_CASE("init weight distribution is centered", "[phhead]") {
  PHConfig cfg;
  cfg.d_model = 64;
  cfg.d_ff = 512;
  cfg.n_heads = 4;
  cfg.seed = 31;
  const PersonalizationHead head = ph::init_head(cfg);
  double sum = 0.0;
  std::size_t n = 0;
  for (const Tensor* w : {&head.block.wq, &head.block.wk, &head.block.wv, &head.block.wo,
                          &head.block.w1, &head.block.w2, &head.w_out}) {
    for (const float v : w->data) {
      sum += v;
      ++n;
    }
  }
  CHECK(std::abs(sum / static_cast<double>(n)) < 0.01);
}

TEST_CASE("init rejects indivisible head counts and bad dropout", "[phhead]") {
  PHConfig cfg;
  cfg.d_model = 10;
  cfg.d_ff = 8;
  cfg.n_heads = 3;
  CHECK_THROWS_AS(ph::init_head(cfg), ph::ConfigError);
  cfg.n_heads = 2;
  cfg.dropout_p = 1.0f;
  CHECK_THROWS_AS(ph::init_head(cfg), ph::ConfigError);
}

TEST_CASE("forward emits two logits for any sequence length", "[phhead]") {
  PHConfig cfg;
  cfg.d_model = 16;
  cfg.d_ff = 24;
  cfg.n_heads = 4;
  cfg.seed = 5;
  const PersonalizationHead head = ph::init_head(cfg);
  for (const std::size_t t : {1, 2, 7, 19}) {
    const auto logits = ph::ph_forward(head, fake_encoding(t, 16, t));
    CHECK(std::isfinite(logits[0]));
    CHECK(std::isfinite(logits[1]));
  }
}

TEST_CASE("eval-mode forward is deterministic", "[phhead]") {
  PHConfig cfg;
  cfg.d_model = 16;
  cfg.d_ff = 24;
  cfg.n_heads = 2;
  cfg.seed = 77;
  cfg.dropout_p = 0.4f;  // must not fire in eval mode
  const PersonalizationHead head = ph::init_head(cfg);
  const Encoding enc = fake_encoding(6, 16, 9);
  const auto a = ph::ph_forward(head, enc);
  const auto b = ph::ph_forward(head, enc);
  CHECK(a == b);
}

TEST_CASE("forward rejects mismatched encoding width", "[phhead]") {
  PHConfig cfg;
  cfg.d_model = 16;
  cfg.d_ff = 8;
  cfg.n_heads = 2;
  const PersonalizationHead head = ph::init_head(cfg);
  CHECK_THROWS_AS(ph::ph_forward(head, fake_encoding(3, 24, 1)), ph::ConfigError);
}

TEST_CASE("single-token single-head forward matches a hand trace", "[phhead]") {
  PHConfig cfg;
  cfg.d_model = 4;
  cfg.d_ff = 6;
  cfg.n_heads = 1;
  cfg.seed = 21;
  const PersonalizationHead head = ph::init_head(cfg);
  const Encoding enc = fake_encoding(1, 4, 3);

  std::vector<double> h(4);
  for (std::size_t i = 0; i < 4; ++i) h[i] = static_cast<double>(enc.hidden.data[i]);

  // softmax over a single key is 1, so attention reduces to the V/O path
  const auto att = add_bias(vec_mat(add_bias(vec_mat(h, head.block.wv), head.block.bv), head.block.wo),
                            head.block.bo);
  std::vector<double> sum1(4);
  for (std::size_t i = 0; i < 4; ++i) sum1[i] = h[i] + att[i];
  const auto h1 = layer_norm_row(sum1, head.block.ln1_g, head.block.ln1_b);

  auto pre = add_bias(vec_mat(h1, head.block.w1), head.block.b1);
  for (double& v : pre) v = std::max(v, 0.0);
  const auto ffn = add_bias(vec_mat(pre, head.block.w2), head.block.b2);
  std::vector<double> sum2(4);
  for (std::size_t i = 0; i < 4; ++i) sum2[i] = h1[i] + ffn[i];
  const auto h2 = layer_norm_row(sum2, head.block.ln2_g, head.block.ln2_b);

  const auto expected = add_bias(vec_mat(h2, head.w_out), head.b_out);
  const auto logits = ph::ph_forward(head, enc);
  CHECK(logits[0] == Catch::Approx(expected[0]).margin(1e-4));
  CHECK(logits[1] == Catch::Approx(expected[1]).margin(1e-4));
}

TEST_CASE("confidence is the softmax True probability", "[phhead]") {
  CHECK(ph::confidence({0.0f, 0.0f}) == Catch::Approx(0.5));
  CHECK(ph::confidence({20.0f, -20.0f}) == Catch::Approx(1.0).margin(1e-9));
  CHECK(ph::confidence({1.0f, 0.0f}) == Catch::Approx(std::exp(1.0) / (std::exp(1.0) + 1.0)).epsilon(1e-6));
  const double p = ph::confidence({3.2f, -0.7f});
  CHECK(p > 0.0);
  CHECK(p < 1.0);
}

TEST_CASE("actual tensor totals equal the counting formula", "[phhead]") {
  for (const auto& [d_model, d_ff, heads] :
       std::vector<std::tuple<std::size_t, std::size_t, std::size_t>>{
           {16, 8, 2}, {16, 64, 4}, {64, 64, 2}, {64, 512, 8}, {32, 2048, 2}}) {
    PHConfig cfg;
    cfg.d_model = d_model;
    cfg.d_ff = d_ff;
    cfg.n_heads = heads;
    const PersonalizationHead head = ph::init_head(cfg);
    CHECK(head.param_count() == ph::cost::count_ph_params(d_model, d_ff, true));
  }
}

TEST_CASE("parameter count is independent of the head count", "[phhead]") {
  for (const std::size_t d_ff : {8, 64, 512}) {
    std::vector<std::size_t> counts;
    for (const std::size_t heads : {2, 4, 8}) {
      PHConfig cfg;
      cfg.d_model = 16;
      cfg.d_ff = d_ff;
      cfg.n_heads = heads;
      counts.push_back(ph::init_head(cfg).param_count());
    }
    CHECK(counts[0] == counts[1]);
    CHECK(counts[1] == counts[2]);
  }
}

TEST_CASE("head files round-trip bitwise and reject corruption", "[phhead]") {
  PHConfig cfg;
  cfg.d_model = 16;
  cfg.d_ff = 32;
  cfg.n_heads = 2;
  cfg.seed = 2;
  const PersonalizationHead head = ph::init_head(cfg);
  const auto dir = std::filesystem::temp_directory_path() / "ph_head_io";
  std::filesystem::create_directories(dir);
  const auto path = dir / "head.piph";

  ph::save_head(path, head);
  const PersonalizationHead loaded = ph::load_head(path);
  CHECK(ph::serialize_head(loaded) == ph::serialize_head(head));

  const Encoding enc = fake_encoding(4, 16, 8);
  CHECK(ph::ph_forward(loaded, enc) == ph::ph_forward(head, enc));

  std::string blob = ph::detail::read_file(path);
  blob[40] = static_cast<char>(blob[40] ^ 0x01);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  }
  CHECK_THROWS_AS(ph::load_head(path), ph::CorruptionError);
}

TEST_CASE("head file size is the f32 payload plus fixed header", "[phhead]") {
  PHConfig cfg;
  cfg.d_model = 64;
  cfg.d_ff = 64;
  cfg.n_heads = 2;
  const PersonalizationHead head = ph::init_head(cfg);
  const std::string blob = ph::serialize_head(head);
  const std::size_t expected = 4 * head.param_count() + ph::kHeadFileOverhead;
  CHECK(blob.size() == expected);
  CHECK(std::abs(static_cast<double>(blob.size()) - 4.0 * static_cast<double>(head.param_count())) /
            (4.0 * static_cast<double>(head.param_count())) <
        0.01);
}
