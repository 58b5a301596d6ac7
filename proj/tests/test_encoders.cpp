#include <doctest.h>

#include <array>
#include <filesystem>
#include <fstream>

#include "fastinject/checkpoint.hpp"
#include "fastinject/ctc.hpp"
#include "fastinject/encoders.hpp"
#include "fastinject/errors.hpp"
#include "oracles.hpp"

using namespace fastinject;

namespace {

ModelConfig tiny_config(int text_factor = 2) {
  ModelConfig cfg;
  cfg.feature_dim = 6;
  cfg.num_phones = 9;
  cfg.vocab_size = 7;
  cfg.acoustic = {1, 8, 12, 2, 2, 0.1};
  cfg.text = {1, 8, 12, 2, text_factor, 0.1};
  return cfg;
}

std::vector<int> random_phones(Rng& rng, int n, int inventory) {
  std::uniform_int_distribution<int> d(0, inventory - 1);
  std::vector<int> out(n);
  for (int& p : out) p = d(rng);
  return out;
}

}  // namespace

TEST_CASE("downsampled length formula") {
  CHECK(downsampled_length(10, 2) == 5);
  CHECK(downsampled_length(8, 4) == 2);
  CHECK(downsampled_length(7, 2) == 4);
  for (int factor : {1, 2, 4}) {
    ModelConfig cfg = tiny_config(factor);
    cfg.acoustic.downsample_factor = factor;
    ModelParams params = init_model(cfg, 1);
    Rng rng(factor);
    for (int t = 1; t <= 64; ++t) {
      const Index expected = (t + factor - 1) / factor;
      CHECK(encode_text(random_phones(rng, t, 9), params, false, nullptr).rows() == expected);
      Tensor feats(oracle::random_matrix(t, 6, rng));
      if (t < factor) {
        CHECK_THROWS_AS(encode_speech(feats, params, false, nullptr), LengthError);
      } else {
        Tensor out = encode_speech(feats, params, false, nullptr);
        CHECK(out.rows() == expected);
        CHECK(out.cols() == 8);
      }
    }
  }
}

TEST_CASE("encoder input validation") {
  ModelParams params = init_model(tiny_config(), 2);
  CHECK_THROWS_AS(encode_text(std::vector<int>{}, params, false, nullptr), LengthError);
  CHECK_THROWS_AS(encode_speech(Tensor(Matrix::Zero(5, 4)), params, false, nullptr),
                  DimensionError);
  CHECK_THROWS_AS(classify(Tensor(Matrix::Zero(3, 5)), params), DimensionError);
  CHECK_THROWS_AS(encode_text(std::vector<int>{1, 99}, params, false, nullptr), RangeError);

  ModelConfig bad = tiny_config();
  bad.acoustic.downsample_factor = 3;
  CHECK_THROWS_AS(init_model(bad, 1), ConfigError);
  bad = tiny_config();
  bad.text.num_heads = 3;
  CHECK_THROWS_AS(init_model(bad, 1), ConfigError);

  ModelConfig speech_only = tiny_config();
  speech_only.text_branch = false;
  ModelParams sp = init_model(speech_only, 2);
  CHECK_FALSE(sp.store.contains("emb"));
  CHECK_THROWS_AS(encode_text(std::vector<int>{1, 2}, sp, false, nullptr), UsageError);
}

TEST_CASE("self-attention rows are convex combinations") {
  ModelParams params = init_model(tiny_config(), 3);
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x(oracle::random_matrix(1 + trial % 9, 8, rng));
    for (int head = 0; head < 2; ++head) {
      for (bool causal : {false, true}) {
        Matrix w = attention_weights(x, params.store, "ac.layer0", 2, head, causal).value();
        CHECK((w.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
        CHECK(w.minCoeff() >= 0.0);
      }
    }
  }
}

TEST_CASE("eval mode is deterministic, train mode applies dropout") {
  ModelParams params = init_model(tiny_config(), 4);
  Rng rng(4);
  Tensor feats(oracle::random_matrix(12, 6, rng));
  const auto phones = random_phones(rng, 10, 9);
  CHECK(encode_speech(feats, params, false, nullptr).value() ==
        encode_speech(feats, params, false, nullptr).value());
  CHECK(encode_text(phones, params, false, nullptr).value() ==
        encode_text(phones, params, false, nullptr).value());
  Rng a(9), b(9);
  Matrix ta = encode_speech(feats, params, true, &a).value();
  CHECK(ta == encode_speech(feats, params, true, &b).value());
  CHECK(ta != encode_speech(feats, params, false, nullptr).value());
}

TEST_CASE("zero weights propagate biases only") {
  ModelParams params = init_model(tiny_config(), 5);
  for (auto& [_, t] : params.store.entries()) t.mutable_value().setZero();
  Rng rng(5);
  Matrix logits = classify(encode_speech(Tensor(oracle::random_matrix(9, 6, rng)), params, false,
                                         nullptr),
                           params)
                      .value();
  CHECK(logits.isZero(0.0));
  Matrix probs = softmax_rows(Tensor(logits)).value();
  CHECK((probs.array() - 1.0 / 7.0).abs().maxCoeff() < 1e-15);

  params.store.get("cls.b").mutable_value().setConstant(0.5);
  logits = classify(Tensor(Matrix::Random(4, 8)), params).value();
  CHECK((logits.array() - 0.5).abs().maxCoeff() == 0.0);
}

TEST_CASE("classifier identity and embedding lookup") {
  ModelConfig cfg = tiny_config();
  cfg.vocab_size = 8;
  ModelParams params = init_model(cfg, 6);
  params.store.get("cls.w").mutable_value().setIdentity();
  params.store.get("cls.b").mutable_value().setZero();
  Rng rng(6);
  Matrix h = oracle::random_matrix(5, 8, rng);
  CHECK(classify(Tensor(h), params).value() == h);

  Matrix table = Matrix::Zero(9, 8);
  for (Index i = 0; i < 8; ++i) table(i, i) = 1.0;
  const std::vector<int> ids{3, 0, 7};
  Matrix rows = embedding(Tensor(table), ids).value();
  for (Index r = 0; r < 3; ++r) CHECK(rows.row(r) == table.row(ids[r]));
}

TEST_CASE("one classifier serves speech and text branches") {
  ModelParams params = init_model(tiny_config(), 7);
  Rng rng(7);
  Tensor feats(oracle::random_matrix(12, 6, rng));
  const auto paired = random_phones(rng, 14, 9), unpaired = random_phones(rng, 10, 9);
  auto logits = [&] {
    return std::array<Matrix, 3>{
        classify(encode_speech(feats, params, false, nullptr), params).value(),
        classify(encode_text(paired, params, false, nullptr), params).value(),
        classify(encode_text(unpaired, params, false, nullptr), params).value()};
  };
  const auto before = logits();
  Tensor& w = params.store.get("cls.w");
  w.mutable_value()(0, 1) += 0.5;
  const auto after = logits();
  for (int i = 0; i < 3; ++i) CHECK((after[i] - before[i]).col(1).norm() > 1e-6);

  // Gradients from the speech loss and the text loss land in the same tensor.
  const CtcTarget target{{1, 2, 3}, 0};
  params.store.zero_grad();
  backward(ctc_loss(classify(encode_speech(feats, params, false, nullptr), params), target));
  const Matrix g_speech = w.grad();
  backward(ctc_loss(classify(encode_text(unpaired, params, false, nullptr), params), target));
  const Matrix g_both = w.grad();
  params.store.zero_grad();
  backward(ctc_loss(classify(encode_text(unpaired, params, false, nullptr), params), target));
  const Matrix g_text = w.grad();
  CHECK(g_speech.norm() > 0.0);
  CHECK(g_text.norm() > 0.0);
  CHECK((g_both - g_speech - g_text).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("initialization streams are independent per group") {
  ModelConfig with_text = tiny_config();
  ModelConfig without = tiny_config();
  without.text_branch = false;
  ModelParams a = init_model(with_text, 8), b = init_model(without, 8);
  for (const auto& [name, t] : b.store.entries()) CHECK(a.store.get(name).value() == t.value());
  CHECK(a.store.get("emb").rows() == with_text.num_phones);
}

TEST_CASE("checkpoint round trip preserves names, shapes and values") {
  ModelParams params = init_model(tiny_config(), 9);
  const auto path = std::filesystem::temp_directory_path() / "fastinject_enc_test.ckpt";
  save_checkpoint(path, params.store, {{"kind", "asr"}, {"note", "tab\tand space"}});
  Checkpoint back = load_checkpoint(path);
  CHECK(back.manifest.at("note") == "tab\tand space");
  REQUIRE(back.params.size() == params.store.size());
  for (std::size_t i = 0; i < back.params.size(); ++i) {
    CHECK(back.params.entries()[i].first == params.store.entries()[i].first);
    CHECK(back.params.entries()[i].second.value() == params.store.entries()[i].second.value());
  }
  {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os << "NOTACKPT";
  }
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
}
