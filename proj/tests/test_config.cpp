#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fastinject/config.hpp"
#include "fastinject/errors.hpp"

using namespace fastinject;
using nlohmann::json;

TEST_CASE("default config is valid and round trips") {
  ExperimentConfig c;
  CHECK_NOTHROW(c.validate());
  const json j = config_to_json(c);
  CHECK(config_to_json(config_from_json(j)) == j);
}

TEST_CASE("config overrides only the keys given") {
  const auto c = config_from_json(json::parse(R"({
    "train": {"alpha": 0.25, "adam": {"peak_lr": 0.002}, "enable_am3": false},
    "model": {"acoustic": {"num_layers": 3}},
    "compare": {"seeds": [7, 8], "systems": ["baseline"], "lm_systems": []}
  })"));
  const ExperimentConfig d;
  CHECK(c.train.alpha == 0.25);
  CHECK(c.train.adam.peak_lr == 0.002);
  CHECK(c.train.adam.warmup_steps == d.train.adam.warmup_steps);
  CHECK(!c.train.enable_am3);
  CHECK(c.model.acoustic.num_layers == 3);
  CHECK(c.model.text.num_layers == d.model.text.num_layers);
  CHECK(c.compare.seeds == std::vector<std::uint64_t>{7, 8});
  CHECK(c.compare.lm_systems.empty());
}

TEST_CASE("config rejects unknown keys and wrong types") {
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"trian": {}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"train": {"aplha": 1}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"train": {"adam": {"lr": 1}}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"train": {"epochs": 2.5}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"train": {"enable_am3": 1}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"synth": {"seed": -1}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"compare": {"seeds": "1"}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse("[1]")), ConfigError);
}

TEST_CASE("cross-section consistency") {
  ExperimentConfig c;
  c.synth.feature_dim = 12;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ExperimentConfig{};
  c.synth.vocab_words = 150;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ExperimentConfig{};
  c.compare.systems = {"baseline", "mystery"};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ExperimentConfig{};
  c.decode.beam = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("seed propagates to every seeded section") {
  ExperimentConfig c;
  c.set_seed(42);
  CHECK(c.synth.seed == 42);
  CHECK(c.upsample.seed == 42);
  CHECK(c.train.seed == 42);
  CHECK(c.lm.seed == 42);
}

TEST_CASE("config files and model checkpoints") {
  const auto dir = std::filesystem::temp_directory_path() / "fastinject_cfg";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "bad.json") << "{ not json";
  CHECK_THROWS_AS(load_config(dir / "bad.json"), ConfigError);
  CHECK_THROWS_AS(load_config(dir / "absent.json"), ConfigError);
  std::ofstream(dir / "ok.json") << R"({"train": {"epochs": 3}})";
  CHECK(load_config(dir / "ok.json").train.epochs == 3);

  ModelConfig m;
  m.text_branch = false;
  m.acoustic.num_layers = 1;
  const ModelParams model = init_model(m, 5);
  save_model(dir / "m.ckpt", model);
  const ModelParams back = load_model(dir / "m.ckpt");
  CHECK(!back.config.text_branch);
  CHECK(back.config.acoustic.num_layers == 1);
  REQUIRE(back.store.size() == model.store.size());
  for (const auto& [name, t] : model.store.entries()) CHECK(back.store.get(name).value() == t.value());
}
