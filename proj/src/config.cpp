#include "fastinject/config.hpp"

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "fastinject/checkpoint.hpp"
#include "fastinject/errors.hpp"

namespace fastinject {

namespace {

using nlohmann::json;

// Reads keys of one JSON object, remembering which were consumed so that
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(&j), path_(std::move(path)) {
    if (!j.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  void read(const char* key, int& out) { read_with(key, out, [&](const json& v) { return v.is_number_integer(); }, "an integer"); }
  void read(const char* key, double& out) { read_with(key, out, [&](const json& v) { return v.is_number(); }, "a number"); }
  void read(const char* key, bool& out) { read_with(key, out, [&](const json& v) { return v.is_boolean(); }, "a boolean"); }
  void read(const char* key, std::uint64_t& out) {
    read_with(key, out, [&](const json& v) { return v.is_number_unsigned(); }, "a non-negative integer");
  }
  void read(const char* key, std::vector<std::uint64_t>& out) {
    read_list(key, out, [](const json& v) { return v.is_number_unsigned(); }, "non-negative integers");
  }
  void read(const char* key, std::vector<std::string>& out) {
    read_list(key, out, [](const json& v) { return v.is_string(); }, "strings");
  }

  // Nested object; absent means keep defaults.
  template <class F>
  void sub(const char* key, F&& fill) {
    const json* v = take(key);
    if (!v) return;
    Section s(*v, path_ + "." + key);
    fill(s);
    s.finish();
  }

  void finish() const {
    for (const auto& [k, _] : j_->items()) {
      if (!seen_.count(k)) throw ConfigError(path_ + ": unknown key '" + k + "'");
    }
  }

 private:
  const json* take(const char* key) {
    seen_.insert(key);
    auto it = j_->find(key);
    return it == j_->end() ? nullptr : &*it;
  }

  template <class T, class Check>
  void read_with(const char* key, T& out, Check ok, const char* what) {
    const json* v = take(key);
    if (!v) return;
    if (!ok(*v)) throw ConfigError(path_ + "." + key + ": expected " + what);
    out = v->get<T>();
  }

  template <class T, class Check>
  void read_list(const char* key, std::vector<T>& out, Check ok, const char* what) {
    const json* v = take(key);
    if (!v) return;
    if (!v->is_array()) throw ConfigError(path_ + "." + key + ": expected an array of " + what);
    std::vector<T> values;
    for (const auto& e : *v) {
      if (!ok(e)) throw ConfigError(path_ + "." + key + ": expected an array of " + what);
      values.push_back(e.get<T>());
    }
    out = std::move(values);
  }

  const json* j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_adam(Section& s, AdamConfig& a) {
  s.read("peak_lr", a.peak_lr);
  s.read("warmup_steps", a.warmup_steps);
  s.read("beta1", a.beta1);
  s.read("beta2", a.beta2);
  s.read("eps", a.eps);
  s.read("clip_norm", a.clip_norm);
}

json adam_json(const AdamConfig& a) {
  return {{"peak_lr", a.peak_lr}, {"warmup_steps", a.warmup_steps}, {"beta1", a.beta1},
          {"beta2", a.beta2},     {"eps", a.eps},                   {"clip_norm", a.clip_norm}};
}

void read_encoder(Section& s, EncoderConfig& e) {
  s.read("num_layers", e.num_layers);
  s.read("model_dim", e.model_dim);
  s.read("ffn_dim", e.ffn_dim);
  s.read("num_heads", e.num_heads);
  s.read("downsample_factor", e.downsample_factor);
  s.read("dropout", e.dropout);
}

json encoder_json(const EncoderConfig& e) {
  return {{"num_layers", e.num_layers}, {"model_dim", e.model_dim},
          {"ffn_dim", e.ffn_dim},       {"num_heads", e.num_heads},
          {"downsample_factor", e.downsample_factor}, {"dropout", e.dropout}};
}

void read_model(Section& s, ModelConfig& m) {
  s.read("feature_dim", m.feature_dim);
  s.read("num_phones", m.num_phones);
  s.read("vocab_size", m.vocab_size);
  s.read("blank_id", m.blank_id);
  s.sub("acoustic", [&](Section& e) { read_encoder(e, m.acoustic); });
  s.sub("text", [&](Section& e) { read_encoder(e, m.text); });
}

json model_json(const ModelConfig& m) {
  return {{"feature_dim", m.feature_dim}, {"num_phones", m.num_phones},
          {"vocab_size", m.vocab_size},   {"blank_id", m.blank_id},
          {"acoustic", encoder_json(m.acoustic)}, {"text", encoder_json(m.text)}};
}

void read_beam(Section& s, BeamSearchOptions& b) {
  s.read("beam", b.beam);
  s.read("lm_weight", b.lm_weight);
  s.read("blank_id", b.blank_id);
  s.read("lm_end_of_sentence", b.lm_end_of_sentence);
  s.read("token_topk", b.token_topk);
  s.read("length_bonus", b.length_bonus);
}

json beam_json(const BeamSearchOptions& b) {
  return {{"beam", b.beam}, {"lm_weight", b.lm_weight}, {"blank_id", b.blank_id},
          {"lm_end_of_sentence", b.lm_end_of_sentence}, {"token_topk", b.token_topk},
          {"length_bonus", b.length_bonus}};
}

void check_beam(const BeamSearchOptions& b, const char* what) {
  const std::string w = what;
  if (b.beam < 1) throw ConfigError(w + ": beam must be >= 1");
  if (b.lm_weight < 0.0) throw ConfigError(w + ": lm_weight must be >= 0");
  if (b.token_topk < 0) throw ConfigError(w + ": token_topk must be >= 0");
}

}  // namespace

void ExperimentConfig::validate() const {
  synth.validate();
  upsample.validate();
  model.validate();
  train.validate();
  lm.validate();
  check_beam(decode, "decode");
  check_beam(compare.beam, "compare.beam");
  if (model.feature_dim != synth.feature_dim) {
    throw ConfigError("model.feature_dim must equal synth.feature_dim");
  }
  if (model.num_phones != synth.num_phones + 1) {
    throw ConfigError("model.num_phones must be synth.num_phones + 1 (silence)");
  }
  if (model.vocab_size != synth.vocab_words + 1 || lm.vocab_size != model.vocab_size) {
    throw ConfigError("model.vocab_size and lm.vocab_size must be synth.vocab_words + 1 (blank)");
  }
  for (const auto& s : compare.systems) system_config(s, train);
}

void ExperimentConfig::set_seed(std::uint64_t seed) {
  synth.seed = seed;
  upsample.seed = seed;
  train.seed = seed;
  lm.seed = seed;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  Section root(j, "config");
  root.sub("synth", [&](Section& s) {
    auto& y = c.synth;
    s.read("seed", y.seed);
    s.read("num_phones", y.num_phones);
    s.read("vocab_words", y.vocab_words);
    s.read("min_word_phones", y.min_word_phones);
    s.read("max_word_phones", y.max_word_phones);
    s.read("feature_dim", y.feature_dim);
    s.read("paired", y.paired);
    s.read("unpaired_ratio", y.unpaired_ratio);
    s.read("dev", y.dev);
    s.read("test", y.test);
    s.read("min_words", y.min_words);
    s.read("max_words", y.max_words);
    s.read("zipf_exponent", y.zipf_exponent);
    s.read("bigram_prob", y.bigram_prob);
    s.read("successors", y.successors);
    s.read("duration_mean", y.duration_mean);
    s.read("duration_std", y.duration_std);
    s.read("noise_std", y.noise_std);
    s.read("silence_prob", y.silence_prob);
    s.read("target_affine_scale", y.target_affine_scale);
    s.read("target_offset_scale", y.target_offset_scale);
    s.read("unseen_affine_scale", y.unseen_affine_scale);
    s.read("unseen_offset_scale", y.unseen_offset_scale);
  });
  root.sub("upsample", [&](Section& s) {
    auto& u = c.upsample;
    s.read("mean", u.mean);
    s.read("std", u.std);
    s.read("min_repeats", u.min_repeats);
    s.read("silence_prob", u.silence_prob);
    s.read("seed", u.seed);
  });
  root.sub("model", [&](Section& s) { read_model(s, c.model); });
  root.sub("train", [&](Section& s) {
    auto& t = c.train;
    s.read("alpha", t.alpha);
    s.read("epochs", t.epochs);
    s.read("paired_batch", t.paired_batch);
    s.read("unpaired_batch", t.unpaired_batch);
    s.read("unpaired_per_paired", t.unpaired_per_paired);
    s.sub("adam", [&](Section& a) { read_adam(a, t.adam); });
    s.sub("specaug", [&](Section& a) {
      a.read("num_time_masks", t.specaug.num_time_masks);
      a.read("max_time_width", t.specaug.max_time_width);
      a.read("num_feat_masks", t.specaug.num_feat_masks);
      a.read("max_feat_width", t.specaug.max_feat_width);
    });
    s.read("average_best_k", t.average_best_k);
    s.read("seed", t.seed);
    s.read("enable_am3", t.enable_am3);
    s.read("enable_paired_ctc", t.enable_paired_ctc);
    s.read("enable_unpaired", t.enable_unpaired);
    s.read("text_downsample", t.text_downsample);
    s.read("text_through_acoustic_encoder", t.text_through_acoustic_encoder);
    s.read("am3_temperature", t.am3_temperature);
    s.read("am3_stop_gradient", t.am3_stop_gradient);
    s.read("am3_weight", t.am3_weight);
  });
  root.sub("lm", [&](Section& s) {
    auto& l = c.lm;
    s.read("vocab_size", l.vocab_size);
    s.read("num_layers", l.num_layers);
    s.read("model_dim", l.model_dim);
    s.read("ffn_dim", l.ffn_dim);
    s.read("num_heads", l.num_heads);
    s.read("dropout", l.dropout);
    s.read("epochs", l.epochs);
    s.read("batch_size", l.batch_size);
    s.sub("adam", [&](Section& a) { read_adam(a, l.adam); });
    s.read("seed", l.seed);
  });
  root.sub("decode", [&](Section& s) { read_beam(s, c.decode); });
  root.sub("compare", [&](Section& s) {
    s.read("seeds", c.compare.seeds);
    s.read("systems", c.compare.systems);
    s.read("lm_systems", c.compare.lm_systems);
    s.sub("beam", [&](Section& b) { read_beam(b, c.compare.beam); });
  });
  root.finish();
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  const auto& y = c.synth;
  const auto& t = c.train;
  const auto& l = c.lm;
  return {
      {"synth",
       {{"seed", y.seed}, {"num_phones", y.num_phones}, {"vocab_words", y.vocab_words},
        {"min_word_phones", y.min_word_phones}, {"max_word_phones", y.max_word_phones},
        {"feature_dim", y.feature_dim}, {"paired", y.paired}, {"unpaired_ratio", y.unpaired_ratio},
        {"dev", y.dev}, {"test", y.test}, {"min_words", y.min_words}, {"max_words", y.max_words},
        {"zipf_exponent", y.zipf_exponent}, {"bigram_prob", y.bigram_prob},
        {"successors", y.successors}, {"duration_mean", y.duration_mean},
        {"duration_std", y.duration_std}, {"noise_std", y.noise_std},
        {"silence_prob", y.silence_prob}, {"target_affine_scale", y.target_affine_scale},
        {"target_offset_scale", y.target_offset_scale},
        {"unseen_affine_scale", y.unseen_affine_scale},
        {"unseen_offset_scale", y.unseen_offset_scale}}},
      {"upsample",
       {{"mean", c.upsample.mean}, {"std", c.upsample.std}, {"min_repeats", c.upsample.min_repeats},
        {"silence_prob", c.upsample.silence_prob}, {"seed", c.upsample.seed}}},
      {"model", model_json(c.model)},
      {"train",
       {{"alpha", t.alpha}, {"epochs", t.epochs}, {"paired_batch", t.paired_batch},
        {"unpaired_batch", t.unpaired_batch}, {"unpaired_per_paired", t.unpaired_per_paired},
        {"adam", adam_json(t.adam)},
        {"specaug",
         {{"num_time_masks", t.specaug.num_time_masks}, {"max_time_width", t.specaug.max_time_width},
          {"num_feat_masks", t.specaug.num_feat_masks}, {"max_feat_width", t.specaug.max_feat_width}}},
        {"average_best_k", t.average_best_k}, {"seed", t.seed}, {"enable_am3", t.enable_am3},
        {"enable_paired_ctc", t.enable_paired_ctc}, {"enable_unpaired", t.enable_unpaired},
        {"text_downsample", t.text_downsample},
        {"text_through_acoustic_encoder", t.text_through_acoustic_encoder},
        {"am3_temperature", t.am3_temperature}, {"am3_stop_gradient", t.am3_stop_gradient},
        {"am3_weight", t.am3_weight}}},
      {"lm",
       {{"vocab_size", l.vocab_size}, {"num_layers", l.num_layers}, {"model_dim", l.model_dim},
        {"ffn_dim", l.ffn_dim}, {"num_heads", l.num_heads}, {"dropout", l.dropout},
        {"epochs", l.epochs}, {"batch_size", l.batch_size}, {"adam", adam_json(l.adam)},
        {"seed", l.seed}}},
      {"decode", beam_json(c.decode)},
      {"compare",
       {{"seeds", c.compare.seeds}, {"systems", c.compare.systems},
        {"lm_systems", c.compare.lm_systems}, {"beam", beam_json(c.compare.beam)}}},
  };
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  ExperimentConfig c = config_from_json(j);
  c.validate();
  return c;
}

void save_model(const std::filesystem::path& path, const ModelParams& model) {
  json m = model_json(model.config);
  m["text_branch"] = model.config.text_branch;
  save_checkpoint(path, model.store, {{"kind", "asr"}, {"model", m.dump()}});
}

ModelParams load_model(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.manifest["kind"] != "asr") throw DataError(path.string() + " is not an ASR checkpoint");
  ModelConfig cfg;
  try {
    json m = json::parse(ck.manifest["model"]);
    if (!m.is_object() || !m.contains("text_branch") || !m["text_branch"].is_boolean()) {
      throw DataError(path.string() + ": malformed model description");
    }
    cfg.text_branch = m["text_branch"].get<bool>();
    m.erase("text_branch");
    Section s(m, "model");
    read_model(s, cfg);
    s.finish();
    cfg.validate();
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return ModelParams{cfg, std::move(ck.params)};
}

}  // namespace fastinject
