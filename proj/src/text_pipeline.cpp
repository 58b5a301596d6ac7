#include "fastinject/text_pipeline.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "fastinject/errors.hpp"

namespace fastinject {

namespace {

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<int> parse_ints(const std::string& s, const std::string& context) {
  std::vector<int> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size()) throw DataError(context + ": bad integer '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream is{std::string(text)};
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

Lexicon::Lexicon() { intern_phone(std::string(kSilenceSymbol)); }

int Lexicon::intern_phone(const std::string& symbol) {
  auto it = phone_index_.find(symbol);
  if (it != phone_index_.end()) return it->second;
  const int id = static_cast<int>(inventory_.size());
  inventory_.push_back(symbol);
  phone_index_.emplace(symbol, id);
  return id;
}

void Lexicon::add_word(const std::string& word, const std::vector<std::string>& phones) {
  if (word.empty() || phones.empty()) throw DataError("lexicon entry must have a word and phones");
  if (contains(word)) throw DataError("duplicate lexicon entry: " + word);
  std::vector<int> ids;
  for (const auto& p : phones) {
    if (p == kSilenceSymbol) {
      throw DataError("lexicon entry '" + word + "' uses the reserved silence phone");
    }
    ids.push_back(intern_phone(p));
  }
  entries_.emplace(word, std::move(ids));
  order_.push_back(word);
}

const std::vector<int>& Lexicon::lookup(const std::string& word) const {
  auto it = entries_.find(word);
  if (it == entries_.end()) throw OovError(word);
  return it->second;
}

int Lexicon::phone_id(const std::string& symbol) const {
  auto it = phone_index_.find(symbol);
  if (it == phone_index_.end()) throw DataError("unknown phone symbol: " + symbol);
  return it->second;
}

Lexicon Lexicon::parse(std::istream& is) {
  Lexicon lex;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError("lexicon line " + std::to_string(lineno) + ": expected word<TAB>phones");
    }
    lex.add_word(line.substr(0, tab), split_words(line.substr(tab + 1)));
  }
  return lex;
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open lexicon " + path.string());
  return parse(is);
}

void Lexicon::save(std::ostream& os) const {
  os << "# word<TAB>phones\n";
  for (const auto& w : order_) {
    os << w << '\t';
    const auto& ids = entries_.at(w);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i) os << ' ';
      os << inventory_[static_cast<std::size_t>(ids[i])];
    }
    os << '\n';
  }
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) {
  tokens_.emplace_back(kBlankToken);
  index_.emplace(std::string(kBlankToken), 0);
  for (const auto& t : tokens) {
    if (index_.count(t)) throw DataError("duplicate vocabulary token: " + t);
    index_.emplace(t, static_cast<int>(tokens_.size()));
    tokens_.push_back(t);
  }
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open vocabulary " + path.string());
  std::string line;
  std::vector<std::string> tokens;
  bool first = true;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first) {
      if (line != kBlankToken) throw DataError(path.string() + ": first token must be <blank>");
      first = false;
      continue;
    }
    if (!line.empty()) tokens.push_back(line);
  }
  if (first) throw DataError(path.string() + ": empty vocabulary");
  return Vocabulary(tokens);
}

void Vocabulary::save(std::ostream& os) const {
  for (const auto& t : tokens_) os << t << '\n';
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) throw OovError(token);
  return it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw RangeError("token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> out;
  for (const auto& w : split_words(text)) out.push_back(id(w));
  return out;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

std::vector<int> UpsampledPhoneSequence::collapse() const {
  std::vector<int> out;
  std::size_t pos = 0;
  for (int n : repeat_counts) {
    out.push_back(ids.at(pos));
    pos += static_cast<std::size_t>(n);
  }
  return out;
}

void UpsampleConfig::validate() const {
  if (min_repeats < 1) throw ConfigError("upsample: min_repeats must be >= 1");
  if (mean < min_repeats) throw ConfigError("upsample: mean must be >= min_repeats");
  if (std < 0.0) throw ConfigError("upsample: std must be >= 0");
  if (silence_prob < 0.0 || silence_prob > 1.0) {
    throw ConfigError("upsample: silence_prob must be in [0, 1]");
  }
}

PhoneSequence phonemize(std::string_view text, const Lexicon& lexicon) {
  PhoneSequence out;
  out.source_text = std::string(text);
  out.word_boundaries.push_back(0);
  for (const auto& w : split_words(text)) {
    const auto& phones = lexicon.lookup(w);
    out.ids.insert(out.ids.end(), phones.begin(), phones.end());
    out.word_boundaries.push_back(out.ids.size());
  }
  return out;
}

PhoneSequence insert_silence(const PhoneSequence& phones, double prob, Rng& rng) {
  if (prob < 0.0 || prob > 1.0) throw ConfigError("insert_silence: prob must be in [0, 1]");
  if (phones.ids.empty()) return phones;
  std::bernoulli_distribution coin(prob);
  PhoneSequence out;
  out.source_text = phones.source_text;
  std::size_t next_boundary = 0;
  const auto& b = phones.word_boundaries;
  for (std::size_t i = 0; i <= phones.ids.size(); ++i) {
    if (next_boundary < b.size() && b[next_boundary] == i) {
      out.word_boundaries.push_back(out.ids.size());
      if (coin(rng)) out.ids.push_back(kSilencePhone);
      while (next_boundary < b.size() && b[next_boundary] == i) ++next_boundary;
    }
    if (i < phones.ids.size()) out.ids.push_back(phones.ids[i]);
  }
  return out;
}

UpsampledPhoneSequence upsample(const PhoneSequence& phones, const UpsampleConfig& config,
                                Rng& rng) {
  config.validate();
  if (phones.ids.empty()) throw LengthError("upsample: empty phone sequence");
  std::normal_distribution<double> gauss(config.mean, config.std);
  UpsampledPhoneSequence out;
  out.repeat_counts.reserve(phones.ids.size());
  for (int id : phones.ids) {
    // std::round is half-away-from-zero.
    const double draw = config.std == 0.0 ? config.mean : gauss(rng);
    const int n = std::max(config.min_repeats, static_cast<int>(std::round(draw)));
    out.repeat_counts.push_back(n);
    out.ids.insert(out.ids.end(), static_cast<std::size_t>(n), id);
  }
  return out;
}

PreparedRecord prepare_record(const std::string& utt_id, std::string_view text,
                              std::size_t index, const Lexicon& lexicon,
                              const Vocabulary& vocab, const UpsampleConfig& config) {
  PhoneSequence phones = phonemize(text, lexicon);
  if (phones.ids.empty()) throw DataError("utterance " + utt_id + " has no words");
  Rng rng(config.seed ^ static_cast<std::uint64_t>(index));
  phones = insert_silence(phones, config.silence_prob, rng);
  UpsampledPhoneSequence up = upsample(phones, config, rng);
  return {utt_id, std::move(up.ids), vocab.encode(text)};
}

void write_prepared(std::ostream& os, const std::vector<PreparedRecord>& records) {
  os << kPreparedHeader << '\n';
  for (const auto& r : records) {
    os << r.utt_id << '\t' << join_ints(r.phones) << '\t' << join_ints(r.tokens) << '\n';
  }
}

std::vector<PreparedRecord> read_prepared(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kPreparedHeader) {
    throw DataError("prepared corpus: missing '#fastinject-text v1' header");
  }
  std::vector<PreparedRecord> out;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      throw DataError("prepared corpus line " + std::to_string(lineno) + ": expected 3 fields");
    }
    const std::string ctx = "prepared corpus line " + std::to_string(lineno);
    PreparedRecord r{line.substr(0, t1), parse_ints(line.substr(t1 + 1, t2 - t1 - 1), ctx),
                     parse_ints(line.substr(t2 + 1), ctx)};
    if (r.phones.empty() || r.tokens.empty()) throw DataError(ctx + ": empty phones or tokens");
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<PreparedRecord> read_prepared(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open prepared corpus " + path.string());
  return read_prepared(is);
}

std::vector<PreparedRecord> prepare_unpaired_corpus(
    const std::vector<std::pair<std::string, std::string>>& texts, const Lexicon& lexicon,
    const Vocabulary& vocab, const UpsampleConfig& config, const std::filesystem::path& out) {
  config.validate();
  std::vector<PreparedRecord> records;
  records.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    records.push_back(prepare_record(texts[i].first, texts[i].second, i, lexicon, vocab, config));
  }
  std::ofstream os(out, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write prepared corpus " + out.string());
  write_prepared(os, records);
  if (!os) throw IoError("failed writing prepared corpus " + out.string());
  return records;
}

}  // namespace fastinject
