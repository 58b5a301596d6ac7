#pragma once

// Offline text preparation: words -> phones -> silence insertion -> random
// repetition. Training only ever reads the prepared records.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fastinject/rng.hpp"

namespace fastinject {

inline constexpr std::string_view kSilenceSymbol = "SIL";
inline constexpr int kSilencePhone = 0;
inline constexpr std::string_view kBlankToken = "<blank>";
inline constexpr std::string_view kPreparedHeader = "#fastinject-text v1";

// Word -> phone ids. Phone 0 is always SIL; other phones are numbered in order
// of first appearance in the lexicon.
//
// File format: UTF-8, one entry per line `word<TAB>phone phone ...`; lines
// starting with '#' and blank lines are ignored.
class Lexicon {
 public:
  Lexicon();

  static Lexicon parse(std::istream& is);
  static Lexicon load(const std::filesystem::path& path);
  void save(std::ostream& os) const;

  void add_word(const std::string& word, const std::vector<std::string>& phones);
  // Throws OovError for unknown words.
  const std::vector<int>& lookup(const std::string& word) const;
  bool contains(const std::string& word) const { return entries_.count(word) != 0; }

  int phone_id(const std::string& symbol) const;
  const std::string& phone_symbol(int id) const { return inventory_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& phone_inventory() const { return inventory_; }
  int num_phones() const { return static_cast<int>(inventory_.size()); }
  int silence_id() const { return kSilencePhone; }
  const std::vector<std::string>& words() const { return order_; }

 private:
  int intern_phone(const std::string& symbol);

  std::unordered_map<std::string, std::vector<int>> entries_;
  std::vector<std::string> order_;
  std::vector<std::string> inventory_;
  std::unordered_map<std::string, int> phone_index_;
};

// Output modelling units. Id 0 is the CTC blank. File format: one token per
// line, id = zero-based line number, first line `<blank>`.
class Vocabulary {
 public:
  Vocabulary();
  explicit Vocabulary(const std::vector<std::string>& tokens);

  static Vocabulary load(const std::filesystem::path& path);
  void save(std::ostream& os) const;

  int id(const std::string& token) const;  // throws OovError
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  int blank_id() const { return 0; }

  std::vector<int> encode(std::string_view text) const;
  std::string decode(const std::vector<int>& ids) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

std::vector<std::string> split_words(std::string_view text);

struct PhoneSequence {
  std::vector<int> ids;
  std::string source_text;
  // Boundary positions in `ids`: 0, each word start, and ids.size().
  std::vector<std::size_t> word_boundaries;
};

struct UpsampledPhoneSequence {
  std::vector<int> ids;
  std::vector<int> repeat_counts;  // one per phone of the source sequence

  // Undo the repetition using repeat_counts.
  std::vector<int> collapse() const;
};

struct UpsampleConfig {
  double mean = 4.0;
  double std = 1.0;
  int min_repeats = 1;
  double silence_prob = 0.25;
  std::uint64_t seed = 0;

  void validate() const;
};

PhoneSequence phonemize(std::string_view text, const Lexicon& lexicon);

// Independently inserts SIL at every word boundary (start and end included)
// with probability `prob`.
PhoneSequence insert_silence(const PhoneSequence& phones, double prob, Rng& rng);

// Repeats each phone max(min_repeats, round(N(mean, std^2))) times; rounding is
// half away from zero.
UpsampledPhoneSequence upsample(const PhoneSequence& phones, const UpsampleConfig& config,
                                Rng& rng);

struct PreparedRecord {
  std::string utt_id;
  std::vector<int> phones;  // upsampled phone ids
  std::vector<int> tokens;  // CTC targets in output units
};

// silence insertion + upsampling for one utterance, using the per-utterance
// stream seeded with config.seed XOR index.
PreparedRecord prepare_record(const std::string& utt_id, std::string_view text,
                              std::size_t index, const Lexicon& lexicon,
                              const Vocabulary& vocab, const UpsampleConfig& config);

// Prepared-corpus format: header `#fastinject-text v1`, then one line per
// utterance `utt_id<TAB>phone ids<TAB>token ids` (ids space separated).
void write_prepared(std::ostream& os, const std::vector<PreparedRecord>& records);
std::vector<PreparedRecord> read_prepared(std::istream& is);
std::vector<PreparedRecord> read_prepared(const std::filesystem::path& path);

std::vector<PreparedRecord> prepare_unpaired_corpus(
    const std::vector<std::pair<std::string, std::string>>& texts, const Lexicon& lexicon,
    const Vocabulary& vocab, const UpsampleConfig& config, const std::filesystem::path& out);

}  // namespace fastinject
