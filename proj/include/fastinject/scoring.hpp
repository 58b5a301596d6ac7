#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace fastinject {

struct EditCounts {
  long substitutions = 0;
  long deletions = 0;
  long insertions = 0;
  long ref_length = 0;

  long errors() const { return substitutions + deletions + insertions; }
  // Percentage; 0 for an empty reference with no insertions.
  double ter() const;
  EditCounts& operator+=(const EditCounts& other);
  bool operator==(const EditCounts&) const = default;
};

// Levenshtein alignment. Among equal-cost alignments the backtrace prefers
// substitution, then insertion, then deletion.
EditCounts align_counts(std::span<const int> ref, std::span<const int> hyp);
EditCounts align_counts(std::span<const std::string> ref, std::span<const std::string> hyp);

struct SplitScore {
  std::string split;
  std::string mode;  // "greedy" or "beam+lm"
  EditCounts counts;
};

struct EvalReport {
  std::vector<SplitScore> splits;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
  std::string to_text() const;
};

}  // namespace fastinject
