#include "fastinject/scoring.hpp"

#include <algorithm>
#include <cstdio>

#include "fastinject/errors.hpp"

namespace fastinject {

namespace {

template <typename T>
EditCounts align_impl(std::span<const T> ref, std::span<const T> hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::vector<long>> d(n + 1, std::vector<long>(m + 1, 0));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = static_cast<long>(i);
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = static_cast<long>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const long diag = d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      d[i][j] = std::min({diag, d[i][j - 1] + 1, d[i - 1][j] + 1});
    }
  }
  EditCounts c;
  c.ref_length = static_cast<long>(n);
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++c.substitutions;
      --i;
      --j;
    } else if (j > 0 && d[i][j] == d[i][j - 1] + 1) {
      ++c.insertions;
      --j;
    } else {
      ++c.deletions;
      --i;
    }
  }
  return c;
}

}  // namespace

double EditCounts::ter() const {
  if (ref_length == 0) return errors() == 0 ? 0.0 : 100.0;
  return 100.0 * static_cast<double>(errors()) / static_cast<double>(ref_length);
}

EditCounts& EditCounts::operator+=(const EditCounts& o) {
  substitutions += o.substitutions;
  deletions += o.deletions;
  insertions += o.insertions;
  ref_length += o.ref_length;
  return *this;
}

EditCounts align_counts(std::span<const int> ref, std::span<const int> hyp) {
  return align_impl(ref, hyp);
}

EditCounts align_counts(std::span<const std::string> ref, std::span<const std::string> hyp) {
  return align_impl(ref, hyp);
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : splits) {
    arr.push_back({{"split", s.split},
                   {"mode", s.mode},
                   {"substitutions", s.counts.substitutions},
                   {"deletions", s.counts.deletions},
                   {"insertions", s.counts.insertions},
                   {"ref_length", s.counts.ref_length},
                   {"ter", s.counts.ter()}});
  }
  return {{"splits", arr}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    for (const auto& s : j.at("splits")) {
      SplitScore score;
      score.split = s.at("split").get<std::string>();
      score.mode = s.at("mode").get<std::string>();
      score.counts.substitutions = s.at("substitutions").get<long>();
      score.counts.deletions = s.at("deletions").get<long>();
      score.counts.insertions = s.at("insertions").get<long>();
      score.counts.ref_length = s.at("ref_length").get<long>();
      r.splits.push_back(std::move(score));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("eval report: ") + e.what());
  }
  return r;
}

std::string EvalReport::to_text() const {
  std::string out = "split\tmode\tS\tD\tI\tN\tTER%\n";
  char buf[256];
  for (const auto& s : splits) {
    std::snprintf(buf, sizeof buf, "%s\t%s\t%ld\t%ld\t%ld\t%ld\t%.2f\n", s.split.c_str(),
                  s.mode.c_str(), s.counts.substitutions, s.counts.deletions,
                  s.counts.insertions, s.counts.ref_length, s.counts.ter());
    out += buf;
  }
  return out;
}

}  // namespace fastinject
