#include <doctest.h>

#include <string>

#include "fastinject/errors.hpp"
#include "fastinject/scoring.hpp"
#include "oracles.hpp"

using namespace fastinject;

namespace {

std::vector<std::string> words(std::initializer_list<const char*> w) { return {w.begin(), w.end()}; }

EditCounts score(std::initializer_list<const char*> ref, std::initializer_list<const char*> hyp) {
  const auto r = words(ref), h = words(hyp);
  return align_counts(std::span<const std::string>(r), std::span<const std::string>(h));
}

}  // namespace

TEST_CASE("edit distance examples") {
  const EditCounts same = score({"a", "b"}, {"a", "b"});
  CHECK(same.errors() == 0);
  CHECK(same.ter() == 0.0);

  const EditCounts del = score({"a", "b", "c"}, {"a", "c"});
  CHECK(del.deletions == 1);
  CHECK(del.errors() == 1);
  CHECK(del.ter() == doctest::Approx(100.0 / 3.0));

  const EditCounts sub = score({"a"}, {"b"});
  CHECK(sub.substitutions == 1);
  CHECK(sub.ter() == 100.0);

  const EditCounts ins = score({}, {"x"});
  CHECK(ins.insertions == 1);
  CHECK(EditCounts{}.ter() == 0.0);
}

TEST_CASE("ties prefer substitution, then insertion") {
  // "a b" -> "b c": two substitutions cost the same as one deletion plus one insertion.
  const EditCounts c = score({"a", "b"}, {"b", "c"});
  CHECK(c.substitutions == 2);
  CHECK(c.insertions == 0);
  CHECK(c.deletions == 0);
  // Longer hypothesis: one insertion is forced; the rest are substitutions.
  const EditCounts d = score({"a", "b"}, {"c", "d", "e"});
  CHECK(d.substitutions == 2);
  CHECK(d.insertions == 1);
}

TEST_CASE("edit counts agree with the distance oracle") {
  Rng rng(3);
  std::uniform_int_distribution<int> len(0, 7), tok(1, 4);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<int> ref(len(rng)), hyp(len(rng));
    for (int& t : ref) t = tok(rng);
    for (int& t : hyp) t = tok(rng);
    const EditCounts c = align_counts(ref, hyp);
    CHECK(c.errors() == oracle::edit_distance(ref, hyp));
    CHECK(c.ref_length == static_cast<long>(ref.size()));
    // Alignment bookkeeping: hyp = ref - deletions + insertions.
    CHECK(static_cast<long>(hyp.size()) == c.ref_length - c.deletions + c.insertions);
  }
}

TEST_CASE("eval report round trips through json") {
  EvalReport r;
  r.splits.push_back({"test_source", "greedy", {3, 1, 2, 40}});
  r.splits.push_back({"test_unseen", "beam+lm", {0, 0, 0, 0}});
  const EvalReport back = EvalReport::from_json(nlohmann::json::parse(r.to_json().dump()));
  REQUIRE(back.splits.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back.splits[i].split == r.splits[i].split);
    CHECK(back.splits[i].mode == r.splits[i].mode);
    CHECK(back.splits[i].counts == r.splits[i].counts);
  }
  CHECK(r.to_text().find("15.00") != std::string::npos);
  CHECK_THROWS_AS(EvalReport::from_json(nlohmann::json::parse(R"({"splits":[{"split":1}]})")), DataError);
}
