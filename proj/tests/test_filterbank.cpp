#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "dptext/filterbank.hpp"
#include "oracles.hpp"

using namespace dptext;
using namespace dptext::filters;
using corpus::TaskKind;
using corpus::TextPair;

namespace {

TextPair tp(const std::string& id, const std::string& x, const std::string& y) {
  TextPair p;
  p.pair_id = id;
  p.x = x;
  p.y = y;
  p.generator_id = "fixture";
  return p;
}

// Deterministic mock scorer: explicit (premise, hypothesis) overrides over a
// low default.
class MapNliScorer final : public NliScorer {
 public:
  explicit MapNliScorer(double fallback = 0.1) : fallback_(fallback) {}
  void set(const std::string& premise, const std::string& hypothesis, double score) {
    scores_[{premise, hypothesis}] = score;
  }
  double score(std::string_view premise, std::string_view hypothesis) const override {
    auto it = scores_.find({std::string(premise), std::string(hypothesis)});
    return it == scores_.end() ? fallback_ : it->second;
  }

 private:
  std::map<std::pair<std::string, std::string>, double> scores_;
  double fallback_;
};

class ThrowingNliScorer final : public NliScorer {
 public:
  double score(std::string_view, std::string_view) const override {
    throw std::runtime_error("nli backend down");
  }
};

class ThrowingChecker final : public GrammarChecker {
 public:
  std::vector<Finding> check(std::string_view) const override {
    throw std::runtime_error("checker down");
  }
};

class CategoryChecker final : public GrammarChecker {
 public:
  // flags one finding of the given category when `marker` appears in the text
  CategoryChecker(std::string marker, Category category)
      : marker_(std::move(marker)), category_(category) {}
  std::vector<Finding> check(std::string_view text) const override {
    if (text.find(marker_) != std::string_view::npos) {
      return {{category_, 0, 1, "marker"}};
    }
    return {};
  }

 private:
  std::string marker_;
  Category category_;
};

std::string repeated_tokens(const std::string& stem, std::size_t n) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += " ";
    out += stem + std::to_string(i);
  }
  return out;
}

// The 12-pair fixture: six pairs that survive the whole chain and one pair
// rejected by each filter, constructed so every rejection lands on exactly the
// designated filter. Paraphrase task, default thresholds.
struct ChainFixture {
  std::vector<TextPair> pairs;
  MapNliScorer nli{0.1};
  RuleGrammarChecker grammar;  // doubled-word + unbalanced-quote rules
  FilterThresholds thresholds;

  ChainFixture() {
    const std::vector<std::pair<std::string, std::string>> keeps = {
        {"alpha bravo charlie delta echo foxtrot golf hotel",
         "india juliet kilo lima mike november oscar papa"},
        {"quebec romeo sierra tango uniform victor whiskey xray",
         "yankee zulu apple banana cherry date elder fig"},
        {"grape honey iris jade kiwi lemon mango nectar",
         "olive peach quince raisin sage thyme umber vanilla"},
        {"willow xenon yarrow zinc acorn birch cedar dill",
         "elm fennel gorse hazel ivy juniper kale laurel"},
        {"maple nutmeg oak pecan rowan spruce teak walnut",
         "aster begonia crocus dahlia edelweiss fern gentian hosta"},
        {"lotus marigold nettle orchid poppy rose sunflower tulip",
         "violet wisteria yucca zinnia amaranth bluebell clover daisy"},
    };
    for (std::size_t i = 0; i < keeps.size(); ++i) {
      pairs.push_back(tp("keep" + std::to_string(i), keeps[i].first, keeps[i].second));
      nli.set(keeps[i].first, keeps[i].second, 0.97);
      nli.set(keeps[i].second, keeps[i].first, 0.80);
    }

    pairs.push_back(tp("rej-length", "one two three four five six seven eight", "short text"));

    pairs.push_back(tp("rej-redundancy", "echo golf repeat tokens flow merge stone river",
                       "echo golf repeat tokens differ apart unique words"));

    pairs.push_back(tp("rej-numeric", "the ledger shows 19 entries for march audit",
                       "records confirm 20 items during spring review now"));

    pairs.push_back(tp("rej-grammar", "clean sentence passes every check before grammar stage",
                       "output contains doubledword doubledword marker flaw here today"));

    const std::string ent_x = "falcon glides above misty canyon during quiet dawn";
    const std::string ent_y = "eagle soars over foggy valley in silent morning";
    pairs.push_back(tp("rej-entail", ent_x, ent_y));
    nli.set(ent_x, ent_y, 0.96);
    nli.set(ent_y, ent_x, 0.50);

    const std::string dup_x = "lotus marigold nettle orchid poppy rose sunflower tulips";
    const std::string dup_y = "violet wisteria yucca zinnia amaranth bluebell clover daisies";
    pairs.push_back(tp("rej-dup", dup_x, dup_y));
    nli.set(dup_x, dup_y, 0.96);
    nli.set(dup_y, dup_x, 0.75);  // survives entailment with a lower quality score
    // duplicate edge onto keep5
    nli.set(dup_x, keeps[5].first, 1.0);
    nli.set(dup_y, keeps[5].second, 1.0);
  }
};

}  // namespace

TEST_CASE("entailment filter thresholds and fail-closed behavior") {
  MapNliScorer nli(0.0);
  auto pair = tp("p", "premise text", "hypothesis text");
  nli.set("premise text", "hypothesis text", 0.96);
  nli.set("hypothesis text", "premise text", 0.96);
  auto v = entailment_filter(pair, nli, 0.95, 0.70);
  CHECK(v.passed);
  CHECK(*v.score == doctest::Approx(0.96));

  nli.set("hypothesis text", "premise text", 0.50);
  v = entailment_filter(pair, nli, 0.95, 0.70);
  CHECK_FALSE(v.passed);
  CHECK(*v.score == doctest::Approx(0.50));

  // reflexive pair with a sound scorer
  auto same = tp("s", "identical words here", "identical words here");
  MapNliScorer reflexive(1.0);
  CHECK(entailment_filter(same, reflexive, 0.95, 0.70).passed);

  ThrowingNliScorer broken;
  v = entailment_filter(pair, broken, 0.95, 0.70);
  CHECK_FALSE(v.passed);
  CHECK(v.reason == "scorer_error");

  CHECK_THROWS_AS(entailment_filter(pair, nli, 0.0, 0.7), ConfigError);
}

TEST_CASE("length filter boundaries") {
  const std::string x100 = repeated_tokens("tok", 100);
  // summarization: 80 > 75 rejects, 75 passes inclusively
  auto r80 = length_filter(tp("p", x100, repeated_tokens("out", 80)),
                           TaskKind::summarization, 0.75, 0.25);
  CHECK_FALSE(r80.passed);
  auto r75 = length_filter(tp("p", x100, repeated_tokens("out", 75)),
                           TaskKind::summarization, 0.75, 0.25);
  CHECK(r75.passed);

  // paraphrase: equal lengths pass
  auto rp = length_filter(tp("p", repeated_tokens("a", 20), repeated_tokens("b", 20)),
                          TaskKind::paraphrase, 0.75, 0.25);
  CHECK(rp.passed);
  // outside the band
  auto rout = length_filter(tp("p", repeated_tokens("a", 20), repeated_tokens("b", 4)),
                            TaskKind::paraphrase, 0.75, 0.25);
  CHECK_FALSE(rout.passed);

  // degenerate empty x
  auto rdeg = length_filter(tp("p", "", "y text"), TaskKind::summarization, 0.75, 0.25);
  CHECK_FALSE(rdeg.passed);
  CHECK(rdeg.reason == "degenerate");
}

TEST_CASE("redundancy filter boundaries") {
  // y of 10 tokens, 4 shared -> 0.40 rejects
  auto x = "s0 s1 s2 s3 other tokens here";
  auto rej = redundancy_filter(tp("p", x, "s0 s1 s2 s3 y4 y5 y6 y7 y8 y9"), 0.30);
  CHECK_FALSE(rej.passed);
  CHECK(*rej.score == doctest::Approx(0.40));
  // 3 of 10 -> 0.30 passes (not "more than 30%")
  auto pass = redundancy_filter(tp("p", x, "s0 s1 s2 y3 y4 y5 y6 y7 y8 y9"), 0.30);
  CHECK(pass.passed);
  CHECK(*pass.score == doctest::Approx(0.30));
  // disjoint -> 0
  auto clean = redundancy_filter(tp("p", x, "a b c"), 0.30);
  CHECK(clean.passed);
  CHECK(*clean.score == doctest::Approx(0.0));
  // y == x -> fraction 1, always rejected below threshold 1
  auto dup = redundancy_filter(tp("p", x, x), 0.99);
  CHECK_FALSE(dup.passed);
  CHECK(*dup.score == doctest::Approx(1.0));
  // empty y degenerate
  CHECK_FALSE(redundancy_filter(tp("p", x, ""), 0.30).passed);
}

TEST_CASE("numeric consistency filter") {
  CHECK(numeric_consistency_filter(tp("p", "there were 19 cases", "19 cases were reported"))
            .passed);
  CHECK_FALSE(
      numeric_consistency_filter(tp("p", "there were 19 cases", "20 cases were reported"))
          .passed);
  CHECK(numeric_consistency_filter(tp("p", "it mentions 19", "no digits at all")).passed);
  // normalization: 5 == 5.0, thousands separators stripped
  CHECK(numeric_consistency_filter(tp("p", "value is 5", "value equals 5.0")).passed);
  CHECK(numeric_consistency_filter(tp("p", "total 1,234 units", "exactly 1234 units")).passed);
  CHECK(extract_numbers("19 then 5.0 then 1,234") == std::vector<double>{19.0, 5.0, 1234.0});
}

TEST_CASE("grammar filter categories and fail-closed") {
  auto pair = tp("p", "ok text", "marker text");
  CategoryChecker grammar_checker("marker", GrammarChecker::Category::grammar);
  auto v = grammar_filter(pair, grammar_checker, 0);
  CHECK_FALSE(v.passed);
  v = grammar_filter(pair, grammar_checker, 1);
  CHECK(v.passed);

  CategoryChecker style_checker("marker", GrammarChecker::Category::style);
  CHECK(grammar_filter(pair, style_checker, 0).passed);

  CategoryChecker clean_checker("absent", GrammarChecker::Category::grammar);
  CHECK(grammar_filter(pair, clean_checker, 0).passed);

  ThrowingChecker broken;
  v = grammar_filter(pair, broken, 0);
  CHECK_FALSE(v.passed);
  CHECK(v.reason == "checker_error");
}

TEST_CASE("diversity dedup fixtures") {
  MapNliScorer nli(0.0);
  // two identical pairs: scorer sees 1.0 both directions
  auto a = tp("a", "same x", "same y");
  auto b = tp("b", "same x", "same y");
  nli.set("same x", "same x", 1.0);
  nli.set("same y", "same y", 1.0);
  auto r = diversity_dedup(std::vector<TextPair>{a, b}, nli, 0.95);
  CHECK(r.retained.size() == 1);
  CHECK(r.dropped.size() == 1);
  CHECK(r.retained[0].pair_id == "a");  // tie -> lowest pair_id

  // three mutually unrelated pairs: all retained
  MapNliScorer cold(0.0);
  auto p1 = tp("p1", "x one", "y one");
  auto p2 = tp("p2", "x two", "y two");
  auto p3 = tp("p3", "x three", "y three");
  r = diversity_dedup(std::vector<TextPair>{p1, p2, p3}, cold, 0.95);
  CHECK(r.retained.size() == 3);
}

TEST_CASE("dedup chain component matches brute-force enumeration") {
  // chain p1 -> p2, p2 -> p3 above threshold: one weak component of 3
  MapNliScorer nli(0.0);
  auto p1 = tp("p1", "x one", "y one");
  auto p2 = tp("p2", "x two", "y two");
  auto p3 = tp("p3", "x three", "y three");
  nli.set("x one", "x two", 1.0);
  nli.set("y one", "y two", 1.0);
  nli.set("x two", "x three", 1.0);
  nli.set("y two", "y three", 1.0);

  // brute-force oracle over the same edge predicate
  std::vector<TextPair> pairs = {p1, p2, p3};
  std::vector<std::vector<bool>> adj(3, std::vector<bool>(3, false));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      if (i != j && nli.score(pairs[i].x, pairs[j].x) >= 0.95 &&
          nli.score(pairs[i].y, pairs[j].y) >= 0.95) {
        adj[i][j] = true;
      }
    }
  }
  const auto components = oracles::components_oracle(adj);
  REQUIRE(components.size() == 1);
  REQUIRE(components[0].size() == 3);

  const auto r = diversity_dedup(pairs, nli, 0.95);
  CHECK(r.retained.size() == components.size());
  CHECK(r.dropped.size() == 2);
}

TEST_CASE("dedup keeps the highest-entailment representative") {
  MapNliScorer nli(0.0);
  auto a = tp("a", "same x", "same y");
  auto b = tp("b", "same x", "same y");
  nli.set("same x", "same x", 1.0);
  nli.set("same y", "same y", 1.0);
  std::map<std::string, double> scores = {{"a", 0.75}, {"b", 0.9}};
  const auto r = diversity_dedup(std::vector<TextPair>{a, b}, nli, 0.95, scores);
  REQUIRE(r.retained.size() == 1);
  CHECK(r.retained[0].pair_id == "b");
}

TEST_CASE("12-pair fixture: every filter rejects exactly its designated pair") {
  ChainFixture fx;
  REQUIRE(fx.pairs.size() == 12);
  ChainScorers scorers{&fx.nli, &fx.grammar};
  auto [retained, report] = run_filter_chain(fx.pairs, TaskKind::paraphrase, scorers,
                                             fx.thresholds);
  CHECK(report.input_count == 12);
  CHECK(report.retained_count == 6);
  CHECK(retained.size() == 6);
  CHECK(report.rejections(FilterName::length) == 1);
  CHECK(report.rejections(FilterName::redundancy) == 1);
  CHECK(report.rejections(FilterName::numeric) == 1);
  CHECK(report.rejections(FilterName::grammar) == 1);
  CHECK(report.rejections(FilterName::entailment) == 1);
  CHECK(report.rejections(FilterName::diversity) == 1);
  CHECK(report.sampling_efficiency == doctest::Approx(0.5));

  std::set<std::string> ids;
  for (const auto& p : retained) ids.insert(p.pair_id);
  CHECK(ids == std::set<std::string>{"keep0", "keep1", "keep2", "keep3", "keep4", "keep5"});

  // report arithmetic: retained + sum(rejections) == input
  std::size_t total_rejected = 0;
  for (const auto& [name, count] : report.per_filter_rejections) total_rejected += count;
  CHECK(report.retained_count + total_rejected == report.input_count);
}

TEST_CASE("chain is invariant under input permutation") {
  ChainFixture fx;
  ChainScorers scorers{&fx.nli, &fx.grammar};
  auto [base_retained, base_report] =
      run_filter_chain(fx.pairs, TaskKind::paraphrase, scorers, fx.thresholds);
  std::set<std::string> base_ids;
  for (const auto& p : base_retained) base_ids.insert(p.pair_id);

  Rng rng(31337);
  auto shuffled = fx.pairs;
  for (int trial = 0; trial < 20; ++trial) {
    for (std::size_t i = shuffled.size(); i > 1; --i) {
      std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
    }
    auto [retained, report] =
        run_filter_chain(shuffled, TaskKind::paraphrase, scorers, fx.thresholds);
    std::set<std::string> ids;
    for (const auto& p : retained) ids.insert(p.pair_id);
    CHECK(ids == base_ids);
    CHECK(report.per_filter_rejections == base_report.per_filter_rejections);
  }
}

TEST_CASE("chain output is a subset of input and pairs are unchanged") {
  ChainFixture fx;
  ChainScorers scorers{&fx.nli, &fx.grammar};
  auto [retained, report] =
      run_filter_chain(fx.pairs, TaskKind::paraphrase, scorers, fx.thresholds);
  for (const auto& p : retained) {
    auto it = std::find_if(fx.pairs.begin(), fx.pairs.end(),
                           [&](const TextPair& q) { return q.pair_id == p.pair_id; });
    REQUIRE(it != fx.pairs.end());
    CHECK(*it == p);
  }
}

TEST_CASE("parallel chain equals serial chain") {
  ChainFixture fx;
  ChainScorers scorers{&fx.nli, &fx.grammar};
  auto [pr, prep] = run_filter_chain(fx.pairs, TaskKind::paraphrase, scorers, fx.thresholds, true);
  auto [sr, srep] = run_filter_chain_serial(fx.pairs, TaskKind::paraphrase, scorers,
                                            fx.thresholds);
  REQUIRE(pr.size() == sr.size());
  for (std::size_t i = 0; i < pr.size(); ++i) CHECK(pr[i] == sr[i]);
  CHECK(prep.per_filter_rejections == srep.per_filter_rejections);
}

TEST_CASE("empty input yields flagged zero-efficiency report") {
  MapNliScorer nli(0.5);
  RuleGrammarChecker grammar;
  ChainScorers scorers{&nli, &grammar};
  auto [retained, report] =
      run_filter_chain(std::vector<TextPair>{}, TaskKind::paraphrase, scorers, FilterThresholds{});
  CHECK(retained.empty());
  CHECK(report.degenerate_empty_input);
  CHECK(report.sampling_efficiency == 0.0);
}

TEST_CASE("raising the forward threshold never grows the entailment pass set") {
  Rng rng(17);
  // random mock scores on 40 pairs
  std::vector<TextPair> pairs;
  MapNliScorer nli(0.0);
  for (int i = 0; i < 40; ++i) {
    auto p = tp("p" + std::to_string(i), "x" + std::to_string(i), "y" + std::to_string(i));
    nli.set(p.x, p.y, rng.uniform());
    nli.set(p.y, p.x, rng.uniform());
    pairs.push_back(std::move(p));
  }
  std::set<std::string> prev_pass;
  bool first = true;
  for (double fwd : {0.1, 0.3, 0.5, 0.7, 0.9, 0.99}) {
    std::set<std::string> pass;
    for (const auto& p : pairs) {
      if (entailment_filter(p, nli, fwd, 0.4).passed) pass.insert(p.pair_id);
    }
    if (!first) {
      for (const auto& id : pass) CHECK(prev_pass.count(id) == 1);
    }
    prev_pass = pass;
    first = false;
  }
}

TEST_CASE("filter report json round-trip") {
  ChainFixture fx;
  ChainScorers scorers{&fx.nli, &fx.grammar};
  auto [retained, report] =
      run_filter_chain(fx.pairs, TaskKind::paraphrase, scorers, fx.thresholds);
  const auto j = report.to_json();
  CHECK(j.at("input_count") == 12);
  CHECK(j.at("retained_count") == 6);
  CHECK(j.at("per_filter_rejections").at("length") == 1);
  CHECK(j.contains("thresholds"));
  const auto back = FilterChainReport::from_json(j);
  CHECK(back.input_count == report.input_count);
  CHECK(back.per_filter_rejections == report.per_filter_rejections);
  CHECK(back.sampling_efficiency == doctest::Approx(report.sampling_efficiency));
}

TEST_CASE("overlap scorer sanity") {
  OverlapNliScorer nli;
  CHECK(nli.score("a b c", "a b c") == doctest::Approx(1.0));
  CHECK(nli.score("a b c d", "a b") == doctest::Approx(1.0));
  CHECK(nli.score("a b", "a b c d") == doctest::Approx(0.5));
  CHECK(nli.score("x y", "a b") == doctest::Approx(0.0));
}

TEST_CASE("rule grammar checker findings") {
  RuleGrammarChecker checker;
  CHECK(checker.check("a clean sentence.").empty());
  const auto doubled = checker.check("the the word");
  REQUIRE(doubled.size() == 1);
  CHECK(doubled[0].category == GrammarChecker::Category::grammar);
  const auto quotes = checker.check("an \"unbalanced quote");
  REQUIRE(quotes.size() == 1);
  CHECK(quotes[0].category == GrammarChecker::Category::punctuation);

  RuleGrammarChecker with_lexicon({"the", "word", "is", "fine"});
  const auto spelling = with_lexicon.check("the wrod is fine");
  REQUIRE(spelling.size() == 1);
  CHECK(spelling[0].category == GrammarChecker::Category::spelling);
}
