#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "dptext/synthesis.hpp"

using namespace dptext;
using namespace dptext::synthesis;

namespace {

struct Fixture {
  backend::StubBackend stub;
  backend::ModelHandle handle = stub.handle();
  SamplingConfig cfg;
};

}  // namespace

TEST_CASE("worked example: prefix to context to completions to pairs") {
  Fixture f;
  f.cfg.seed = 0;
  const std::vector<Prefix> prefixes = {{"NYC (Reuters) --", "news"}};
  const auto contexts = generate_contexts(prefixes, 1, f.cfg, f.stub, f.handle);
  REQUIRE(contexts.size() == 1);
  CHECK(contexts[0].text == "The mayor announced a new climate initiative.");
  CHECK(contexts[0].prefix.text == "NYC (Reuters) --");

  SamplingConfig ccfg = f.cfg;
  ccfg.num_completions = 3;
  const auto cs = generate_completions(contexts[0], ccfg, f.stub, f.handle);
  REQUIRE(cs.completions.size() == 3);
  CHECK(cs.completions[0] ==
        "The initiative focuses on creating new parks, reducing emissions, and implementing "
        "stricter environmental regulations to combat climate change.");
  CHECK(cs.completions[1] == "The plan includes new parks and emission controls.");
  CHECK(cs.completions[2] == "New parks and stricter emission laws are planned.");

  const auto pairs = make_candidate_pairs(cs, corpus::TaskKind::paraphrase, "stub-lm");
  REQUIRE(pairs.size() == 3);  // (a,b), (a,c), (b,c)
  CHECK(pairs[0].x == cs.completions[0]);
  CHECK(pairs[0].y == cs.completions[1]);
  CHECK(pairs[1].x == cs.completions[0]);
  CHECK(pairs[1].y == cs.completions[2]);
  CHECK(pairs[2].x == cs.completions[1]);
  CHECK(pairs[2].y == cs.completions[2]);
}

TEST_CASE("generate_contexts validates n_per_prefix") {
  Fixture f;
  const std::vector<Prefix> prefixes = {{"prefix", ""}};
  CHECK_THROWS_AS(generate_contexts(prefixes, 0, f.cfg, f.stub, f.handle), ConfigError);
}

TEST_CASE("context generation is deterministic and complete") {
  Fixture f;
  f.cfg.seed = 42;
  const std::vector<Prefix> prefixes = {{"first prefix", ""}, {"second prefix", ""}};
  const auto a = generate_contexts(prefixes, 3, f.cfg, f.stub, f.handle);
  const auto b = generate_contexts(prefixes, 3, f.cfg, f.stub, f.handle);
  REQUIRE(a.size() == 6);
  REQUIRE(b.size() == 6);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].text == b[i].text);
    CHECK(a[i].context_id == b[i].context_id);
    CHECK(a[i].seed == b[i].seed);
  }
  // ordering is (prefix index, context index)
  CHECK(a[0].context_id == "c0-0");
  CHECK(a[3].context_id == "c1-0");
}

TEST_CASE("backend failures are skipped and counted; all-failed is fatal") {
  // scripted backend: two good outputs then exhaustion
  backend::ScriptedBackend two_then_fail({"context one", "context two"});
  auto handle = two_then_fail.handle();
  SamplingConfig cfg;
  ContextGenReport report;
  const std::vector<Prefix> prefixes = {{"p", ""}};
  const auto contexts = generate_contexts(prefixes, 4, cfg, two_then_fail, handle, &report);
  CHECK(contexts.size() == 2);
  CHECK(report.requested == 4);
  CHECK(report.generated == 2);
  CHECK(report.failed == 2);

  backend::ScriptedBackend always_fail({});
  auto handle2 = always_fail.handle();
  CHECK_THROWS_AS(generate_contexts(prefixes, 2, cfg, always_fail, handle2), PhaseError);
}

TEST_CASE("generate_completions drops empties and requires two completions") {
  backend::ScriptedBackend with_empty({"good completion one", "", "good completion two"});
  auto handle = with_empty.handle();
  SamplingConfig cfg;
  cfg.num_completions = 3;
  Context ctx{"c0", Prefix{"p", ""}, "context text", 0};
  const auto cs = generate_completions(ctx, cfg, with_empty, handle);
  CHECK(cs.completions.size() == 2);
  CHECK(cs.dropped_empty == 1);
  CHECK(cs.usable());

  SamplingConfig bad = cfg;
  bad.num_completions = 1;
  CHECK_THROWS_AS(generate_completions(ctx, bad, with_empty, handle), ConfigError);

  backend::ScriptedBackend mostly_empty({"", "", "only one good"});
  auto handle2 = mostly_empty.handle();
  const auto cs2 = generate_completions(ctx, cfg, mostly_empty, handle2);
  CHECK_FALSE(cs2.usable());
  CHECK(cs2.dropped_empty == 2);
}

TEST_CASE("completions are truncated at max_tokens") {
  std::string long_text;
  for (int i = 0; i < 40; ++i) long_text += "word" + std::to_string(i) + " ";
  backend::ScriptedBackend be({long_text, long_text});
  auto handle = be.handle();
  SamplingConfig cfg;
  cfg.num_completions = 2;
  cfg.max_tokens = 10;
  Context ctx{"c0", Prefix{"p", ""}, "context", 0};
  const auto cs = generate_completions(ctx, cfg, be, handle);
  for (const auto& c : cs.completions) CHECK(corpus::token_count(c) <= 10);
}

TEST_CASE("pair counts follow C(k,2) for all k in 2..16") {
  for (std::size_t k = 2; k <= 16; ++k) {
    CompletionSet cs;
    cs.context_id = "c";
    for (std::size_t i = 0; i < k; ++i) {
      cs.completions.push_back("completion number " + std::to_string(i));
    }
    const auto pairs = make_candidate_pairs(cs, corpus::TaskKind::paraphrase, "g");
    CHECK(pairs.size() == k * (k - 1) / 2);
    // no empty members, unique ids
    std::set<std::string> ids;
    for (const auto& p : pairs) {
      CHECK_FALSE(p.x.empty());
      CHECK_FALSE(p.y.empty());
      ids.insert(p.pair_id);
    }
    CHECK(ids.size() == pairs.size());
  }
}

TEST_CASE("summarization orients longer text as x, ties keep order") {
  CompletionSet cs;
  cs.context_id = "c";
  cs.completions = {"one two three", "one two three four five", "alpha beta gamma"};
  const auto pairs = make_candidate_pairs(cs, corpus::TaskKind::summarization, "g");
  REQUIRE(pairs.size() == 3);
  // (0,1): completion 1 is longer -> becomes x
  CHECK(pairs[0].x == "one two three four five");
  CHECK(pairs[0].y == "one two three");
  // (0,2): equal token counts -> earlier stays x
  CHECK(pairs[1].x == "one two three");
  CHECK(pairs[1].y == "alpha beta gamma");
  // (1,2): completion 1 longer -> stays x
  CHECK(pairs[2].x == "one two three four five");
  CHECK(pairs[2].y == "alpha beta gamma");
}

TEST_CASE("synthesis stage is byte-reproducible under a fixed seed") {
  Fixture f;
  f.cfg.seed = 7;
  f.cfg.num_completions = 3;
  const std::vector<Prefix> prefixes = {{"alpha", ""}, {"beta", ""}};
  auto run = [&]() {
    std::string transcript;
    const auto contexts = generate_contexts(prefixes, 2, f.cfg, f.stub, f.handle);
    for (const auto& ctx : contexts) {
      const auto cs = generate_completions(ctx, f.cfg, f.stub, f.handle);
      for (const auto& p : make_candidate_pairs(cs, corpus::TaskKind::paraphrase, "stub-lm")) {
        transcript += p.pair_id + "|" + p.x + "|" + p.y + "\n";
      }
    }
    return transcript;
  };
  CHECK(run() == run());
}

TEST_CASE("prefix file loading") {
  const auto path = std::filesystem::temp_directory_path() / "prefixes.txt";
  std::ofstream(path) << "NYC (Reuters) --\tnews\n\nLONDON (AP) --\n";
  const auto prefixes = load_prefixes(path);
  REQUIRE(prefixes.size() == 2);
  CHECK(prefixes[0].text == "NYC (Reuters) --");
  CHECK(prefixes[0].domain_tag == "news");
  CHECK(prefixes[1].text == "LONDON (AP) --");
  CHECK(prefixes[1].domain_tag.empty());
}
