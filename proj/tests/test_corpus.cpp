#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "dptext/corpus.hpp"

using namespace dptext;
using corpus::TextPair;

namespace {

std::filesystem::path temp_file(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path, std::ios::binary);
  out << content;
  return path;
}

TextPair make_pair(const std::string& id, const std::string& x, const std::string& y) {
  TextPair p;
  p.pair_id = id;
  p.x = x;
  p.y = y;
  p.phase = corpus::Phase::synthesis;
  p.generator_id = "g";
  return p;
}

}  // namespace

TEST_CASE("tokenize basics") {
  CHECK(corpus::tokenize("").empty());
  CHECK(corpus::tokenize("The mayor announced a new climate initiative.") ==
        std::vector<std::string>{"the", "mayor", "announced", "a", "new", "climate", "initiative",
                                 "."});
  CHECK(corpus::tokenize("a  a") == std::vector<std::string>{"a", "a"});
}

TEST_CASE("tokenize keeps intra-word punctuation") {
  CHECK(corpus::tokenize("didn't stop") == std::vector<std::string>{"didn't", "stop"});
  CHECK(corpus::tokenize("three-minute alert") == std::vector<std::string>{"three-minute", "alert"});
  CHECK(corpus::tokenize("about 5.0 or 1,234 items") ==
        std::vector<std::string>{"about", "5.0", "or", "1,234", "items"});
  CHECK(corpus::tokenize("word, and (this)") ==
        std::vector<std::string>{"word", ",", "and", "(", "this", ")"});
}

TEST_CASE("tokenize is idempotent under rejoin") {
  const std::vector<std::string> samples = {
      "The mayor announced a new climate initiative.",
      "NYC (Reuters) -- officials said 1,234 people marched.",
      "He didn't say why; she asked \"why not?\"",
      "a  a   b\tc\nd",
  };
  for (const auto& s : samples) {
    const auto toks = corpus::tokenize(s);
    const auto again = corpus::tokenize(corpus::join_tokens(toks));
    CHECK(again == toks);
  }
}

TEST_CASE("ingest jsonl counts splits and validates") {
  const auto path = temp_file(
      "ds.jsonl",
      R"({"id":"1","source_text":"alpha beta","reference_text":"alpha","split":"train"})"
      "\n"
      R"({"id":"2","source_text":"gamma delta","split":"test"})"
      "\n"
      R"({"id":"3","source_text":"epsilon","split":"train"})"
      "\n");
  const auto ds = corpus::ingest_dataset(path, corpus::DatasetFormat::jsonl,
                                         corpus::TaskKind::summarization);
  CHECK(ds.documents.size() == 3);
  CHECK(ds.count(corpus::Split::train) == 2);
  CHECK(ds.count(corpus::Split::test) == 1);
  CHECK(ds.documents[0].reference_text.has_value());
  CHECK_FALSE(ds.documents[1].reference_text.has_value());
}

TEST_CASE("ingest empty file raises empty-dataset error") {
  const auto path = temp_file("empty.jsonl", "");
  CHECK_THROWS_AS(
      corpus::ingest_dataset(path, corpus::DatasetFormat::jsonl, corpus::TaskKind::summarization),
      ConfigError);
}

TEST_CASE("ingest reports the offending record") {
  const auto path = temp_file("bad.jsonl",
                              R"({"id":"1","source_text":"ok"})"
                              "\n"
                              R"({"id":"2"})"
                              "\n"
                              R"({"id":"3","source_text":"ok"})"
                              "\n");
  try {
    corpus::ingest_dataset(path, corpus::DatasetFormat::jsonl, corpus::TaskKind::summarization);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("ingest csv") {
  const auto path = temp_file("ds.csv",
                              "id,source_text,reference_text,split\n"
                              "1,\"alpha, beta\",alpha,train\n"
                              "2,gamma,,test\n");
  const auto ds =
      corpus::ingest_dataset(path, corpus::DatasetFormat::csv, corpus::TaskKind::paraphrase);
  CHECK(ds.documents.size() == 2);
  CHECK(ds.documents[0].source_text == "alpha, beta");
  CHECK_FALSE(ds.documents[1].reference_text.has_value());
}

TEST_CASE("pair store round-trip is the identity") {
  std::vector<TextPair> pairs;
  for (int i = 0; i < 100; ++i) {
    auto p = make_pair("p" + std::to_string(i), "x " + std::to_string(i * 7),
                       "y " + std::to_string(i * 13));
    if (i % 3 == 0) p.context_id = "ctx" + std::to_string(i);
    if (i % 2 == 0) p.phase = corpus::Phase::distillation;
    pairs.push_back(p);
  }
  const auto path = std::filesystem::temp_directory_path() / "pairs.jsonl";
  CHECK(corpus::write_pairs(pairs, path) == pairs.size());
  const auto back = corpus::read_pairs(path);
  REQUIRE(back.size() == pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) CHECK(back[i] == pairs[i]);
}

TEST_CASE("pair store round-trip survives unicode content") {
  Rng rng(20240817);
  auto random_text = [&]() {
    static const std::vector<std::string> pieces = {
        "héllo", "naïve", "日本語", "ü", "emoji 🌊", "tab\tchar", "quote\"inside", "\\back",
        "plain", "über-maß"};
    std::string s = pieces[rng.below(pieces.size())];
    for (int k = 0; k < 3; ++k) {
      s += " " + pieces[rng.below(pieces.size())];
    }
    return s;
  };
  std::vector<TextPair> pairs;
  for (int i = 0; i < 60; ++i) {
    pairs.push_back(make_pair("u" + std::to_string(i), random_text(), random_text()));
  }
  const auto path = std::filesystem::temp_directory_path() / "pairs_unicode.jsonl";
  corpus::write_pairs(pairs, path);
  const auto back = corpus::read_pairs(path);
  REQUIRE(back.size() == pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) CHECK(back[i] == pairs[i]);
}

TEST_CASE("read_pairs preserves unknown fields and counts warnings") {
  const auto path = temp_file(
      "extra.jsonl",
      R"({"pair_id":"a","x":"xx","y":"yy","phase":"synthesis","generator_id":"g","custom":42})"
      "\n");
  corpus::PairReadReport report;
  const auto pairs = corpus::read_pairs(path, &report);
  REQUIRE(pairs.size() == 1);
  CHECK(report.unknown_field_warnings == 1);
  CHECK(pairs[0].extra.at("custom") == 42);

  // write-back keeps the unknown field
  const auto path2 = std::filesystem::temp_directory_path() / "extra2.jsonl";
  corpus::write_pairs(pairs, path2);
  const auto back = corpus::read_pairs(path2);
  CHECK(back[0].extra.at("custom") == 42);
}

TEST_CASE("read_pairs reports byte offset on truncated json") {
  const auto path = temp_file(
      "trunc.jsonl",
      R"({"pair_id":"a","x":"xx","y":"yy","phase":"synthesis","generator_id":"g"})"
      "\n"
      R"({"pair_id":"b","x":"trunc)");
  try {
    corpus::read_pairs(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
    CHECK(e.byte_offset() > 70);  // inside the second line
  }
}

TEST_CASE("manifest round-trip") {
  corpus::RunManifest m;
  m.run_id = "r1";
  m.config_digest = "abc";
  m.phase_outputs["p1"] = "runs/r1/p1";
  m.seed = 7;
  m.created_at = corpus::now_iso8601();
  const auto j = m.to_json();
  const auto back = corpus::RunManifest::from_json(j);
  CHECK(back.run_id == m.run_id);
  CHECK(back.config_digest == m.config_digest);
  CHECK(back.phase_outputs == m.phase_outputs);
  CHECK(back.seed == m.seed);
}
