#include "dptext/corpus.hpp"

#include <cctype>
#include <chrono>
#include <fstream>
#include <sstream>

namespace dptext::corpus {

namespace {

bool is_word_char(unsigned char c) {
  // Bytes >= 0x80 are UTF-8 continuation/lead bytes; treat them as letters so
  // multibyte words stay intact.
  return std::isalnum(c) || c >= 0x80;
}

std::string read_file_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Minimal RFC-4180 style CSV row parser (quotes, embedded commas/newlines are
// not supported across lines; the dataset format is one record per line).
std::vector<std::string> parse_csv_row(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

}  // namespace

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::test: return "test";
    case Split::validation: return "validation";
  }
  return "train";
}

std::string to_string(TaskKind t) {
  return t == TaskKind::summarization ? "summarization" : "paraphrase";
}

std::string to_string(Phase p) {
  switch (p) {
    case Phase::synthesis: return "synthesis";
    case Phase::distillation: return "distillation";
    case Phase::private_data: return "private";
  }
  return "synthesis";
}

Split split_from_string(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  if (s == "validation" || s == "valid" || s == "dev") return Split::validation;
  throw ConfigError("unknown split: " + std::string(s));
}

TaskKind task_from_string(std::string_view s) {
  if (s == "summarization") return TaskKind::summarization;
  if (s == "paraphrase") return TaskKind::paraphrase;
  throw ConfigError("unknown task: " + std::string(s));
}

Phase phase_from_string(std::string_view s) {
  if (s == "synthesis") return Phase::synthesis;
  if (s == "distillation") return Phase::distillation;
  if (s == "private") return Phase::private_data;
  throw ConfigError("unknown phase: " + std::string(s));
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&]() {
    if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  };
  const std::size_t n = text.size();
  for (std::size_t i = 0; i < n; ++i) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      flush();
      continue;
    }
    if (is_word_char(c)) {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
      continue;
    }
    // Punctuation: keep it inside a word only when flanked by word chars.
    bool prev_word = i > 0 && is_word_char(static_cast<unsigned char>(text[i - 1]));
    bool next_word = i + 1 < n && is_word_char(static_cast<unsigned char>(text[i + 1]));
    if (prev_word && next_word) {
      cur.push_back(static_cast<char>(c));
    } else {
      flush();
      tokens.emplace_back(1, static_cast<char>(c));
    }
  }
  flush();
  return tokens;
}

std::size_t token_count(std::string_view text) { return tokenize(text).size(); }

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::string truncate_to_tokens(std::string_view text, std::size_t n) {
  auto toks = tokenize(text);
  if (toks.size() > n) toks.resize(n);
  return join_tokens(toks);
}

nlohmann::json pair_to_json(const TextPair& p) {
  nlohmann::json j = p.extra.is_object() ? p.extra : nlohmann::json::object();
  j["pair_id"] = p.pair_id;
  j["x"] = p.x;
  j["y"] = p.y;
  if (p.context_id) {
    j["context_id"] = *p.context_id;
  } else {
    j.erase("context_id");
  }
  j["phase"] = to_string(p.phase);
  j["generator_id"] = p.generator_id;
  return j;
}

TextPair pair_from_json(const nlohmann::json& j, std::size_t* unknown_fields) {
  TextPair p;
  p.pair_id = j.at("pair_id").get<std::string>();
  p.x = j.at("x").get<std::string>();
  p.y = j.at("y").get<std::string>();
  if (j.contains("context_id") && !j["context_id"].is_null()) {
    p.context_id = j["context_id"].get<std::string>();
  }
  p.phase = phase_from_string(j.at("phase").get<std::string>());
  p.generator_id = j.at("generator_id").get<std::string>();
  static const char* known[] = {"pair_id", "x", "y", "context_id", "phase", "generator_id"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool is_known = false;
    for (const char* k : known) {
      if (it.key() == k) {
        is_known = true;
        break;
      }
    }
    if (!is_known) {
      p.extra[it.key()] = it.value();
      if (unknown_fields) ++*unknown_fields;
    }
  }
  if (p.x.empty() || p.y.empty()) {
    throw ConfigError("pair " + p.pair_id + " has empty x or y");
  }
  return p;
}

Dataset ingest_dataset(const std::filesystem::path& path, DatasetFormat format, TaskKind task) {
  const std::string content = read_file_or_throw(path);
  Dataset ds;
  ds.task = task;

  std::istringstream in(content);
  std::string line;
  std::size_t line_no = 0;
  std::size_t byte_offset = 0;
  std::vector<std::string> header;
  std::size_t records = 0;

  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t line_start = byte_offset;
    byte_offset += line.size() + 1;
    if (line.empty()) continue;

    if (format == DatasetFormat::csv && header.empty()) {
      header = parse_csv_row(line);
      continue;
    }

    Document d;
    if (format == DatasetFormat::jsonl) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("malformed json at line " + std::to_string(line_no) + ": " + e.what(),
                         line_no, line_start);
      }
      if (!j.contains("source_text") || !j["source_text"].is_string() ||
          j["source_text"].get<std::string>().empty()) {
        throw ParseError("record at line " + std::to_string(line_no) + " missing source_text",
                         line_no, line_start);
      }
      d.id = j.contains("id") ? j["id"].get<std::string>() : std::to_string(line_no);
      d.source_text = j["source_text"].get<std::string>();
      if (j.contains("reference_text") && !j["reference_text"].is_null()) {
        d.reference_text = j["reference_text"].get<std::string>();
      }
      d.split = j.contains("split") ? split_from_string(j["split"].get<std::string>()) : Split::train;
    } else {
      auto cells = parse_csv_row(line);
      auto col = [&](const std::string& name) -> std::optional<std::string> {
        for (std::size_t i = 0; i < header.size() && i < cells.size(); ++i) {
          if (header[i] == name) return cells[i];
        }
        return std::nullopt;
      };
      auto src = col("source_text");
      if (!src || src->empty()) {
        throw ParseError("record at line " + std::to_string(line_no) + " missing source_text",
                         line_no, line_start);
      }
      d.source_text = *src;
      d.id = col("id").value_or(std::to_string(line_no));
      if (auto ref = col("reference_text"); ref && !ref->empty()) d.reference_text = *ref;
      d.split = split_from_string(col("split").value_or("train"));
    }
    ++records;
    ds.split_counts[d.split]++;
    ds.documents.push_back(std::move(d));
  }

  if (records == 0) {
    throw ConfigError("empty dataset: " + path.string());
  }
  return ds;
}

std::size_t write_pairs(std::span<const TextPair> pairs, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write file: " + path.string());
  for (const auto& p : pairs) {
    out << pair_to_json(p).dump() << '\n';
  }
  if (!out) throw ConfigError("write failed: " + path.string());
  return pairs.size();
}

std::vector<TextPair> read_pairs(const std::filesystem::path& path, PairReadReport* report) {
  const std::string content = read_file_or_throw(path);
  std::vector<TextPair> pairs;
  std::istringstream in(content);
  std::string line;
  std::size_t line_no = 0;
  std::size_t byte_offset = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t line_start = byte_offset;
    byte_offset += line.size() + 1;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("pair file schema error at byte " + std::to_string(line_start + e.byte) +
                           " (line " + std::to_string(line_no) + ")",
                       line_no, line_start + e.byte);
    }
    std::size_t unknown = 0;
    try {
      pairs.push_back(pair_from_json(j, &unknown));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("pair file schema error at line " + std::to_string(line_no) + ": " + e.what(),
                       line_no, line_start);
    }
    if (report) report->unknown_field_warnings += unknown;
  }
  if (report) report->pairs_read = pairs.size();
  return pairs;
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json j;
  j["run_id"] = run_id;
  j["config_digest"] = config_digest;
  j["phase_outputs"] = phase_outputs;
  j["seed"] = seed;
  j["created_at"] = created_at;
  return j;
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  RunManifest m;
  m.run_id = j.at("run_id").get<std::string>();
  m.config_digest = j.at("config_digest").get<std::string>();
  if (j.contains("phase_outputs")) {
    m.phase_outputs = j["phase_outputs"].get<std::map<std::string, std::string>>();
  }
  m.seed = j.at("seed").get<std::uint64_t>();
  m.created_at = j.value("created_at", "");
  return m;
}

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

}  // namespace dptext::corpus
