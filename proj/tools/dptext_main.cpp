#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dptext/backend.hpp"
#include "dptext/config.hpp"
#include "dptext/corpus.hpp"
#include "dptext/filterbank.hpp"
#include "dptext/judge.hpp"
#include "dptext/metrics.hpp"
#include "dptext/pipeline.hpp"
#include "dptext/quality.hpp"
#include "dptext/synthesis.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitPhase = 3;
constexpr int kExitExternal = 4;

using namespace dptext;

struct CommonArgs {
  std::string config_path;
  bool resume = false;
  bool dry_run = false;
  std::int64_t seed_override = -1;
};

cfg::RunConfig load_with_overrides(const CommonArgs& args) {
  cfg::RunConfig config = cfg::load_config(args.config_path);
  if (args.seed_override >= 0) config.seed = static_cast<std::uint64_t>(args.seed_override);
  return config;
}

struct Wiring {
  backend::StubBackend stub;
  backend::DeskBackend desk;
  filters::OverlapNliScorer nli;
  filters::RuleGrammarChecker grammar;
  std::unique_ptr<pipeline::TrackedDataset> dataset;
  pipeline::PipelineEnv env;
};

std::unique_ptr<Wiring> make_wiring(const cfg::RunConfig& config, bool need_dataset) {
  auto w = std::make_unique<Wiring>();
  if (need_dataset) {
    auto ds = corpus::ingest_dataset(config.dataset_path, config.dataset_format, config.task);
    w->dataset = std::make_unique<pipeline::TrackedDataset>(std::move(ds));
  }
  w->env.generator = &w->stub;
  w->env.generator_handle = w->stub.handle();
  w->env.trainer = &w->desk;
  w->env.nli = &w->nli;
  w->env.grammar = &w->grammar;
  w->env.private_dataset = w->dataset.get();
  return w;
}

int run_phases(const CommonArgs& args, int last_phase) {
  const cfg::RunConfig config = load_with_overrides(args);
  auto settings = cfg::to_run_settings(config);
  if (args.dry_run) {
    nlohmann::json plan;
    plan["config_digest"] = config.digest();
    plan["phases"] = last_phase == 1 ? "p1" : last_phase == 2 ? "p1,p2" : "p1,p2,p3";
    plan["output_dir"] = config.output_dir.string();
    std::cout << plan.dump(2) << '\n';
    return kExitOk;
  }
  auto wiring = make_wiring(config, /*need_dataset=*/last_phase >= 2);
  pipeline::Runner runner(settings, wiring->env, config.output_dir);
  runner.run_phase1();
  if (last_phase >= 2) runner.run_phase2();
  if (last_phase >= 3) {
    runner.run_phase3();
    runner.run_all();  // phases cached; writes run_summary.json
  }
  std::cout << "run directory: " << runner.run_dir().string() << '\n';
  return kExitOk;
}

int cmd_synth(const CommonArgs& args) {
  const cfg::RunConfig config = load_with_overrides(args);
  auto settings = cfg::to_run_settings(config);
  if (args.dry_run) {
    std::cout << "would synthesize " << settings.p1_synth.prefixes.size() << " x "
              << settings.p1_synth.n_per_prefix << " contexts\n";
    return kExitOk;
  }
  auto wiring = make_wiring(config, false);
  auto sampling = settings.p1_synth.sampling;
  sampling.seed = settings.seed;
  auto contexts = synthesis::generate_contexts(settings.p1_synth.prefixes,
                                               settings.p1_synth.n_per_prefix, sampling,
                                               wiring->stub, wiring->env.generator_handle);
  std::vector<corpus::TextPair> candidates;
  for (const auto& ctx : contexts) {
    auto cs = synthesis::generate_completions(ctx, sampling, wiring->stub,
                                              wiring->env.generator_handle);
    if (!cs.usable()) continue;
    auto pairs = synthesis::make_candidate_pairs(cs, settings.task,
                                                 wiring->env.generator_handle.model_id);
    candidates.insert(candidates.end(), pairs.begin(), pairs.end());
  }
  std::filesystem::create_directories(config.output_dir);
  const auto out_path = config.output_dir / "candidates.jsonl";
  corpus::write_pairs(candidates, out_path);
  std::cout << "wrote " << candidates.size() << " candidate pairs to " << out_path.string()
            << '\n';
  return kExitOk;
}

int cmd_filter(const CommonArgs& args, const std::string& pairs_path) {
  const cfg::RunConfig config = load_with_overrides(args);
  auto wiring = make_wiring(config, false);
  const auto in_path =
      pairs_path.empty() ? (config.output_dir / "candidates.jsonl").string() : pairs_path;
  auto pairs = corpus::read_pairs(in_path);
  if (args.dry_run) {
    std::cout << "would filter " << pairs.size() << " pairs\n";
    return kExitOk;
  }
  filters::ChainScorers scorers{&wiring->nli, &wiring->grammar};
  auto [retained, report] = filters::run_filter_chain(pairs, config.task, scorers, config.filters);
  std::filesystem::create_directories(config.output_dir);
  corpus::write_pairs(retained, config.output_dir / "retained.jsonl");
  std::ofstream out(config.output_dir / "filter_report.json");
  out << report.to_json().dump(2) << '\n';
  std::cout << "retained " << retained.size() << "/" << pairs.size() << " ("
            << pipeline::format_efficiency(retained.size(), pairs.size()) << ")\n";
  return kExitOk;
}

std::map<std::string, std::string> parse_labeled_paths(const std::vector<std::string>& specs) {
  std::map<std::string, std::string> out;
  for (const auto& spec : specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("expected LABEL=PATH, got: " + spec);
    }
    out[spec.substr(0, eq)] = spec.substr(eq + 1);
  }
  return out;
}

int cmd_eval(const CommonArgs& args, const std::vector<std::string>& output_specs,
             const std::string& dataset_label) {
  const cfg::RunConfig config = load_with_overrides(args);
  const auto labeled = parse_labeled_paths(output_specs);
  if (labeled.empty()) throw ConfigError("eval: at least one --outputs LABEL=PATH required");
  metrics::TokenCosineEmbedder embedder;
  std::vector<metrics::EvalReportRow> rows;
  for (const auto& [system, path] : labeled) {
    auto examples = metrics::read_eval_examples(path);
    rows.push_back(metrics::evaluate_corpus(system, dataset_label, examples, embedder,
                                            config.metrics_cfg));
  }
  std::filesystem::create_directories(config.output_dir);
  nlohmann::json report = nlohmann::json::array();
  for (const auto& row : rows) report.push_back(row.to_json());
  {
    std::ofstream out(config.output_dir / "eval_report.json");
    out << report.dump(2) << '\n';
  }
  const std::string table = metrics::render_eval_table(rows);
  {
    std::ofstream out(config.output_dir / "eval_table.txt");
    out << table;
  }
  std::cout << table;
  return kExitOk;
}

int cmd_judge(const CommonArgs& args, const std::string& left_spec, const std::string& right_spec,
              const std::string& dimension_arg, bool use_mock, const std::string& mock_pattern) {
  const cfg::RunConfig config = load_with_overrides(args);
  const auto left = parse_labeled_paths({left_spec});
  const auto right = parse_labeled_paths({right_spec});
  const auto& [sys_a, path_a] = *left.begin();
  const auto& [sys_b, path_b] = *right.begin();

  auto examples_a = metrics::read_eval_examples(path_a);
  auto examples_b = metrics::read_eval_examples(path_b);
  if (examples_a.size() != examples_b.size()) {
    throw ConfigError("judge: output files must align example-for-example");
  }
  std::vector<std::string> instructions, outputs_a, outputs_b;
  for (std::size_t i = 0; i < examples_a.size(); ++i) {
    instructions.push_back(examples_a[i].source);
    outputs_a.push_back(examples_a[i].prediction);
    outputs_b.push_back(examples_b[i].prediction);
  }

  std::unique_ptr<judge::JudgeTransport> transport;
  if (use_mock) {
    std::vector<std::string> responses;
    std::string cur;
    for (char c : mock_pattern + ",") {
      if (c == ',') {
        if (!cur.empty()) responses.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    transport = std::make_unique<judge::MockTransport>(std::move(responses));
  } else {
    if (config.judge_cfg.endpoint.empty()) {
      throw ConfigError("judge.endpoint: required unless --mock is given");
    }
    transport = std::make_unique<judge::HttpTransport>(config.judge_cfg);
  }

  std::vector<judge::JudgeDimension> dims;
  if (dimension_arg == "all") {
    dims = judge::all_dimensions();
  } else {
    dims = {judge::dimension_from_string(dimension_arg)};
  }

  std::vector<judge::JudgeOutcome> outcomes;
  for (auto dim : dims) {
    auto tasks = judge::make_tasks(instructions, outputs_a, outputs_b, sys_a, sys_b, dim,
                                   config.seed + static_cast<std::uint64_t>(dim));
    for (const auto& task : tasks) outcomes.push_back(judge::judge_pair(task, *transport));
  }

  std::filesystem::create_directories(config.output_dir);
  judge::write_outcomes(outcomes, config.output_dir / "judge_results.jsonl");
  nlohmann::json pref;
  for (const auto* system : {&sys_a, &sys_b}) {
    const auto r = judge::preference_rate(outcomes, *system);
    pref[*system] = {{"rate", r.rate},
                     {"wins", r.wins},
                     {"total", r.total},
                     {"abstentions", r.abstentions}};
  }
  {
    std::ofstream out(config.output_dir / "preference.json");
    out << pref.dump(2) << '\n';
  }
  std::cout << pref.dump(2) << '\n';
  return kExitOk;
}

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& annotations_path,
               const std::string& roster_path, const std::string& out_dir) {
  nlohmann::json efficiency = nlohmann::json::array();
  for (const auto& dir : run_dirs) {
    std::ifstream in(std::filesystem::path(dir) / "run_summary.json");
    if (!in) throw ConfigError("no run_summary.json under " + dir);
    const auto summary = nlohmann::json::parse(in);
    for (const auto& row : summary.value("efficiency_rows", nlohmann::json::array())) {
      efficiency.push_back(row);
    }
  }
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream out(std::filesystem::path(out_dir) / "efficiency_table.json");
    out << efficiency.dump(2) << '\n';
  }
  {
    std::ofstream out(std::filesystem::path(out_dir) / "efficiency_table.txt");
    out << "dataset    phase  epsilon  efficiency\n";
    for (const auto& row : efficiency) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%-10s %-6s %7.2f  %s\n",
                    row.value("dataset", "").c_str(), row.value("phase", "").c_str(),
                    row.value("epsilon", 0.0), row.value("efficiency", "").c_str());
      out << buf;
    }
  }
  if (!annotations_path.empty() && !roster_path.empty()) {
    auto annotations = quality::load_annotations(annotations_path);
    std::ifstream rin(roster_path);
    if (!rin) throw ConfigError("cannot open roster: " + roster_path);
    auto roster = quality::AnnotationRoster::from_json(nlohmann::json::parse(rin));
    const auto report = quality::aggregate_report(annotations, roster);
    std::ofstream out(std::filesystem::path(out_dir) / "error_chart.json");
    out << report.chart_data().dump(2) << '\n';
    std::ofstream out2(std::filesystem::path(out_dir) / "error_report.json");
    out2 << report.to_json().dump(2) << '\n';
  }
  std::cout << "report written to " << out_dir << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"privacy-preserving text pipeline toolkit"};
  app.require_subcommand(1);

  CommonArgs common;
  app.add_option("--config", common.config_path, "run configuration JSON");
  app.add_flag("--resume", common.resume, "reuse completed phases in the run directory");
  app.add_flag("--dry-run", common.dry_run, "validate the config and print the plan");
  app.add_option("--seed", common.seed_override, "override the config seed");

  auto* synth = app.add_subcommand("synth", "generate candidate pairs (phase-1 front end)");
  auto* filter = app.add_subcommand("filter", "run the filter chain over a pair file");
  std::string filter_pairs;
  filter->add_option("--pairs", filter_pairs, "pair file (defaults to output_dir/candidates.jsonl)");
  auto* train_dp = app.add_subcommand("train-dp", "phases 1-2: base training + DP fine-tuning");
  auto* distill = app.add_subcommand("distill", "phases 1-3: full pipeline via self-distillation");
  auto* run_all = app.add_subcommand("run-all", "run all three phases and write run_summary.json");

  auto* eval = app.add_subcommand("eval", "reference-based + diversity metrics over system outputs");
  std::vector<std::string> eval_outputs;
  std::string eval_dataset = "dataset";
  eval->add_option("--outputs", eval_outputs, "LABEL=PATH jsonl with source/prediction/reference")
      ->required();
  eval->add_option("--dataset", eval_dataset, "dataset label for the report");

  auto* judge_cmd = app.add_subcommand("judge", "pairwise LLM-as-judge comparison");
  std::string judge_left, judge_right, judge_dimension = "all", mock_pattern = "M";
  bool judge_mock = false;
  judge_cmd->add_option("--left", judge_left, "LABEL=PATH for system A")->required();
  judge_cmd->add_option("--right", judge_right, "LABEL=PATH for system B")->required();
  judge_cmd->add_option("--dimension", judge_dimension, "dimension name or 'all'");
  judge_cmd->add_flag("--mock", judge_mock, "use the deterministic mock transport");
  judge_cmd->add_option("--mock-pattern", mock_pattern, "comma-separated mock responses");

  auto* report = app.add_subcommand("report", "merge run directories into report tables");
  std::vector<std::string> report_runs;
  std::string report_annotations, report_roster, report_out = "report";
  report->add_option("--run", report_runs, "run directory (repeatable)")->required();
  report->add_option("--annotations", report_annotations, "error annotation jsonl");
  report->add_option("--roster", report_roster, "annotation roster json");
  report->add_option("--out", report_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(common);
    if (filter->parsed()) return cmd_filter(common, filter_pairs);
    if (train_dp->parsed()) return run_phases(common, 2);
    if (distill->parsed() || run_all->parsed()) return run_phases(common, 3);
    if (eval->parsed()) return cmd_eval(common, eval_outputs, eval_dataset);
    if (judge_cmd->parsed()) {
      return cmd_judge(common, judge_left, judge_right, judge_dimension, judge_mock, mock_pattern);
    }
    if (report->parsed()) {
      return cmd_report(report_runs, report_annotations, report_roster, report_out);
    }
  } catch (const dptext::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const dptext::TransportError& e) {
    std::cerr << "external service error: " << e.what() << '\n';
    return kExitExternal;
  } catch (const dptext::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "phase error: " << e.what() << '\n';
    return kExitPhase;
  }
  return kExitOk;
}
