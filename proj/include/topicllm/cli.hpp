#pragma once

// Command-line driver. Each subcommand is one pipeline stage that reads and
// writes the jsonl artifacts of the other modules.

#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <type_traits>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "topicllm/backends.hpp"
#include "topicllm/config.hpp"
#include "topicllm/corpus.hpp"
#include "topicllm/dpo.hpp"
#include "topicllm/error.hpp"
#include "topicllm/extraction.hpp"
#include "topicllm/hash.hpp"
#include "topicllm/metrics.hpp"
#include "topicllm/prompting.hpp"
#include "topicllm/reconstruction.hpp"
#include "topicllm/version.hpp"

namespace topicllm::cli {

enum ExitCode : int {
  kOk = 0,
  kValidationFailed = 1,
  kInvalidConfig = 2,
  kMissingInput = 3,
  kBackendFailure = 4,
};

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kValidation: return kValidationFailed;
    case ErrorKind::kMissingInput: return kMissingInput;
    case ErrorKind::kBackend: return kBackendFailure;
    case ErrorKind::kInvalidConfig:
    case ErrorKind::kInvalidInput: return kInvalidConfig;
  }
  return kInvalidConfig;
}

// ---------------------------------------------------------------------------
// Factories

inline PromptSpec prompt_spec_from(const Config& cfg) {
  PromptSpec spec;
  spec.strategy = parse_strategy(cfg.str("prompt.strategy"));
  spec.granularity_desc = cfg.str("prompt.granularity");
  spec.seed_topics = cfg.list("prompt.seeds");
  spec.sentinel = cfg.str("prompt.sentinel");
  spec.max_doc_chars = static_cast<std::size_t>(cfg.integer("prompt.max_doc_chars"));
  return spec;
}

inline ExtractOptions extract_options_from(const Config& cfg) {
  ExtractOptions opts;
  opts.params.temperature = cfg.real("chat.temperature");
  opts.params.max_tokens = static_cast<int>(cfg.integer("chat.max_tokens"));
  opts.params.model_name = cfg.str("chat.model");
  opts.parallelism = static_cast<std::size_t>(cfg.integer("parallelism"));
  if (!cfg.str("prompt.template").empty()) opts.prompt_template = PromptTemplate::from_file(cfg.str("prompt.template"));
  return opts;
}

inline RemoteConfig remote_config(const Config& cfg, const std::string& prefix) {
  RemoteConfig rc;
  rc.base_url = cfg.str(prefix + ".base_url");
  rc.model = cfg.str(prefix + ".model");
  rc.api_key_env = cfg.str("chat.api_key_env");
  rc.max_in_flight = static_cast<int>(cfg.integer("chat.max_in_flight"));
  rc.retry.max_retries = static_cast<int>(cfg.integer("chat.max_retries"));
  rc.retry.initial_backoff = std::chrono::milliseconds(cfg.integer("chat.initial_backoff_ms"));
  return rc;
}

inline std::unique_ptr<ChatBackend> make_chat_backend(const Config& cfg) {
  if (cfg.str("chat.backend") == "mock") {
    const auto& script = cfg.str("mock.script");
    if (script.empty()) throw Error(ErrorKind::kInvalidConfig, "chat.backend=mock needs mock.script (or --mock-script)");
    require_file(script);
    return std::make_unique<ScriptedChatBackend>(ScriptedChatBackend::from_file(script));
  }
  return std::make_unique<RemoteChatBackend>(remote_config(cfg, "chat"));
}

inline std::unique_ptr<EmbedBackend> make_embedder(const Config& cfg) {
  const auto dim = static_cast<std::size_t>(cfg.integer("embed.dim"));
  if (cfg.str("embed.provider") == "local") return std::make_unique<LocalEmbedder>(dim);
  std::shared_ptr<EmbeddingCache> cache;
  if (!cfg.str("embed.cache").empty()) cache = std::make_shared<EmbeddingCache>(cfg.str("embed.cache"));
  return std::make_unique<RemoteEmbedBackend>(remote_config(cfg, "embed"), dim, cache);
}

// ---------------------------------------------------------------------------
// Manifest

class Manifest {
 public:
  Manifest(std::string subcommand, std::vector<std::string> args, const Config& cfg)
      : subcommand_(std::move(subcommand)), args_(std::move(args)), cfg_(cfg) {}

  void input(const std::filesystem::path& p) { inputs_.push_back(p); }
  void output(const std::filesystem::path& p) { outputs_.push_back(p); }

  /// Written next to the primary output as <output>.manifest.json.
  void write(const std::filesystem::path& primary) const {
    nlohmann::ordered_json m;
    m["tool"] = "topicllm";
    m["version"] = kVersion;
    m["subcommand"] = subcommand_;
    m["args"] = args_;
    m["config_hash"] = cfg_.hash();
    nlohmann::ordered_json config;
    for (const auto& [k, v] : cfg_.values()) config[k] = v;
    m["config"] = std::move(config);
    m["inputs"] = digests(inputs_);
    m["outputs"] = digests(outputs_);
    auto path = primary;
    path += ".manifest.json";
    write_file(path, m.dump(2) + "\n");
  }

 private:
  static nlohmann::ordered_json digests(const std::vector<std::filesystem::path>& paths) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& p : paths) {
      nlohmann::ordered_json row;
      row["path"] = p.generic_string();
      row["xxh64"] = std::filesystem::is_regular_file(p) ? xxh64_hex(read_file(p)) : std::string("-");
      arr.push_back(std::move(row));
    }
    return arr;
  }

  std::string subcommand_;
  std::vector<std::string> args_;
  const Config& cfg_;
  std::vector<std::filesystem::path> inputs_;
  std::vector<std::filesystem::path> outputs_;
};

// ---------------------------------------------------------------------------
// Driver

struct Options {
  std::string config_path;
  std::vector<std::string> sets;

  std::string corpus, format = "jsonl", out, run, matrix, hallucination_run, pairs, train_out, val_out;
  std::string judgments, human;
  bool strip_headers = false;
  bool adversarial = false;

  std::optional<std::string> backend, mock_script, strategy, granularity, seeds, mi_mode;
  std::optional<long long> warmup, seed_k, candidates, seed, similar_n, instances;
  std::optional<double> threshold, val_fraction, beta, tol, step;
};

namespace detail {

inline Config effective_config(const Options& o) {
  Config cfg = o.config_path.empty() ? Config() : Config::from_file(o.config_path);
  for (const auto& s : o.sets) cfg.set_assignment(s);
  auto put = [&](const char* key, const auto& opt) {
    if (!opt) return;
    if constexpr (std::is_same_v<std::decay_t<decltype(*opt)>, std::string>) {
      cfg.set(key, *opt);
    } else {
      std::ostringstream os;
      os.precision(17);
      os << *opt;
      cfg.set(key, os.str());
    }
  };
  put("chat.backend", o.backend);
  put("mock.script", o.mock_script);
  put("prompt.strategy", o.strategy);
  put("prompt.granularity", o.granularity);
  put("prompt.seeds", o.seeds);
  put("eval.mi_mode", o.mi_mode);
  put("dynamic.warmup", o.warmup);
  put("dynamic.seed_k", o.seed_k);
  put("cluster.candidates", o.candidates);
  put("seed", o.seed);
  put("eval.similar_n", o.similar_n);
  put("cluster.threshold", o.threshold);
  put("split.val_fraction", o.val_fraction);
  put("dpo.beta", o.beta);
  if (o.mock_script && !o.backend) cfg.set("chat.backend", "mock");
  cfg.validate();
  return cfg;
}

inline Corpus load_corpus_from(const Options& o) {
  require_file(o.corpus);
  return load_corpus(o.corpus, LoadOptions{parse_corpus_format(o.format), o.strip_headers});
}

inline ExtractionRun load_run(const std::string& path) {
  require_file(path);
  return read_run(path);
}

inline int write_run_artifacts(const ExtractionRun& run, const Options& o, Manifest& manifest) {
  write_run(run, o.out);
  manifest.output(o.out);
  manifest.output(sidecar_path(o.out, ".stats.jsonl"));
  manifest.output(sidecar_path(o.out, ".seeds.jsonl"));
  manifest.write(o.out);
  return kOk;
}

}  // namespace detail

inline int cmd_extract(const Options& o, const Config& cfg, Manifest& manifest, std::ostream& out) {
  auto corpus = detail::load_corpus_from(o);
  manifest.input(o.corpus);
  auto backend = make_chat_backend(cfg);
  if (!cfg.str("mock.script").empty() && cfg.str("chat.backend") == "mock") manifest.input(cfg.str("mock.script"));
  try {
    auto run = extract_corpus(corpus, prompt_spec_from(cfg), *backend, extract_options_from(cfg));
    detail::write_run_artifacts(run, o, manifest);
    out << "extracted " << run.records.size() << " records, " << run.stats.size() << " unique topics, "
        << run.failures << " failures -> " << o.out << "\n";
  } catch (const ExtractionAborted& e) {
    detail::write_run_artifacts(e.partial(), o, manifest);
    throw;
  }
  return kOk;
}

inline int cmd_extract_dynamic(const Options& o, const Config& cfg, Manifest& manifest, std::ostream& out) {
  auto corpus = detail::load_corpus_from(o);
  manifest.input(o.corpus);
  auto seeds = cfg.list("prompt.seeds");
  if (seeds.empty()) throw Error(ErrorKind::kInvalidConfig, "extract-dynamic needs initial seeds (--seeds)");
  auto backend = make_chat_backend(cfg);
  DynamicOptions opts;
  opts.warmup_n = static_cast<std::size_t>(cfg.integer("dynamic.warmup"));
  opts.seed_k = static_cast<std::size_t>(cfg.integer("dynamic.seed_k"));
  opts.base_spec = prompt_spec_from(cfg);
  opts.base_spec.strategy = Strategy::kSeedTopics;
  opts.base_spec.seed_topics = seeds;
  opts.extract = extract_options_from(cfg);
  try {
    auto run = extract_dynamic(corpus, seeds, *backend, opts);
    detail::write_run_artifacts(run, o, manifest);
    out << "extracted " << run.records.size() << " records with " << run.spec_history.size()
        << " seed configurations -> " << o.out << "\n";
  } catch (const ExtractionAborted& e) {
    detail::write_run_artifacts(e.partial(), o, manifest);
    throw;
  }
  return kOk;
}

inline int cmd_build_matrix(const Options& o, const Config& cfg, Manifest& manifest, std::ostream& out) {
  auto run = detail::load_run(o.run);
  manifest.input(o.run);
  auto embedder = make_embedder(cfg);
  auto matrix = build_matrix(run.stats, *embedder, static_cast<std::size_t>(cfg.integer("cluster.candidates")),
                             cfg.real("cluster.threshold"));
  write_file(o.out, matrix_to_json(matrix));
  manifest.output(o.out);
  manifest.write(o.out);
  out << "matrix: " << matrix.entries.size() << " clusters, " << matrix.assigned_count() << " assigned, "
      << matrix.unassigned.size() << " unassigned -> " << o.out << "\n";
  return kOk;
}

inline int cmd_reconstruct(const Options& o, const Config&, Manifest& manifest, std::ostream& out) {
  auto run = detail::load_run(o.run);
  manifest.input(o.run);
  require_file(o.matrix);
  auto matrix = read_matrix(o.matrix);
  manifest.input(o.matrix);
  std::string body;
  std::size_t modified = 0;
  for (const auto& r : run.records) {
    nlohmann::ordered_json row;
    row["doc_id"] = r.doc_id;
    row["topics"] = r.topics;
    if (r.is_sentinel || r.error) {
      row["accepted"] = nlohmann::ordered_json::array();
      row["modified"] = false;
      row["is_sentinel"] = true;
    } else {
      auto rec = reconstruct_record(r, matrix);
      modified += rec.modified ? 1 : 0;
      row["accepted"] = rec.accepted;
      row["modified"] = rec.modified;
      row["is_sentinel"] = false;
    }
    body += row.dump();
    body += '\n';
  }
  write_file(o.out, body);
  manifest.output(o.out);
  manifest.write(o.out);
  out << "reconstructed " << run.records.size() << " records, " << modified << " modified -> " << o.out << "\n";
  return kOk;
}

inline int cmd_build_dpo(const Options& o, const Config& cfg, Manifest& manifest, std::ostream& out) {
  auto run = detail::load_run(o.run);
  manifest.input(o.run);
  require_file(o.matrix);
  auto matrix = read_matrix(o.matrix);
  manifest.input(o.matrix);
  auto pairs = build_granularity_pairs(run, matrix);
  const std::size_t granularity = pairs.size();
  if (!o.hallucination_run.empty()) {
    auto hrun = detail::load_run(o.hallucination_run);
    manifest.input(o.hallucination_run);
    auto extra = hallucination_pairs_from_run(hrun, cfg.str("prompt.sentinel"));
    pairs.insert(pairs.end(), extra.begin(), extra.end());
  }
  write_file(o.out, pairs_to_jsonl(pairs));
  manifest.output(o.out);
  manifest.write(o.out);
  out << "pairs: " << granularity << " granularity, " << pairs.size() - granularity << " hallucination -> " << o.out
      << "\n";
  return kOk;
}

inline int cmd_split(const Options& o, const Config& cfg, Manifest& manifest, std::ostream& out) {
  require_file(o.pairs);
  auto pairs = read_pairs(o.pairs);
  manifest.input(o.pairs);
  auto ds = split(pairs, cfg.real("split.val_fraction"), static_cast<std::uint64_t>(cfg.integer("seed")));
  write_file(o.train_out, pairs_to_jsonl(ds.train));
  write_file(o.val_out, pairs_to_jsonl(ds.validation));
  manifest.output(o.train_out);
  manifest.output(o.val_out);
  manifest.write(o.train_out);
  out << "split: " << ds.train.size() << " train, " << ds.validation.size() << " validation\n";
  return kOk;
}

inline int cmd_eval(const Options& o, const Config& cfg, Manifest& manifest, std::ostream& out) {
  auto run = detail::load_run(o.run);
  manifest.input(o.run);
  auto embedder = make_embedder(cfg);

  MetricReport report;
  report.unique_count = unique_count(run.records);
  if (run.stats.size() >= 2) {
    auto sn = similar_n(run.stats, static_cast<std::size_t>(cfg.integer("eval.similar_n")), *embedder);
    report.similar_n = sn.value;
    report.n_used = sn.n_used;
  }
  report.mi_mode = parse_mi_mode(cfg.str("eval.mi_mode"));
  if (!o.corpus.empty()) {
    auto corpus = detail::load_corpus_from(o);
    manifest.input(o.corpus);
    try {
      report.mi = mutual_information(run.records, corpus, *embedder, report.mi_mode).value;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kInvalidInput) throw;
    }
  }
  if (!o.judgments.empty()) {
    require_file(o.judgments);
    manifest.input(o.judgments);
    report.rates = rates(read_judgments(o.judgments), o.adversarial);
  }

  bool ok = true;
  for (auto v : {report.similar_n, report.mi}) {
    if (v && !(*v >= -1.0 && *v <= 1.0)) ok = false;
  }
  if (report.rates && o.adversarial) {
    double sum = 0.0;
    for (const auto& [verdict, pct] : *report.rates) sum += pct;
    if (std::abs(sum - 100.0) > 0.01) ok = false;
  }

  out << report.to_table();
  if (!o.out.empty()) {
    write_file(o.out, report.to_json().dump(2) + "\n");
    manifest.output(o.out);
    manifest.write(o.out);
  }
  if (!ok) {
    out << "report failed its range checks\n";
    return kValidationFailed;
  }
  return kOk;
}

inline int cmd_judge(const Options& o, const Config& cfg, Manifest& manifest, std::ostream& out) {
  auto run = detail::load_run(o.run);
  manifest.input(o.run);
  auto corpus = detail::load_corpus_from(o);
  manifest.input(o.corpus);
  auto embedder = make_embedder(cfg);

  // The spec the run was generated with, unless flags say otherwise.
  PromptSpec spec = run.spec_history.empty() ? prompt_spec_from(cfg) : run.spec_history.front().spec;
  if (o.granularity) spec.granularity_desc = *o.granularity;
  if (o.seeds) spec.seed_topics = cfg.list("prompt.seeds");
  spec.sentinel = cfg.str("prompt.sentinel");

  const JudgeThresholds thresholds{cfg.real("judge.tau_instruction"), cfg.real("judge.tau_document")};
  std::vector<JudgmentRecord> judgments;
  std::size_t skipped = 0;
  for (const auto& r : run.records) {
    const Document* doc = corpus.find(r.doc_id);
    if (!doc) throw invalid_input("run record '" + r.doc_id + "' is not in the corpus");
    if (r.error) {
      ++skipped;
      continue;
    }
    judgments.push_back(auto_judge(r, *doc, spec, *embedder, thresholds, o.adversarial));
  }
  if (!o.human.empty()) {
    require_file(o.human);
    manifest.input(o.human);
    judgments = apply_overrides(judgments, read_judgments(o.human));
  }
  write_file(o.out, judgments_to_jsonl(judgments));
  manifest.output(o.out);
  manifest.write(o.out);
  out << "judged " << judgments.size() << " records (" << skipped << " failed records skipped)\n";
  if (!judgments.empty()) {
    for (const auto& [v, pct] : rates(judgments, o.adversarial)) out << to_string(v) << "% " << pct << "\n";
  }
  return kOk;
}

inline int cmd_gradcheck(const Options& o, const Config& cfg, std::ostream& out) {
  const double tol = o.tol.value_or(dpo::kDefaultGradTolerance);
  const double step = o.step.value_or(dpo::kDefaultFdStep);
  const auto instances = static_cast<std::size_t>(o.instances.value_or(100));
  auto summary = dpo::run_gradcheck(instances, static_cast<std::uint64_t>(cfg.integer("seed")),
                                    dpo::Beta(cfg.real("dpo.beta")), step);
  const bool pass = summary.max_relative_error <= tol;
  out << "gradcheck: " << summary.instances << " instances, max relative error " << summary.max_relative_error
      << " (tol " << tol << ") " << (pass ? "PASS" : "FAIL") << "\n";
  return pass ? kOk : kValidationFailed;
}

/// Runs one subcommand. `args` excludes the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"topicllm: topic extraction, preference-pair construction and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config_path, "Flat key = value config file");
  app.add_option("--set", o.sets, "Override a config key (key=value); repeatable");

  auto add_corpus = [&](CLI::App* sub, bool required) {
    auto* opt = sub->add_option("--corpus", o.corpus, "Corpus path (jsonl file or directory)");
    if (required) opt->required();
    sub->add_option("--format", o.format, "Corpus format: jsonl or dir")->check(CLI::IsMember({"jsonl", "dir"}));
    sub->add_flag("--strip-headers", o.strip_headers, "Directory corpora: drop leading 'Key: value' lines");
  };
  auto add_backend = [&](CLI::App* sub) {
    sub->add_option("--backend", o.backend, "Chat backend: mock or remote");
    sub->add_option("--mock-script", o.mock_script, "Scripted completions (jsonl)");
  };
  auto add_prompt = [&](CLI::App* sub) {
    sub->add_option("--strategy", o.strategy, "baseline, granularity or seeds");
    sub->add_option("--granularity", o.granularity, "Granularity description");
    sub->add_option("--seeds", o.seeds, "Comma-separated seed topics");
  };

  auto* extract = app.add_subcommand("extract", "Extract topics for every document");
  add_corpus(extract, true);
  add_backend(extract);
  add_prompt(extract);
  extract->add_option("--out", o.out, "Run artifact (jsonl)")->required();

  auto* dynamic = app.add_subcommand("extract-dynamic", "Extract with dynamically updated seed topics");
  add_corpus(dynamic, true);
  add_backend(dynamic);
  dynamic->add_option("--seeds", o.seeds, "Initial seed topics (comma-separated)");
  dynamic->add_option("--granularity", o.granularity, "Granularity description");
  dynamic->add_option("--warmup", o.warmup, "Documents processed before seeds are recomputed");
  dynamic->add_option("--seed-k", o.seed_k, "Number of frequent topics used as seeds");
  dynamic->add_option("--out", o.out, "Run artifact (jsonl)")->required();

  auto* matrix = app.add_subcommand("build-matrix", "Cluster near-duplicate topics around frequent ones");
  matrix->add_option("--run", o.run, "Run artifact")->required();
  matrix->add_option("--candidates", o.candidates, "Number of frequent topics used as cluster anchors");
  matrix->add_option("--threshold", o.threshold, "Cosine threshold for joining a cluster");
  matrix->add_option("--out", o.out, "Matrix file (json)")->required();

  auto* reconstruct = app.add_subcommand("reconstruct", "Rewrite raw topics through the replacement matrix");
  reconstruct->add_option("--run", o.run, "Run artifact")->required();
  reconstruct->add_option("--matrix", o.matrix, "Matrix file")->required();
  reconstruct->add_option("--out", o.out, "Reconstructed records (jsonl)")->required();

  auto* build_dpo = app.add_subcommand("build-dpo", "Build the preference dataset");
  build_dpo->add_option("--run", o.run, "Run artifact")->required();
  build_dpo->add_option("--matrix", o.matrix, "Matrix file")->required();
  build_dpo->add_option("--hallucination-run", o.hallucination_run, "Run produced with out-of-domain prompts");
  build_dpo->add_option("--out", o.out, "Preference pairs (jsonl)")->required();

  auto* split_cmd = app.add_subcommand("split", "Seeded stratified train/validation split");
  split_cmd->add_option("--pairs", o.pairs, "Preference pairs (jsonl)")->required();
  split_cmd->add_option("--val-fraction", o.val_fraction, "Validation fraction in [0, 1)");
  split_cmd->add_option("--seed", o.seed, "Shuffle seed");
  split_cmd->add_option("--train-out", o.train_out, "Training pairs output")->required();
  split_cmd->add_option("--val-out", o.val_out, "Validation pairs output")->required();

  auto* eval = app.add_subcommand("eval", "Compute topic-quality metrics");
  eval->add_option("--run", o.run, "Run artifact")->required();
  add_corpus(eval, false);
  eval->add_option("--similar-n", o.similar_n, "N for the Similar N metric");
  eval->add_option("--mi-mode", o.mi_mode, "per-document or global");
  eval->add_option("--judgments", o.judgments, "Judgments (jsonl) for rate metrics");
  eval->add_flag("--adversarial", o.adversarial, "Judgments come from adversarial prompts");
  eval->add_option("--out", o.out, "Machine-readable report (json)");

  auto* judge = app.add_subcommand("judge", "Automatic hallucination verdicts");
  judge->add_option("--run", o.run, "Run artifact")->required();
  add_corpus(judge, true);
  judge->add_option("--granularity", o.granularity, "Instruction granularity (defaults to the run's)");
  judge->add_option("--seeds", o.seeds, "Instruction seed topics (defaults to the run's)");
  judge->add_flag("--adversarial", o.adversarial, "Prompts asked for an unrelated domain");
  judge->add_option("--human", o.human, "Human verdicts (jsonl) overriding automatic ones");
  judge->add_option("--out", o.out, "Judgments output (jsonl)")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "Check the DPO gradient against finite differences");
  gradcheck->add_option("--tol", o.tol, "Maximum relative error");
  gradcheck->add_option("--step", o.step, "Finite-difference step");
  gradcheck->add_option("--instances", o.instances, "Number of random toy instances");
  gradcheck->add_option("--seed", o.seed, "Instance seed");
  gradcheck->add_option("--beta", o.beta, "DPO beta");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kOk;
    }
    err << "error: " << e.what() << "\n";
    return kInvalidConfig;
  }

  try {
    const Config cfg = detail::effective_config(o);
    CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    Manifest manifest(name, args, cfg);
    if (name == "extract") return cmd_extract(o, cfg, manifest, out);
    if (name == "extract-dynamic") return cmd_extract_dynamic(o, cfg, manifest, out);
    if (name == "build-matrix") return cmd_build_matrix(o, cfg, manifest, out);
    if (name == "reconstruct") return cmd_reconstruct(o, cfg, manifest, out);
    if (name == "build-dpo") return cmd_build_dpo(o, cfg, manifest, out);
    if (name == "split") return cmd_split(o, cfg, manifest, out);
    if (name == "eval") return cmd_eval(o, cfg, manifest, out);
    if (name == "judge") return cmd_judge(o, cfg, manifest, out);
    if (name == "gradcheck") return cmd_gradcheck(o, cfg, out);
    err << "error: unknown subcommand " << name << "\n";
    return kInvalidConfig;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  }
}

}  // namespace topicllm::cli
