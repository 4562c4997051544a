#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "topicllm/backends.hpp"
#include "topicllm/corpus.hpp"
#include "topicllm/error.hpp"
#include "topicllm/prompting.hpp"
#include "topicllm/text.hpp"

namespace topicllm {

/// Topic frequencies keyed by canonical key. The display name is the
/// casing seen first; insertion order breaks frequency ties.
class TopicStats {
 public:
  struct Entry {
    std::string display;
    std::size_t count = 0;

    bool operator==(const Entry&) const = default;
  };

  void add(const std::string& topic) {
    std::string key = canonical_key(topic);
    if (key.empty()) return;
    auto [it, inserted] = entries_.try_emplace(key, Entry{topic, 0});
    if (inserted) order_.push_back(key);
    ++it->second.count;
  }

  /// Sentinels and failed records contribute nothing.
  void add_record(const TopicRecord& record) {
    if (record.is_sentinel || record.error) return;
    for (const auto& t : record.topics) add(t);
  }

  static TopicStats from_records(const std::vector<TopicRecord>& records) {
    TopicStats stats;
    for (const auto& r : records) stats.add_record(r);
    return stats;
  }

  std::size_t size() const { return order_.size(); }
  bool empty() const { return order_.empty(); }
  const std::vector<std::string>& insertion_order() const { return order_; }

  const Entry* find(const std::string& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
  }

  const Entry& at(const std::string& key) const { return entries_.at(key); }

  /// Canonical keys by count descending, ties by first insertion.
  std::vector<std::string> ranked_keys() const {
    std::vector<std::string> keys = order_;
    std::stable_sort(keys.begin(), keys.end(), [&](const std::string& a, const std::string& b) {
      return entries_.at(a).count > entries_.at(b).count;
    });
    return keys;
  }

  bool operator==(const TopicStats& other) const {
    return order_ == other.order_ && entries_ == other.entries_;
  }

 private:
  std::unordered_map<std::string, Entry> entries_;
  std::vector<std::string> order_;
};

inline std::vector<std::string> top_k(const TopicStats& stats, std::size_t k) {
  if (k == 0) throw invalid_input("top_k: k must be at least 1");
  std::vector<std::string> out;
  for (const auto& key : stats.ranked_keys()) {
    if (out.size() == k) break;
    out.push_back(stats.at(key).display);
  }
  return out;
}

struct SeedChange {
  std::size_t doc_index = 0;
  PromptSpec spec;
};

struct ExtractionRun {
  std::vector<TopicRecord> records;
  TopicStats stats;
  std::vector<SeedChange> spec_history;
  std::size_t failures = 0;
};

/// Seeds in effect when document `index` was prompted.
inline std::vector<std::string> seeds_at(const ExtractionRun& run, std::size_t index) {
  std::vector<std::string> seeds;
  for (const auto& change : run.spec_history) {
    if (change.doc_index > index) break;
    seeds = change.spec.seed_topics;
  }
  return seeds;
}

/// Thrown when the backend fails in a way that makes continuing pointless.
/// Carries every record finished before the abort, in corpus order.
class ExtractionAborted : public BackendError {
 public:
  ExtractionAborted(const BackendError& cause, ExtractionRun partial)
      : BackendError(std::string("extraction aborted: ") + cause.what(), cause.status(), true),
        partial_(std::move(partial)) {}

  const ExtractionRun& partial() const { return partial_; }

 private:
  ExtractionRun partial_;
};

struct ExtractOptions {
  GenerationParams params;
  PromptTemplate prompt_template;
  std::size_t parallelism = 4;
};

namespace detail {

inline TopicRecord extract_one(const Document& doc, const PromptSpec& spec, ChatBackend& backend,
                               const ExtractOptions& opts) {
  auto prompt = render_prompt(doc, spec, opts.prompt_template);
  try {
    std::string raw = backend.complete(prompt.text, opts.params);
    return make_record(doc.id, std::move(prompt.text), std::move(raw), spec.sentinel);
  } catch (const BackendError& e) {
    if (e.fatal()) throw;
    TopicRecord r;
    r.doc_id = doc.id;
    r.prompt = std::move(prompt.text);
    r.is_sentinel = true;
    r.error = e.what();
    return r;
  }
}

}  // namespace detail

/// One record per document, in corpus order. Documents are prompted
/// concurrently; statistics are merged afterwards in corpus order.
inline ExtractionRun extract_corpus(const Corpus& corpus, const PromptSpec& spec, ChatBackend& backend,
                                    const ExtractOptions& opts = {}) {
  if (corpus.empty()) throw invalid_input("extract_corpus: corpus is empty");
  spec.validate();

  const std::size_t n = corpus.size();
  std::vector<std::optional<TopicRecord>> slots(n);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::mutex error_mu;
  std::optional<BackendError> fatal;

  auto worker = [&] {
    while (!stop.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        slots[i] = detail::extract_one(corpus.documents[i], spec, backend, opts);
      } catch (const BackendError& e) {
        std::lock_guard lock(error_mu);
        if (!fatal) fatal = e;
        stop = true;
      }
    }
  };

  const std::size_t threads = std::clamp<std::size_t>(opts.parallelism, 1, n);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  ExtractionRun run;
  run.spec_history.push_back({0, spec});
  for (auto& slot : slots) {
    if (!slot) continue;
    if (slot->error) ++run.failures;
    run.stats.add_record(*slot);
    run.records.push_back(std::move(*slot));
  }
  if (fatal) throw ExtractionAborted(*fatal, std::move(run));
  return run;
}

struct DynamicOptions {
  std::size_t warmup_n = 20;
  std::size_t seed_k = 10;
  PromptSpec base_spec;  // strategy is forced to seed topics
  ExtractOptions extract;
};

/// Dynamic seed topics: once the document index exceeds `warmup_n`, the seed
/// list is recomputed from all topics generated so far before every prompt.
/// Initial seeds are not counted. If nothing has been generated yet the
/// current seeds are kept.
inline ExtractionRun extract_dynamic(const Corpus& corpus, const std::vector<std::string>& initial_seeds,
                                     ChatBackend& backend, const DynamicOptions& opts = {}) {
  if (corpus.empty()) throw invalid_input("extract_dynamic: corpus is empty");
  if (initial_seeds.empty()) throw invalid_input("extract_dynamic: initial seeds are empty");
  if (opts.seed_k == 0) throw invalid_input("extract_dynamic: seed_k must be at least 1");

  PromptSpec spec = opts.base_spec;
  spec.strategy = Strategy::kSeedTopics;
  spec.seed_topics = initial_seeds;
  spec.validate();

  ExtractionRun run;
  run.spec_history.push_back({0, spec});
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (i > opts.warmup_n) {
      auto seeds = top_k(run.stats, opts.seed_k);
      if (!seeds.empty() && seeds != spec.seed_topics) {
        spec.seed_topics = std::move(seeds);
        run.spec_history.push_back({i, spec});
      }
    }
    try {
      auto record = detail::extract_one(corpus.documents[i], spec, backend, opts.extract);
      if (record.error) ++run.failures;
      run.stats.add_record(record);
      run.records.push_back(std::move(record));
    } catch (const BackendError& e) {
      throw ExtractionAborted(e, std::move(run));
    }
  }
  return run;
}

// ---------------------------------------------------------------------------
// Run artifacts: <name>.jsonl records, <name>.stats.jsonl, <name>.seeds.jsonl

inline std::filesystem::path sidecar_path(const std::filesystem::path& run_path, std::string_view suffix) {
  auto p = run_path;
  p.replace_extension();
  p += suffix;
  return p;
}

inline nlohmann::ordered_json record_to_json(const TopicRecord& r) {
  nlohmann::ordered_json obj;
  obj["doc_id"] = r.doc_id;
  obj["prompt"] = r.prompt;
  obj["raw_output"] = r.raw_output;
  obj["topics"] = r.topics;
  obj["is_sentinel"] = r.is_sentinel;
  if (r.error) obj["error"] = *r.error;
  return obj;
}

inline TopicRecord record_from_json(const json& obj, const std::string& where) {
  try {
    TopicRecord r;
    r.doc_id = obj.at("doc_id").get<std::string>();
    r.prompt = obj.value("prompt", std::string());
    r.raw_output = obj.at("raw_output").get<std::string>();
    r.topics = obj.at("topics").get<std::vector<std::string>>();
    r.is_sentinel = obj.at("is_sentinel").get<bool>();
    if (obj.contains("error")) r.error = obj["error"].get<std::string>();
    if (r.is_sentinel && !r.topics.empty()) throw invalid_input(where + ": sentinel record with topics");
    return r;
  } catch (const json::exception& e) {
    throw invalid_input(where + ": malformed run record: " + e.what());
  }
}

inline std::string stats_to_jsonl(const TopicStats& stats) {
  std::string out;
  for (const auto& key : stats.ranked_keys()) {
    nlohmann::ordered_json row;
    row["canonical_key"] = key;
    row["display"] = stats.at(key).display;
    row["count"] = stats.at(key).count;
    out += row.dump();
    out += '\n';
  }
  return out;
}

inline void write_run(const ExtractionRun& run, const std::filesystem::path& path) {
  std::string records;
  for (const auto& r : run.records) {
    records += record_to_json(r).dump();
    records += '\n';
  }
  write_file(path, records);
  write_file(sidecar_path(path, ".stats.jsonl"), stats_to_jsonl(run.stats));

  std::string seeds;
  for (const auto& change : run.spec_history) {
    nlohmann::ordered_json row;
    row["doc_index"] = change.doc_index;
    row["strategy"] = to_string(change.spec.strategy);
    row["granularity"] = change.spec.granularity_desc;
    row["seeds"] = change.spec.seed_topics;
    seeds += row.dump();
    seeds += '\n';
  }
  write_file(sidecar_path(path, ".seeds.jsonl"), seeds);
}

/// Statistics are always recomputed from the records.
inline ExtractionRun read_run(const std::filesystem::path& path) {
  ExtractionRun run;
  for_each_jsonl(path, [&](const json& obj, std::size_t lineno) {
    run.records.push_back(record_from_json(obj, path.string() + ":" + std::to_string(lineno)));
    if (run.records.back().error) ++run.failures;
  });
  run.stats = TopicStats::from_records(run.records);
  const auto seeds_path = sidecar_path(path, ".seeds.jsonl");
  if (std::filesystem::exists(seeds_path)) {
    for_each_jsonl(seeds_path, [&](const json& obj, std::size_t) {
      SeedChange change;
      change.doc_index = obj.at("doc_index").get<std::size_t>();
      change.spec.strategy = parse_strategy(obj.value("strategy", std::string("baseline")));
      change.spec.granularity_desc = obj.value("granularity", std::string());
      change.spec.seed_topics = obj.value("seeds", std::vector<std::string>{});
      run.spec_history.push_back(std::move(change));
    });
  }
  return run;
}

}  // namespace topicllm
