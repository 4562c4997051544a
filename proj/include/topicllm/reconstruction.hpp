#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "topicllm/backends.hpp"
#include "topicllm/error.hpp"
#include "topicllm/extraction.hpp"
#include "topicllm/prompting.hpp"
#include "topicllm/text.hpp"

namespace topicllm {

inline constexpr std::size_t kDefaultCandidateCount = 30;
inline constexpr double kDefaultClusterThreshold = 0.55;

/// One cluster: a frequent topic and the near-duplicates folded into it.
/// The canonical topic is always its own first variant.
struct MatrixEntry {
  std::string canonical;
  std::vector<std::string> variants;  // canonical keys
  std::unordered_map<std::string, double> similarity;
};

struct ReplacementMatrix {
  std::vector<MatrixEntry> entries;  // frequency rank order
  std::vector<std::string> unassigned;
  std::size_t candidate_count = kDefaultCandidateCount;
  double threshold = kDefaultClusterThreshold;

  /// Entry owning `key`, or nullptr when the key passes through unchanged.
  const MatrixEntry* lookup(const std::string& key) const {
    if (index_.empty() && !entries.empty()) rebuild_index();
    auto it = index_.find(key);
    return it == index_.end() ? nullptr : &entries[it->second];
  }

  void rebuild_index() const {
    index_.clear();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      for (const auto& v : entries[i].variants) index_[v] = i;
    }
  }

  std::size_t assigned_count() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.variants.size();
    return n;
  }

 private:
  mutable std::unordered_map<std::string, std::size_t> index_;
};

/// Clusters `all_topics` around the `k` most frequent topics in `stats`.
/// Each non-candidate topic joins the candidate with the highest cosine
/// similarity, provided it reaches `threshold`; ties go to the higher-ranked
/// candidate. Candidates never absorb each other.
inline ReplacementMatrix build_matrix(const TopicStats& stats, const std::vector<std::string>& all_topics,
                                      EmbedBackend& embedder, std::size_t k = kDefaultCandidateCount,
                                      double threshold = kDefaultClusterThreshold) {
  if (stats.empty()) throw invalid_input("build_matrix: topic statistics are empty");
  if (!(threshold > 0.0 && threshold <= 1.0)) throw invalid_input("build_matrix: threshold must be in (0, 1]");

  ReplacementMatrix matrix;
  matrix.candidate_count = k;
  matrix.threshold = threshold;

  const auto candidates = top_k(stats, k);
  std::unordered_set<std::string> candidate_keys;
  for (const auto& c : candidates) {
    MatrixEntry e;
    e.canonical = c;
    e.variants.push_back(canonical_key(c));
    e.similarity[e.variants.back()] = 1.0;
    candidate_keys.insert(e.variants.back());
    matrix.entries.push_back(std::move(e));
  }

  std::vector<std::string> others;
  std::unordered_set<std::string> seen = candidate_keys;
  for (const auto& t : all_topics) {
    std::string key = canonical_key(t);
    if (key.empty() || !seen.insert(key).second) continue;
    others.push_back(t);
  }

  std::vector<std::string> to_embed = candidates;
  to_embed.insert(to_embed.end(), others.begin(), others.end());
  const auto vectors = embed_unique(embedder, to_embed);

  for (const auto& topic : others) {
    const Embedding& v = vectors.at(topic);
    double best = -std::numeric_limits<double>::infinity();
    std::size_t best_idx = matrix.entries.size();
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      const double s = cosine(vectors.at(candidates[c]), v);
      if (s >= threshold && s > best) {
        best = s;
        best_idx = c;
      }
    }
    const std::string key = canonical_key(topic);
    if (best_idx == matrix.entries.size()) {
      matrix.unassigned.push_back(key);
    } else {
      matrix.entries[best_idx].variants.push_back(key);
      matrix.entries[best_idx].similarity[key] = best;
    }
  }
  matrix.rebuild_index();
  return matrix;
}

/// All topics seen in the statistics, in first-seen order.
inline ReplacementMatrix build_matrix(const TopicStats& stats, EmbedBackend& embedder,
                                      std::size_t k = kDefaultCandidateCount,
                                      double threshold = kDefaultClusterThreshold) {
  std::vector<std::string> all;
  for (const auto& key : stats.insertion_order()) all.push_back(stats.at(key).display);
  return build_matrix(stats, all, embedder, k, threshold);
}

struct Reconstruction {
  std::vector<std::string> accepted;
  bool modified = false;
};

inline std::vector<std::string> canonical_keys(const std::vector<std::string>& topics) {
  std::vector<std::string> keys;
  keys.reserve(topics.size());
  for (const auto& t : topics) keys.push_back(canonical_key(t));
  return keys;
}

inline Reconstruction reconstruct_topics(const std::vector<std::string>& topics,
                                         const ReplacementMatrix& matrix) {
  Reconstruction out;
  std::unordered_set<std::string> seen;
  for (const auto& t : topics) {
    const std::string key = canonical_key(t);
    const MatrixEntry* entry = matrix.lookup(key);
    const std::string& mapped = entry ? entry->canonical : t;
    if (seen.insert(canonical_key(mapped)).second) out.accepted.push_back(mapped);
  }
  out.modified = canonical_keys(out.accepted) != canonical_keys(topics);
  return out;
}

inline Reconstruction reconstruct_record(const TopicRecord& record, const ReplacementMatrix& matrix) {
  if (record.is_sentinel) throw invalid_input("reconstruct_record: record '" + record.doc_id + "' is a sentinel");
  return reconstruct_topics(record.topics, matrix);
}

// ---------------------------------------------------------------------------
// Preference pairs

enum class PairKind { kGranularity, kHallucination };

inline std::string to_string(PairKind k) {
  return k == PairKind::kGranularity ? "granularity" : "hallucination";
}

inline PairKind parse_pair_kind(std::string_view s) {
  if (s == "granularity") return PairKind::kGranularity;
  if (s == "hallucination") return PairKind::kHallucination;
  throw invalid_input("unknown pair kind '" + std::string(s) + "'");
}

struct PreferencePair {
  std::string prompt;
  std::string chosen;
  std::string rejected;
  PairKind kind = PairKind::kGranularity;
  std::string doc_id;

  bool operator==(const PreferencePair&) const = default;
};

inline std::string render_answer(const std::vector<std::string>& topics) { return join(topics, ", "); }

/// One pair per record whose topics the matrix actually rewrites.
inline std::vector<PreferencePair> build_granularity_pairs(const ExtractionRun& run,
                                                           const ReplacementMatrix& matrix) {
  std::vector<PreferencePair> pairs;
  for (const auto& r : run.records) {
    if (r.is_sentinel || r.error) continue;
    auto rec = reconstruct_record(r, matrix);
    if (!rec.modified) continue;
    PreferencePair p{r.prompt, render_answer(rec.accepted), r.raw_output, PairKind::kGranularity, r.doc_id};
    if (p.prompt.empty()) throw invalid_input("run record '" + r.doc_id + "' has no prompt");
    if (p.chosen.empty() || p.rejected.empty() || p.chosen == p.rejected) continue;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

/// Out-of-domain prompts should be answered with the sentinel; every other
/// answer becomes a rejected completion.
inline std::vector<PreferencePair> hallucination_pairs_from_run(const ExtractionRun& run,
                                                                const std::string& sentinel) {
  std::vector<PreferencePair> pairs;
  for (const auto& r : run.records) {
    if (r.is_sentinel || r.error || trim(r.raw_output).empty()) continue;
    if (r.prompt.empty()) throw invalid_input("run record '" + r.doc_id + "' has no prompt");
    if (r.raw_output == sentinel) continue;
    pairs.push_back({r.prompt, sentinel, r.raw_output, PairKind::kHallucination, r.doc_id});
  }
  return pairs;
}

struct HallucinationBuild {
  ExtractionRun run;
  std::vector<PreferencePair> pairs;
};

inline HallucinationBuild build_hallucination_pairs(const Corpus& corpus, const PromptSpec& ood_spec,
                                                    ChatBackend& backend, const ExtractOptions& opts = {}) {
  if (trim(ood_spec.granularity_desc).empty()) {
    throw invalid_input("hallucination prompts need an out-of-domain granularity description");
  }
  HallucinationBuild out;
  out.run = extract_corpus(corpus, ood_spec, backend, opts);
  out.pairs = hallucination_pairs_from_run(out.run, ood_spec.sentinel);
  return out;
}

// ---------------------------------------------------------------------------
// Train/validation split

struct SplitDataset {
  std::vector<PreferencePair> train;
  std::vector<PreferencePair> validation;
  std::uint64_t seed = 0;
};

namespace detail {

/// Unbiased draw from [0, n) using raw mt19937_64 output, so the sequence
/// does not depend on the standard library's distribution implementation.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[uniform_below(rng, i)]);
  }
}

}  // namespace detail

/// Seeded, stratified by pair kind. Each split keeps the input order.
inline SplitDataset split(const std::vector<PreferencePair>& pairs, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw invalid_input("val_fraction must be in [0, 1)");

  const std::size_t n = pairs.size();
  const std::size_t total_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));

  const std::array<PairKind, 2> kinds = {PairKind::kGranularity, PairKind::kHallucination};
  std::array<std::vector<std::size_t>, 2> members;
  for (std::size_t i = 0; i < n; ++i) members[pairs[i].kind == PairKind::kGranularity ? 0 : 1].push_back(i);

  // Largest-remainder allocation of validation slots to kinds.
  std::array<std::size_t, 2> quota{};
  std::array<double, 2> remainder{};
  std::size_t allocated = 0;
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    if (n == 0) break;
    const double exact = static_cast<double>(total_val) * static_cast<double>(members[k].size()) / static_cast<double>(n);
    quota[k] = static_cast<std::size_t>(std::floor(exact));
    remainder[k] = exact - static_cast<double>(quota[k]);
    allocated += quota[k];
  }
  while (allocated < total_val) {
    std::size_t best = remainder[0] >= remainder[1] ? 0 : 1;
    if (quota[best] >= members[best].size()) best = 1 - best;
    ++quota[best];
    remainder[best] = -1.0;
    ++allocated;
  }

  // Both kinds in both splits when the counts allow it.
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    const std::size_t o = 1 - k;
    if (members[k].size() < 2) continue;
    if (quota[k] == 0 && quota[o] >= 2) {
      ++quota[k];
      --quota[o];
    } else if (quota[k] == members[k].size() && quota[o] + 2 <= members[o].size()) {
      --quota[k];
      ++quota[o];
    }
  }

  std::mt19937_64 rng(seed);
  std::vector<char> in_val(n, 0);
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    auto order = members[k];
    detail::shuffle(order, rng);
    for (std::size_t j = 0; j < quota[k]; ++j) in_val[order[j]] = 1;
  }

  SplitDataset out;
  out.seed = seed;
  for (std::size_t i = 0; i < n; ++i) (in_val[i] ? out.validation : out.train).push_back(pairs[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Artifacts

inline nlohmann::ordered_json pair_to_json(const PreferencePair& p) {
  nlohmann::ordered_json obj;
  obj["prompt"] = p.prompt;
  obj["chosen"] = p.chosen;
  obj["rejected"] = p.rejected;
  obj["kind"] = to_string(p.kind);
  obj["doc_id"] = p.doc_id;
  return obj;
}

inline std::string pairs_to_jsonl(const std::vector<PreferencePair>& pairs) {
  std::string out;
  for (const auto& p : pairs) {
    out += pair_to_json(p).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<PreferencePair> read_pairs(const std::filesystem::path& path) {
  std::vector<PreferencePair> pairs;
  for_each_jsonl(path, [&](const json& obj, std::size_t lineno) {
    try {
      pairs.push_back({obj.at("prompt").get<std::string>(), obj.at("chosen").get<std::string>(),
                       obj.at("rejected").get<std::string>(), parse_pair_kind(obj.at("kind").get<std::string>()),
                       obj.value("doc_id", std::string())});
    } catch (const json::exception& e) {
      throw invalid_input(path.string() + ":" + std::to_string(lineno) + ": malformed pair: " + e.what());
    }
  });
  return pairs;
}

inline std::string matrix_to_json(const ReplacementMatrix& m) {
  nlohmann::ordered_json root;
  root["candidate_count"] = m.candidate_count;
  root["threshold"] = m.threshold;
  root["entries"] = nlohmann::ordered_json::array();
  for (const auto& e : m.entries) {
    nlohmann::ordered_json entry;
    entry["canonical"] = e.canonical;
    entry["variants"] = nlohmann::ordered_json::array();
    for (const auto& v : e.variants) {
      entry["variants"].push_back({{"key", v}, {"similarity", e.similarity.at(v)}});
    }
    root["entries"].push_back(std::move(entry));
  }
  root["unassigned"] = m.unassigned;
  return root.dump(2) + "\n";
}

inline ReplacementMatrix read_matrix(const std::filesystem::path& path) {
  require_file(path);
  json root = json::parse(read_file(path), nullptr, false);
  if (root.is_discarded() || !root.is_object()) throw invalid_input(path.string() + ": malformed matrix file");
  try {
    ReplacementMatrix m;
    m.candidate_count = root.at("candidate_count").get<std::size_t>();
    m.threshold = root.at("threshold").get<double>();
    for (const auto& entry : root.at("entries")) {
      MatrixEntry e;
      e.canonical = entry.at("canonical").get<std::string>();
      for (const auto& v : entry.at("variants")) {
        auto key = v.at("key").get<std::string>();
        e.similarity[key] = v.at("similarity").get<double>();
        e.variants.push_back(std::move(key));
      }
      m.entries.push_back(std::move(e));
    }
    m.unassigned = root.value("unassigned", std::vector<std::string>{});
    m.rebuild_index();
    return m;
  } catch (const json::exception& e) {
    throw invalid_input(path.string() + ": malformed matrix file: " + e.what());
  }
}

}  // namespace topicllm
