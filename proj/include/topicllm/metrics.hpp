#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "topicllm/backends.hpp"
#include "topicllm/corpus.hpp"
#include "topicllm/error.hpp"
#include "topicllm/extraction.hpp"
#include "topicllm/prompting.hpp"
#include "topicllm/text.hpp"

namespace topicllm {

inline constexpr std::size_t kDefaultSimilarN = 10;
inline constexpr double kDefaultInstructionThreshold = 0.4;
inline constexpr double kDefaultDocumentThreshold = 0.4;

// ---------------------------------------------------------------------------
// Metric 1: number of unique topics

inline std::size_t unique_count(const std::vector<TopicRecord>& records) {
  std::unordered_set<std::string> keys;
  for (const auto& r : records) {
    if (r.is_sentinel || r.error) continue;
    for (const auto& t : r.topics) keys.insert(canonical_key(t));
  }
  return keys.size();
}

// ---------------------------------------------------------------------------
// Metric 2: mean pairwise cosine among the top-N topics

struct SimilarNResult {
  double value = 0.0;
  std::size_t n_used = 0;
};

inline double mean_pairwise_cosine(const std::vector<Embedding>& vectors) {
  const std::size_t n = vectors.size();
  if (n < 2) throw invalid_input("similar_n needs at least two topics");
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) sum += cosine(vectors[i], vectors[j]);
  }
  return sum / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

/// Uses min(n, |stats|) topics and reports how many were used.
inline SimilarNResult similar_n(const TopicStats& stats, std::size_t n, EmbedBackend& embedder) {
  if (n < 2) throw invalid_input("similar_n: n must be at least 2");
  if (stats.size() < 2) throw invalid_input("similar_n: fewer than two topics");
  const auto top = top_k(stats, n);
  return {mean_pairwise_cosine(embedder.embed(top)), top.size()};
}

// ---------------------------------------------------------------------------
// Metric 3: alignment between generated topics and gold labels

enum class MiMode { kPerDocument, kGlobal };

inline std::string to_string(MiMode m) { return m == MiMode::kPerDocument ? "per-document" : "global"; }

inline MiMode parse_mi_mode(std::string_view s) {
  if (s == "per-document" || s == "document") return MiMode::kPerDocument;
  if (s == "global") return MiMode::kGlobal;
  throw invalid_input("unknown MI mode '" + std::string(s) + "'");
}

struct MiResult {
  double value = 0.0;
  std::size_t pairs = 0;
};

/// Per-document mode pairs each generated topic with its document's
/// normalized label; global mode pairs every generated topic with every
/// distinct label in the corpus. The score is the mean cosine over pairs.
/// Documents without a label are skipped.
inline MiResult mutual_information(const std::vector<TopicRecord>& records, const Corpus& corpus,
                                   EmbedBackend& embedder, MiMode mode = MiMode::kPerDocument) {
  std::unordered_map<std::string, std::string> label_of;
  std::vector<std::string> all_labels;
  for (const auto& d : corpus.documents) {
    if (!d.label || trim(*d.label).empty()) continue;
    std::string label = normalize_label(*d.label);
    label_of[d.id] = label;
    if (std::find(all_labels.begin(), all_labels.end(), label) == all_labels.end()) all_labels.push_back(label);
  }

  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& r : records) {
    if (r.is_sentinel || r.error) continue;
    if (mode == MiMode::kPerDocument) {
      auto it = label_of.find(r.doc_id);
      if (it == label_of.end()) continue;
      for (const auto& t : r.topics) pairs.emplace_back(t, it->second);
    } else {
      for (const auto& t : r.topics) {
        for (const auto& l : all_labels) pairs.emplace_back(t, l);
      }
    }
  }
  if (pairs.empty()) throw invalid_input("mutual_information: no labeled documents with generated topics");

  std::vector<std::string> texts;
  for (const auto& [t, l] : pairs) {
    texts.push_back(t);
    texts.push_back(l);
  }
  const auto vectors = embed_unique(embedder, texts);
  double sum = 0.0;
  for (const auto& [t, l] : pairs) sum += cosine(vectors.at(t), vectors.at(l));
  return {sum / static_cast<double>(pairs.size()), pairs.size()};
}

// ---------------------------------------------------------------------------
// Hallucination judgments

/// Adversarial prompts: Adherent / Hallucinated / Aligned.
/// Non-adversarial prompts: TruePositive / Missed.
enum class Verdict { kAdherent, kHallucinated, kAligned, kTruePositive, kMissed };
enum class JudgmentSource { kHuman, kAuto };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::kAdherent: return "Adherent";
    case Verdict::kHallucinated: return "Hallucinated";
    case Verdict::kAligned: return "Aligned";
    case Verdict::kTruePositive: return "TruePositive";
    case Verdict::kMissed: return "Missed";
  }
  return "Missed";
}

inline Verdict parse_verdict(std::string_view s) {
  const std::string k = ascii_lower(s);
  if (k == "adherent") return Verdict::kAdherent;
  if (k == "hallucinated") return Verdict::kHallucinated;
  if (k == "aligned") return Verdict::kAligned;
  if (k == "truepositive" || k == "true_positive") return Verdict::kTruePositive;
  if (k == "missed") return Verdict::kMissed;
  throw invalid_input("unknown verdict '" + std::string(s) + "'");
}

inline std::string to_string(JudgmentSource s) { return s == JudgmentSource::kHuman ? "human" : "auto"; }

inline JudgmentSource parse_source(std::string_view s) {
  if (s == "human") return JudgmentSource::kHuman;
  if (s == "auto") return JudgmentSource::kAuto;
  throw invalid_input("unknown judgment source '" + std::string(s) + "'");
}

struct JudgmentRecord {
  std::string doc_id;
  Verdict verdict = Verdict::kAligned;
  JudgmentSource source = JudgmentSource::kAuto;

  bool operator==(const JudgmentRecord&) const = default;
};

struct JudgeThresholds {
  double instruction = kDefaultInstructionThreshold;
  double document = kDefaultDocumentThreshold;
};

/// Normalized mean of the embeddings of the granularity description and
/// every seed topic. Empty when the spec carries neither.
inline std::optional<Embedding> instruction_centroid(const PromptSpec& spec, EmbedBackend& embedder) {
  std::vector<std::string> parts;
  if (!trim(spec.granularity_desc).empty()) parts.push_back(trim(spec.granularity_desc));
  for (const auto& s : spec.seed_topics) {
    if (!trim(s).empty()) parts.push_back(trim(s));
  }
  if (parts.empty()) return std::nullopt;
  const auto vectors = embedder.embed(parts);
  Embedding c{std::vector<double>(vectors.front().dim(), 0.0)};
  for (const auto& v : vectors) {
    if (v.dim() != c.dim()) throw BackendError("embedder returned inconsistent dimensions");
    for (std::size_t i = 0; i < c.dim(); ++i) c.values[i] += v.values[i] / static_cast<double>(vectors.size());
  }
  normalize_in_place(c);
  return c;
}

inline JudgmentRecord auto_judge(const TopicRecord& record, const Document& doc, const PromptSpec& spec,
                                 EmbedBackend& embedder, const JudgeThresholds& thresholds, bool adversarial) {
  if (record.error) throw invalid_input("auto_judge: record '" + record.doc_id + "' failed during extraction");
  JudgmentRecord out{record.doc_id, Verdict::kAligned, JudgmentSource::kAuto};
  const auto centroid = instruction_centroid(spec, embedder);

  if (adversarial) {
    if (!centroid) throw invalid_input("auto_judge: adversarial judging needs a granularity description or seeds");
    if (record.is_sentinel) {
      out.verdict = Verdict::kAdherent;
      return out;
    }
  } else if (record.is_sentinel) {
    out.verdict = Verdict::kMissed;
    return out;
  }

  double s_instruction = -1.0;
  double s_document = -1.0;
  if (!record.topics.empty()) {
    std::vector<std::string> texts = record.topics;
    texts.push_back(doc.text);
    const auto vectors = embedder.embed(texts);
    const Embedding& doc_vec = vectors.back();
    for (std::size_t i = 0; i + 1 < vectors.size(); ++i) {
      if (centroid) s_instruction = std::max(s_instruction, cosine(vectors[i], *centroid));
      s_document = std::max(s_document, cosine(vectors[i], doc_vec));
    }
  }

  if (adversarial) {
    out.verdict = (s_instruction >= thresholds.instruction && s_document < thresholds.document)
                      ? Verdict::kHallucinated
                      : Verdict::kAligned;
  } else {
    const bool on_instruction = !centroid || s_instruction >= thresholds.instruction;
    out.verdict = (!record.topics.empty() && on_instruction) ? Verdict::kTruePositive : Verdict::kMissed;
  }
  return out;
}

/// Human verdicts replace automatic ones for the same document.
inline std::vector<JudgmentRecord> apply_overrides(const std::vector<JudgmentRecord>& automatic,
                                                   const std::vector<JudgmentRecord>& human) {
  std::unordered_map<std::string, const JudgmentRecord*> by_doc;
  for (const auto& h : human) by_doc[h.doc_id] = &h;
  std::vector<JudgmentRecord> out;
  out.reserve(automatic.size());
  for (const auto& a : automatic) {
    auto it = by_doc.find(a.doc_id);
    out.push_back(it == by_doc.end() ? a : *it->second);
  }
  return out;
}

using RateTable = std::map<Verdict, double>;

/// Percentages over all judgments. Adversarial mode reports the
/// Adherent/Hallucinated/Aligned triple, otherwise TruePositive/Missed.
inline RateTable rates(const std::vector<JudgmentRecord>& judgments, bool adversarial) {
  if (judgments.empty()) throw invalid_input("rates: no judgments");
  const std::vector<Verdict> allowed = adversarial
                                           ? std::vector<Verdict>{Verdict::kAdherent, Verdict::kHallucinated, Verdict::kAligned}
                                           : std::vector<Verdict>{Verdict::kTruePositive, Verdict::kMissed};
  std::map<Verdict, std::size_t> counts;
  for (auto v : allowed) counts[v] = 0;
  for (const auto& j : judgments) {
    auto it = counts.find(j.verdict);
    if (it == counts.end()) {
      throw invalid_input("verdict " + to_string(j.verdict) + " for '" + j.doc_id + "' does not belong to " +
                          (adversarial ? "adversarial" : "non-adversarial") + " judging");
    }
    ++it->second;
  }
  RateTable out;
  const double total = static_cast<double>(judgments.size());
  for (const auto& [v, c] : counts) out[v] = 100.0 * static_cast<double>(c) / total;
  return out;
}

inline std::string judgments_to_jsonl(const std::vector<JudgmentRecord>& judgments) {
  std::string out;
  for (const auto& j : judgments) {
    nlohmann::ordered_json row;
    row["doc_id"] = j.doc_id;
    row["verdict"] = to_string(j.verdict);
    row["source"] = to_string(j.source);
    out += row.dump();
    out += '\n';
  }
  return out;
}

inline std::vector<JudgmentRecord> read_judgments(const std::filesystem::path& path) {
  std::vector<JudgmentRecord> out;
  std::unordered_set<std::string> seen;
  for_each_jsonl(path, [&](const json& obj, std::size_t lineno) {
    const std::string where = path.string() + ":" + std::to_string(lineno);
    try {
      JudgmentRecord j{obj.at("doc_id").get<std::string>(), parse_verdict(obj.at("verdict").get<std::string>()),
                       parse_source(obj.value("source", std::string("human")))};
      if (!seen.insert(j.doc_id).second) throw invalid_input(where + ": second verdict for '" + j.doc_id + "'");
      out.push_back(std::move(j));
    } catch (const json::exception& e) {
      throw invalid_input(where + ": malformed judgment: " + e.what());
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Report

struct MetricReport {
  std::size_t unique_count = 0;
  std::optional<double> similar_n;
  std::size_t n_used = 0;
  std::optional<double> mi;
  MiMode mi_mode = MiMode::kPerDocument;
  std::optional<RateTable> rates;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["unique_count"] = unique_count;
    j["similar_n"] = similar_n ? nlohmann::ordered_json(*similar_n) : nlohmann::ordered_json(nullptr);
    j["mi"] = mi ? nlohmann::ordered_json(*mi) : nlohmann::ordered_json(nullptr);
    j["n_used"] = n_used;
    j["mi_mode"] = to_string(mi_mode);
    if (rates) {
      nlohmann::ordered_json r;
      for (const auto& [v, pct] : *rates) r[to_string(v)] = pct;
      j["rates"] = std::move(r);
    } else {
      j["rates"] = nullptr;
    }
    return j;
  }

  std::string to_table() const {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(4);
    os << "# of unique topics   " << unique_count << '\n';
    os << "Similar N (N=" << n_used << ")     ";
    if (similar_n) os << *similar_n; else os << "n/a";
    os << '\n' << "MI (" << to_string(mi_mode) << ")  ";
    if (mi) os << *mi; else os << "n/a";
    os << '\n';
    if (rates) {
      os.precision(2);
      for (const auto& [v, pct] : *rates) os << to_string(v) << "%  " << pct << '\n';
    }
    return os.str();
  }
};

}  // namespace topicllm
