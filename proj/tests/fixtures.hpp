#pragma once

// Scripted 100-document corpus shared by the integration, CLI and
// acceptance tests. Every expected count is derived from how the scripts
// are built, never from running the pipeline.

#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "topicllm/corpus.hpp"
#include "topicllm/text.hpp"

namespace fixture {

inline const std::vector<std::string>& canonical_topics() {
  static const std::vector<std::string> c = {
      "Baseball",     "Hockey",          "Computer Graphics", "Space Exploration", "Religion",
      "Cars",         "Cryptography",    "Medicine",          "Electronics",       "Motorcycles",
      "Politics",     "Gun Control",     "Middle East",       "Atheism",           "Windows Software",
      "Mac Hardware", "PC Hardware",     "Sales",             "Christianity",      "Astronomy",
      "Football",     "Basketball",      "Elections",         "Economy",           "Health Insurance",
      "Climate Change", "Education",     "Immigration",       "Taxes",             "Energy Policy",
  };
  return c;
}

/// Near-duplicate spellings. Each one is closer than 0.55 (cosine, local
/// trigram embedder) to its own canonical topic and farther from every other.
inline const std::map<std::string, std::string>& variants() {
  static const std::map<std::string, std::string> v = {
      {"Baseball", "baseballs"},       {"Hockey", "ice hockey"},         {"Religion", "religions"},
      {"Medicine", "medicines"},       {"Politics", "political"},        {"Astronomy", "astronomical"},
      {"Elections", "Election"},       {"Climate Change", "climate changes"},
      {"Cryptography", "cryptographic"}, {"Motorcycles", "Motorcycle"},
  };
  return v;
}

inline const std::vector<std::string>& unrelated_topics() {
  static const std::vector<std::string> u = {"Jazz Music", "Gardening", "Knitting", "Volcanoes"};
  return u;
}

struct Fixture {
  topicllm::Corpus corpus;
  std::vector<std::string> granularity_outputs;  // scripted answer per document
  std::vector<std::string> ood_outputs;          // answer to the out-of-domain prompt
  std::vector<bool> uses_variant;
  std::vector<bool> granularity_sentinel;
  std::size_t expected_granularity_pairs = 0;
  std::size_t expected_hallucination_pairs = 0;
};

inline std::string marker(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "[doc-%03zu]", i);
  return buf;
}

inline Fixture make(std::size_t n = 100) {
  const auto& canon = canonical_topics();
  Fixture f;
  f.corpus.name = "fixture";
  for (std::size_t i = 0; i < n; ++i) {
    const std::string& primary = canon[i % canon.size()];
    const std::string& secondary = canon[(i + 7) % canon.size()];

    topicllm::Document d;
    char id[32];
    std::snprintf(id, sizeof id, "d%03zu", i);
    d.id = id;
    d.text = marker(i) + " This post talks about " + topicllm::ascii_lower(primary) + " and also mentions " +
             topicllm::ascii_lower(secondary) + ". Readers of the newsgroup replied with their own views.";
    d.label = primary;
    f.corpus.documents.push_back(d);

    const bool sentinel = i % 20 == 19;
    const bool variant = i < canon.size() && i % 3 == 1 && variants().count(primary) > 0;
    f.granularity_sentinel.push_back(sentinel);
    f.uses_variant.push_back(variant);

    std::string answer;
    if (sentinel) {
      answer = "No related topics.";
    } else {
      std::vector<std::string> topics;
      if (variant) {
        topics.push_back(variants().at(primary));
      } else if (i >= canon.size() && i % 10 == 5) {
        topics.push_back(topicllm::ascii_lower(primary));  // same canonical key, not a modification
      } else {
        topics.push_back(primary);
      }
      topics.push_back(secondary);
      if (i % 25 == 12) topics.push_back(unrelated_topics()[(i / 25) % unrelated_topics().size()]);
      if (i % 4 == 2) {
        answer = "- " + topicllm::join(topics, "\n- ");
      } else {
        answer = topicllm::join(topics, ", ");
      }
      if (variant) ++f.expected_granularity_pairs;
    }
    f.granularity_outputs.push_back(answer);

    std::string ood;
    if (i % 8 == 3) {
      static const std::vector<std::string> hallucinated = {"Vaccines", "COVID-19 side effects",
                                                            "Pandemic lockdowns, Vaccines"};
      ood = hallucinated[(i / 8) % hallucinated.size()];
      ++f.expected_hallucination_pairs;
    } else {
      ood = i % 2 == 0 ? "No related topics." : "No Relevant Topics";
    }
    f.ood_outputs.push_back(ood);
  }
  return f;
}

/// Mock script keyed by each document's unique marker.
inline std::string mock_script(const std::vector<std::string>& outputs) {
  std::string out;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    topicllm::json row = {{"contains", marker(i)}, {"completion", outputs[i]}};
    out += row.dump() + "\n";
  }
  return out;
}

struct Files {
  std::filesystem::path corpus, granularity_script, ood_script;
};

inline Files write(const Fixture& f, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  Files files{dir / "corpus.jsonl", dir / "mock_granularity.jsonl", dir / "mock_ood.jsonl"};
  topicllm::write_file(files.corpus, topicllm::corpus_to_jsonl(f.corpus));
  topicllm::write_file(files.granularity_script, mock_script(f.granularity_outputs));
  topicllm::write_file(files.ood_script, mock_script(f.ood_outputs));
  return files;
}

}  // namespace fixture
