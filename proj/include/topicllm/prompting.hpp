#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "topicllm/corpus.hpp"
#include "topicllm/error.hpp"
#include "topicllm/text.hpp"

namespace topicllm {

inline constexpr std::string_view kDefaultSentinel = "No related topics";
inline constexpr std::size_t kDefaultMaxDocChars = 6000;

enum class Strategy { kBaseline, kGranularityDescription, kSeedTopics };

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kBaseline: return "baseline";
    case Strategy::kGranularityDescription: return "granularity";
    case Strategy::kSeedTopics: return "seeds";
  }
  return "baseline";
}

inline Strategy parse_strategy(std::string_view name) {
  if (name == "baseline") return Strategy::kBaseline;
  if (name == "granularity" || name == "gran-desc") return Strategy::kGranularityDescription;
  if (name == "seeds" || name == "seed-topics") return Strategy::kSeedTopics;
  throw invalid_input("unknown prompt strategy '" + std::string(name) + "'");
}

struct PromptSpec {
  Strategy strategy = Strategy::kBaseline;
  std::string granularity_desc;
  std::vector<std::string> seed_topics;
  std::string sentinel = std::string(kDefaultSentinel);
  std::string instruction_open = "[INST]";
  std::string instruction_close = "[/INST]";
  std::size_t max_doc_chars = kDefaultMaxDocChars;

  void validate() const {
    if (strategy == Strategy::kGranularityDescription && trim(granularity_desc).empty()) {
      throw invalid_input("granularity strategy requires a granularity description");
    }
    if (strategy == Strategy::kSeedTopics && seed_topics.empty()) {
      throw invalid_input("seed-topics strategy requires at least one seed topic");
    }
    if (trim(sentinel).empty()) throw invalid_input("sentinel must be nonempty");
    if (max_doc_chars == 0) throw invalid_input("max_doc_chars must be positive");
  }
};

/// Instruction body with {DOC}, {GRANULARITY}, {SEEDS} and {SENTINEL}
/// placeholders. The instruction wrapper and the trailing "Topic:" cue are
/// added around it by render_prompt.
struct PromptTemplate {
  std::string text =
      "You are a topic modelling assistant. Read the document below and list its main topics "
      "as a comma-separated list of short topic names.{GRANULARITY}{SEEDS} If there are no "
      "related topics in the document, return \"{SENTINEL}\".\n\nDocument: {DOC}";

  static PromptTemplate from_file(const std::filesystem::path& path) {
    PromptTemplate t{read_file(path)};
    if (t.text.find("{DOC}") == std::string::npos) {
      throw invalid_input(path.string() + ": prompt template has no {DOC} placeholder");
    }
    return t;
  }
};

struct RenderedPrompt {
  std::string text;
  bool truncated = false;
};

inline std::string granularity_fragment(const PromptSpec& spec) {
  if (spec.strategy == Strategy::kBaseline || trim(spec.granularity_desc).empty()) return "";
  return " Only output topics related to " + trim(spec.granularity_desc) + ".";
}

inline std::string seeds_fragment(const PromptSpec& spec) {
  if (spec.strategy != Strategy::kSeedTopics || spec.seed_topics.empty()) return "";
  return " Here are some example topics: " + join(spec.seed_topics, ", ") + ".";
}

inline RenderedPrompt render_prompt(const Document& doc, const PromptSpec& spec,
                                    const PromptTemplate& tmpl = {}) {
  spec.validate();
  if (trim(doc.text).empty()) throw invalid_input("document '" + doc.id + "' has empty text");

  RenderedPrompt out;
  std::string body = trim(doc.text);
  if (utf8_length(body) > spec.max_doc_chars) {
    body = utf8_head(body, spec.max_doc_chars);
    out.truncated = true;
  }

  const std::array<std::pair<std::string_view, std::string>, 4> values = {{
      {"{DOC}", body},
      {"{GRANULARITY}", granularity_fragment(spec)},
      {"{SEEDS}", seeds_fragment(spec)},
      {"{SENTINEL}", spec.sentinel},
  }};

  // Single left-to-right pass so placeholder-like text inside the document
  // is never substituted.
  std::string instruction;
  const std::string& t = tmpl.text;
  std::size_t i = 0;
  while (i < t.size()) {
    bool matched = false;
    if (t[i] == '{') {
      for (const auto& [key, value] : values) {
        if (t.compare(i, key.size(), key) == 0) {
          instruction += value;
          i += key.size();
          matched = true;
          break;
        }
      }
    }
    if (!matched) instruction += t[i++];
  }

  out.text = spec.instruction_open + " " + instruction + " " + spec.instruction_close + "\nTopic:";
  return out;
}

// ---------------------------------------------------------------------------
// Output parsing

/// Lowercase, collapse whitespace, drop trailing punctuation.
inline std::string canonical_key(std::string_view topic) {
  std::string key = collapse_whitespace(ascii_lower(topic));
  while (!key.empty() && std::ispunct(static_cast<unsigned char>(key.back()))) {
    key.pop_back();
    while (!key.empty() && key.back() == ' ') key.pop_back();
  }
  return key;
}

struct TopicRecord {
  std::string doc_id;
  std::string prompt;
  std::string raw_output;
  std::vector<std::string> topics;
  bool is_sentinel = false;
  std::optional<std::string> error;
};

struct ParsedTopics {
  std::vector<std::string> topics;
  bool is_sentinel = false;
};

inline bool contains_sentinel(std::string_view raw, std::string_view sentinel) {
  const std::string hay = collapse_whitespace(ascii_lower(raw));
  for (std::string_view phrase : {sentinel, std::string_view("No related topics"),
                                  std::string_view("No relevant topics")}) {
    const std::string needle = canonical_key(phrase);
    if (!needle.empty() && hay.find(needle) != std::string::npos) return true;
  }
  return false;
}

namespace detail {

inline std::string strip_topic_tag(const std::string& item) {
  for (std::string_view tag : {"topics:", "topic:"}) {
    if (starts_with_ci(item, tag)) return trim(std::string_view(item).substr(tag.size()));
  }
  return item;
}

inline std::string strip_list_marker(const std::string& item) {
  if (item.empty()) return item;
  if (item[0] == '-' || item[0] == '*') return trim(std::string_view(item).substr(1));
  if (item.compare(0, 3, "\xE2\x80\xA2") == 0) return trim(std::string_view(item).substr(3));
  std::size_t digits = 0;
  while (digits < item.size() && std::isdigit(static_cast<unsigned char>(item[digits]))) ++digits;
  if (digits > 0 && digits < item.size() && (item[digits] == '.' || item[digits] == ')') &&
      (digits + 1 == item.size() || is_space(item[digits + 1]))) {
    return trim(std::string_view(item).substr(digits + 1));
  }
  return item;
}

}  // namespace detail

/// Splits raw model output into topics. Any mention of the sentinel phrase
/// turns the whole answer into a sentinel.
inline ParsedTopics parse_topics(std::string_view raw, std::string_view sentinel = kDefaultSentinel) {
  ParsedTopics out;
  if (contains_sentinel(raw, sentinel)) {
    out.is_sentinel = true;
    return out;
  }
  std::unordered_set<std::string> seen;
  std::string current;
  auto flush = [&] {
    std::string item = trim(current);
    current.clear();
    for (;;) {
      std::string next = detail::strip_list_marker(detail::strip_topic_tag(item));
      if (next == item) break;
      item = std::move(next);
    }
    std::string key = canonical_key(item);
    if (key.empty()) return;
    if (seen.insert(key).second) out.topics.push_back(std::move(item));
  };
  for (char c : raw) {
    if (c == ',' || c == '\n') {
      flush();
    } else {
      current.push_back(c);
    }
  }
  flush();
  return out;
}

inline TopicRecord make_record(std::string doc_id, std::string prompt, std::string raw_output,
                               std::string_view sentinel) {
  TopicRecord r;
  r.doc_id = std::move(doc_id);
  r.prompt = std::move(prompt);
  auto parsed = parse_topics(raw_output, sentinel);
  r.raw_output = std::move(raw_output);
  r.topics = std::move(parsed.topics);
  r.is_sentinel = parsed.is_sentinel;
  return r;
}

}  // namespace topicllm
