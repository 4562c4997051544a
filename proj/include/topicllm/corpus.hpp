#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "topicllm/error.hpp"
#include "topicllm/text.hpp"

namespace topicllm {

struct Document {
  std::string id;
  std::string text;
  std::optional<std::string> label;
  std::optional<std::string> category;
};

struct Corpus {
  std::string name;
  std::vector<Document> documents;

  std::size_t size() const { return documents.size(); }
  bool empty() const { return documents.empty(); }

  const Document* find(std::string_view id) const {
    for (const auto& d : documents) {
      if (d.id == id) return &d;
    }
    return nullptr;
  }
};

enum class CorpusFormat { kJsonl, kDirectory };

struct LoadOptions {
  CorpusFormat format = CorpusFormat::kJsonl;
  // Directory ingestion only: drop the leading "Key: value" header block.
  bool strip_headers = false;
};

namespace detail {

inline const std::map<std::string, std::string>& label_abbreviations() {
  static const std::map<std::string, std::string> table = {
      {"comp", "Computer"}, {"rec", "Recreation"},  {"sci", "Science"},
      {"soc", "Social"},    {"talk", "Talk"},       {"alt", "Alternative"},
      {"misc", "Miscellaneous"}, {"sys", "System"},
  };
  return table;
}

inline std::string title_case(std::string_view token) {
  std::string out = ascii_lower(token);
  if (!out.empty() && out[0] >= 'a' && out[0] <= 'z') out[0] = static_cast<char>(out[0] - 'a' + 'A');
  return out;
}

inline bool is_header_line(std::string_view line) {
  auto colon = line.find(':');
  if (colon == std::string_view::npos || colon == 0) return false;
  for (std::size_t i = 0; i < colon; ++i) {
    char c = line[i];
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')) return false;
  }
  return true;
}

inline std::string strip_header_block(const std::string& text) {
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view line(text.data() + pos, (nl == std::string::npos ? text.size() : nl) - pos);
    if (!is_header_line(line)) break;
    pos = nl == std::string::npos ? text.size() : nl + 1;
  }
  return text.substr(pos);
}

}  // namespace detail

/// Maps dotted newsgroup labels ("comp.graphics") to readable phrases
/// ("Computer Graphics"). Labels containing whitespace or no dot are
/// treated as already readable and only trimmed.
inline std::string normalize_label(std::string_view raw) {
  std::string label = trim(raw);
  bool dotted = label.find('.') != std::string::npos &&
                std::none_of(label.begin(), label.end(), is_space);
  if (!dotted) return label;

  std::vector<std::string> words;
  for (const auto& token : split(label, '.')) {
    if (token.empty()) continue;
    auto it = detail::label_abbreviations().find(ascii_lower(token));
    words.push_back(it != detail::label_abbreviations().end() ? it->second : detail::title_case(token));
  }
  return join(words, " ");
}

inline Document document_from_json(const json& obj, const std::string& where) {
  auto string_field = [&](const char* key, bool required) -> std::optional<std::string> {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
      if (required) throw invalid_input(where + ": missing required field '" + key + "'");
      return std::nullopt;
    }
    if (!it->is_string()) throw invalid_input(where + ": field '" + key + "' must be a string");
    return it->get<std::string>();
  };
  Document d;
  d.id = *string_field("id", true);
  d.text = *string_field("text", true);
  d.label = string_field("label", false);
  d.category = string_field("category", false);
  if (d.id.empty()) throw invalid_input(where + ": empty id");
  if (trim(d.text).empty()) throw invalid_input(where + ": empty text for id '" + d.id + "'");
  return d;
}

inline nlohmann::ordered_json document_to_json(const Document& d) {
  nlohmann::ordered_json obj;
  obj["id"] = d.id;
  obj["text"] = d.text;
  if (d.label) obj["label"] = *d.label;
  if (d.category) obj["category"] = *d.category;
  return obj;
}

/// Serializes a corpus as jsonl with keys in the order id, text, label, category.
inline std::string corpus_to_jsonl(const Corpus& corpus) {
  std::string out;
  for (const auto& d : corpus.documents) {
    out += document_to_json(d).dump();
    out += '\n';
  }
  return out;
}

inline Corpus load_corpus_jsonl(const std::filesystem::path& path) {
  Corpus corpus;
  corpus.name = path.stem().string();
  std::unordered_set<std::string> seen;
  for_each_jsonl(path, [&](const json& obj, std::size_t lineno) {
    auto doc = document_from_json(obj, path.string() + ":" + std::to_string(lineno));
    if (!seen.insert(doc.id).second) {
      throw invalid_input(path.string() + ":" + std::to_string(lineno) + ": duplicate id '" + doc.id + "'");
    }
    corpus.documents.push_back(std::move(doc));
  });
  return corpus;
}

/// One text file per document under `root/<label>/...`. Ids are the paths
/// relative to root; files are visited in lexicographic path order.
inline Corpus load_corpus_directory(const std::filesystem::path& root, bool strip_headers) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw missing_input("corpus directory not found: " + root.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  Corpus corpus;
  corpus.name = root.filename().string();
  for (const auto& file : files) {
    Document d;
    d.id = fs::relative(file, root).generic_string();
    d.text = read_file(file);
    if (strip_headers) d.text = detail::strip_header_block(d.text);
    if (trim(d.text).empty()) continue;
    auto parent = fs::relative(file.parent_path(), root);
    if (!parent.empty() && parent != ".") {
      d.label = file.parent_path().filename().string();
      d.category = parent.generic_string();
    }
    corpus.documents.push_back(std::move(d));
  }
  return corpus;
}

inline Corpus load_corpus(const std::filesystem::path& path, const LoadOptions& opts = {}) {
  if (!std::filesystem::exists(path)) throw missing_input("corpus not found: " + path.string());
  switch (opts.format) {
    case CorpusFormat::kJsonl:
      return load_corpus_jsonl(path);
    case CorpusFormat::kDirectory:
      return load_corpus_directory(path, opts.strip_headers);
  }
  throw invalid_input("unsupported corpus format");
}

inline CorpusFormat parse_corpus_format(std::string_view name) {
  if (name == "jsonl") return CorpusFormat::kJsonl;
  if (name == "dir" || name == "directory") return CorpusFormat::kDirectory;
  throw invalid_input("unsupported corpus format '" + std::string(name) + "'");
}

}  // namespace topicllm
