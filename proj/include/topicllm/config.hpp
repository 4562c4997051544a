#pragma once

#include <charconv>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "topicllm/error.hpp"
#include "topicllm/hash.hpp"
#include "topicllm/text.hpp"

namespace topicllm {

/// Flat `key = value` settings. Every key has a default; unknown keys are
/// rejected so typos surface immediately.
class Config {
 public:
  Config() : values_(defaults()) {}

  static const std::map<std::string, std::string>& defaults() {
    static const std::map<std::string, std::string> d = {
        {"chat.backend", "mock"},
        {"chat.base_url", "http://localhost:8000"},
        {"chat.model", "mistral-7b-instruct"},
        {"chat.api_key_env", "OPENAI_API_KEY"},
        {"chat.temperature", "0.0"},
        {"chat.max_tokens", "64"},
        {"chat.max_in_flight", "4"},
        {"chat.max_retries", "3"},
        {"chat.initial_backoff_ms", "500"},
        {"mock.script", ""},
        {"embed.provider", "local"},
        {"embed.base_url", "http://localhost:8000"},
        {"embed.model", "all-MiniLM-L6-v2"},
        {"embed.dim", "384"},
        {"embed.cache", ""},
        {"prompt.template", ""},
        {"prompt.sentinel", "No related topics"},
        {"prompt.max_doc_chars", "6000"},
        {"prompt.strategy", "baseline"},
        {"prompt.granularity", ""},
        {"prompt.seeds", ""},
        {"cluster.threshold", "0.55"},
        {"cluster.candidates", "30"},
        {"judge.tau_instruction", "0.4"},
        {"judge.tau_document", "0.4"},
        {"dynamic.warmup", "20"},
        {"dynamic.seed_k", "10"},
        {"dpo.beta", "0.1"},
        {"split.val_fraction", "0.17647058823529413"},
        {"seed", "42"},
        {"eval.similar_n", "10"},
        {"eval.mi_mode", "per-document"},
        {"parallelism", "4"},
    };
    return d;
  }

  static Config from_file(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw missing_input("config file not found: " + path.string());
    Config c;
    std::size_t lineno = 0;
    for (const auto& raw : split(read_file(path), '\n')) {
      ++lineno;
      std::string line = trim(raw);
      if (line.empty() || line[0] == '#') continue;
      auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw Error(ErrorKind::kInvalidConfig, path.string() + ":" + std::to_string(lineno) + ": expected key = value");
      }
      c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return c;
  }

  void set(const std::string& key, const std::string& value) {
    if (!defaults().count(key)) throw Error(ErrorKind::kInvalidConfig, "unknown config key '" + key + "'");
    values_[key] = value;
  }

  /// "key=value" form used by --set.
  void set_assignment(const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::kInvalidConfig, "expected key=value, got '" + assignment + "'");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
  }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw Error(ErrorKind::kInvalidConfig, "unknown config key '" + key + "'");
    return it->second;
  }

  double real(const std::string& key) const {
    const std::string& s = str(key);
    try {
      std::size_t used = 0;
      double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw Error(ErrorKind::kInvalidConfig, "config key '" + key + "' is not a number: '" + s + "'");
    }
  }

  long long integer(const std::string& key) const {
    const std::string& s = str(key);
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw Error(ErrorKind::kInvalidConfig, "config key '" + key + "' is not an integer: '" + s + "'");
    }
    return v;
  }

  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    for (const auto& part : split(str(key), ',')) {
      std::string t = trim(part);
      if (!t.empty()) out.push_back(std::move(t));
    }
    return out;
  }

  void validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorKind::kInvalidConfig, what); };
    auto in_unit = [&](const char* key, bool allow_zero) {
      const double v = real(key);
      if (!(allow_zero ? v >= 0.0 : v > 0.0) || v > 1.0) fail(std::string(key) + " must be in " + (allow_zero ? "[0, 1]" : "(0, 1]"));
    };
    auto positive = [&](const char* key) {
      if (integer(key) < 1) fail(std::string(key) + " must be a positive integer");
    };

    const auto& backend = str("chat.backend");
    if (backend != "mock" && backend != "remote") fail("chat.backend must be 'mock' or 'remote'");
    const auto& provider = str("embed.provider");
    if (provider != "local" && provider != "remote") fail("embed.provider must be 'local' or 'remote'");
    if (real("chat.temperature") < 0.0) fail("chat.temperature must be non-negative");
    positive("chat.max_tokens");
    positive("chat.max_in_flight");
    if (integer("chat.max_retries") < 0) fail("chat.max_retries must be non-negative");
    if (integer("chat.initial_backoff_ms") < 0) fail("chat.initial_backoff_ms must be non-negative");
    positive("embed.dim");
    positive("prompt.max_doc_chars");
    if (trim(str("prompt.sentinel")).empty()) fail("prompt.sentinel must be nonempty");
    in_unit("cluster.threshold", false);
    positive("cluster.candidates");
    in_unit("judge.tau_instruction", true);
    in_unit("judge.tau_document", true);
    if (integer("dynamic.warmup") < 0) fail("dynamic.warmup must be non-negative");
    positive("dynamic.seed_k");
    if (!(real("dpo.beta") > 0.0)) fail("dpo.beta must be positive");
    const double vf = real("split.val_fraction");
    if (!(vf >= 0.0 && vf < 1.0)) fail("split.val_fraction must be in [0, 1)");
    if (integer("seed") < 0) fail("seed must be non-negative");
    if (integer("eval.similar_n") < 2) fail("eval.similar_n must be at least 2");
    const auto& mode = str("eval.mi_mode");
    if (mode != "per-document" && mode != "global") fail("eval.mi_mode must be 'per-document' or 'global'");
    positive("parallelism");
    for (const char* key : {"mock.script", "prompt.template"}) {
      if (!str(key).empty() && !std::filesystem::exists(str(key))) {
        throw missing_input(std::string(key) + " points to a missing file: " + str(key));
      }
    }
  }

  /// Canonical `key=value` lines in key order.
  std::string canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

  std::string hash() const { return xxh64_hex(canonical()); }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace topicllm
