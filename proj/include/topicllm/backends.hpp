#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <shared_mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include <httplib.h>

#include "topicllm/error.hpp"
#include "topicllm/hash.hpp"
#include "topicllm/text.hpp"

namespace topicllm {

inline constexpr std::size_t kDefaultEmbeddingDim = 384;

struct GenerationParams {
  double temperature = 0.0;
  int max_tokens = 64;
  std::string model_name;
};

struct Embedding {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
};

inline double dot(const Embedding& a, const Embedding& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) s += a.values[i] * b.values[i];
  return s;
}

inline double norm(const Embedding& a) { return std::sqrt(dot(a, a)); }

/// Cosine similarity clamped to [-1, 1]. Symmetric bit-for-bit: the dot
/// product and the norm product are both order independent.
inline double cosine(const Embedding& a, const Embedding& b) {
  if (a.dim() != b.dim()) {
    throw invalid_input("cosine: dimension mismatch (" + std::to_string(a.dim()) + " vs " +
                        std::to_string(b.dim()) + ")");
  }
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw invalid_input("cosine: zero-norm vector");
  const double c = dot(a, b) / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

inline void normalize_in_place(Embedding& e) {
  const double n = norm(e);
  if (n == 0.0) throw invalid_input("cannot normalize a zero vector");
  for (double& v : e.values) v /= n;
}

// ---------------------------------------------------------------------------
// Interfaces

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string complete(const std::string& prompt, const GenerationParams& params) = 0;
};

class EmbedBackend {
 public:
  virtual ~EmbedBackend() = default;
  virtual std::vector<Embedding> embed(const std::vector<std::string>& texts) = 0;
};

// ---------------------------------------------------------------------------
// Deterministic local embedder

namespace detail {

inline std::vector<std::size_t> codepoint_starts(std::string_view s) {
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if ((static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) starts.push_back(i);
  }
  return starts;
}

}  // namespace detail

/// Lowercased character trigrams (code points, not bytes). Strings shorter
/// than three characters contribute themselves as a single gram.
inline std::vector<std::string> char_trigrams(std::string_view text) {
  const std::string lower = ascii_lower(text);
  const auto starts = detail::codepoint_starts(lower);
  std::vector<std::string> grams;
  if (starts.size() < 3) {
    grams.push_back(lower);
    return grams;
  }
  for (std::size_t i = 0; i + 2 < starts.size(); ++i) {
    const std::size_t end = i + 3 < starts.size() ? starts[i + 3] : lower.size();
    grams.push_back(lower.substr(starts[i], end - starts[i]));
  }
  return grams;
}

inline Embedding embed_local(std::string_view text, std::size_t dim = kDefaultEmbeddingDim) {
  if (text.empty()) throw invalid_input("embed_local: empty string");
  Embedding e;
  e.values.assign(dim, 0.0);
  for (const auto& gram : char_trigrams(text)) {
    e.values[xxh64(gram) % dim] += 1.0;
  }
  normalize_in_place(e);
  return e;
}

/// Hashed character-trigram embedder. A pure function of the input text.
class LocalEmbedder : public EmbedBackend {
 public:
  explicit LocalEmbedder(std::size_t dim = kDefaultEmbeddingDim) : dim_(dim) {
    if (dim_ == 0) throw invalid_input("embedding dimension must be positive");
  }

  std::vector<Embedding> embed(const std::vector<std::string>& texts) override {
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_local(t, dim_));
    return out;
  }

  std::size_t dim() const { return dim_; }

 private:
  std::size_t dim_;
};

/// Fixed string -> vector table; anything not in the table goes to the
/// fallback embedder (or is an error when there is none).
class TableEmbedder : public EmbedBackend {
 public:
  explicit TableEmbedder(std::unordered_map<std::string, std::vector<double>> table,
                         std::shared_ptr<EmbedBackend> fallback = nullptr)
      : table_(std::move(table)), fallback_(std::move(fallback)) {}

  std::vector<Embedding> embed(const std::vector<std::string>& texts) override {
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
      auto it = table_.find(t);
      if (it != table_.end()) {
        out.push_back(Embedding{it->second});
      } else if (fallback_) {
        out.push_back(fallback_->embed({t}).front());
      } else {
        throw BackendError("no embedding registered for '" + t + "'");
      }
    }
    return out;
  }

 private:
  std::unordered_map<std::string, std::vector<double>> table_;
  std::shared_ptr<EmbedBackend> fallback_;
};

// ---------------------------------------------------------------------------
// Scripted and callback chat backends

inline std::string prompt_hash(std::string_view prompt) { return xxh64_hex(prompt); }

/// Canned completions loaded from jsonl. Each line is one of
///   {"prompt_hash": "<xxh64 hex of the prompt>", "completion": "..."}
///   {"prompt": "<exact prompt>", "completion": "..."}
///   {"contains": "<substring>", "completion": "..."}
///   {"default": true, "completion": "..."}
/// Exact hashes win; substring rules are tried in file order; the default
/// entry is the last resort.
class ScriptedChatBackend : public ChatBackend {
 public:
  ScriptedChatBackend() = default;

  static ScriptedChatBackend from_file(const std::filesystem::path& path) {
    ScriptedChatBackend backend;
    for_each_jsonl(path, [&](const json& obj, std::size_t lineno) {
      const std::string where = path.string() + ":" + std::to_string(lineno);
      if (!obj.contains("completion") || !obj["completion"].is_string()) {
        throw invalid_input(where + ": mock entry needs a string 'completion'");
      }
      std::string completion = obj["completion"].get<std::string>();
      if (obj.contains("prompt_hash")) {
        backend.add_hash(obj["prompt_hash"].get<std::string>(), completion);
      } else if (obj.contains("prompt")) {
        backend.add_prompt(obj["prompt"].get<std::string>(), completion);
      } else if (obj.contains("contains")) {
        backend.add_rule(obj["contains"].get<std::string>(), completion);
      } else if (obj.value("default", false)) {
        backend.set_default(completion);
      } else {
        throw invalid_input(where + ": mock entry needs prompt_hash, prompt, contains or default");
      }
    });
    return backend;
  }

  void add_hash(std::string hash, std::string completion) {
    by_hash_[ascii_lower(hash)] = std::move(completion);
  }
  void add_prompt(std::string_view prompt, std::string completion) {
    by_hash_[prompt_hash(prompt)] = std::move(completion);
  }
  void add_rule(std::string needle, std::string completion) {
    rules_.emplace_back(std::move(needle), std::move(completion));
  }
  void set_default(std::string completion) { default_ = std::move(completion); }

  std::string complete(const std::string& prompt, const GenerationParams&) override {
    if (auto it = by_hash_.find(prompt_hash(prompt)); it != by_hash_.end()) return it->second;
    for (const auto& [needle, completion] : rules_) {
      if (prompt.find(needle) != std::string::npos) return completion;
    }
    if (default_) return *default_;
    throw BackendError("mock script has no completion for prompt " + prompt_hash(prompt));
  }

 private:
  std::unordered_map<std::string, std::string> by_hash_;
  std::vector<std::pair<std::string, std::string>> rules_;
  std::optional<std::string> default_;
};

class FunctionChatBackend : public ChatBackend {
 public:
  using Fn = std::function<std::string(const std::string&, const GenerationParams&)>;

  explicit FunctionChatBackend(Fn fn) : fn_(std::move(fn)) {}

  std::string complete(const std::string& prompt, const GenerationParams& params) override {
    return fn_(prompt, params);
  }

 private:
  Fn fn_;
};

// ---------------------------------------------------------------------------
// OpenAI-compatible HTTP backends

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{8000};

  std::chrono::milliseconds delay_for(int retry) const {
    double ms = static_cast<double>(initial_backoff.count()) * std::pow(multiplier, retry);
    ms = std::min(ms, static_cast<double>(max_backoff.count()));
    return std::chrono::milliseconds(static_cast<long long>(ms));
  }
};

struct RemoteConfig {
  std::string base_url = "http://localhost:8000";
  std::string model;
  std::string api_key_env = "OPENAI_API_KEY";
  int timeout_seconds = 120;
  int max_in_flight = 4;
  RetryPolicy retry;
};

namespace detail {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // prefix without trailing slash
};

inline SplitUrl split_base_url(const std::string& base_url) {
  const auto scheme_end = base_url.find("://");
  const std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto slash = base_url.find('/', host_start);
  SplitUrl out;
  if (slash == std::string::npos) {
    out.origin = base_url;
  } else {
    out.origin = base_url.substr(0, slash);
    out.path = base_url.substr(slash);
    while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  }
  return out;
}

inline bool is_transient_status(int status) {
  return status == 408 || status == 429 || status >= 500;
}

}  // namespace detail

/// POSTs JSON to an OpenAI-compatible endpoint with bounded concurrency and
/// exponential backoff on connection errors, 408, 429 and 5xx responses.
class HttpJsonClient {
 public:
  struct Response {
    json body;
    int retries = 0;
  };

  explicit HttpJsonClient(RemoteConfig config)
      : config_(std::move(config)),
        url_(detail::split_base_url(config_.base_url)),
        in_flight_(std::max(1, config_.max_in_flight)) {}

  const RemoteConfig& config() const { return config_; }
  long long total_retries() const { return total_retries_.load(); }

  Response post(const std::string& path, const json& payload) {
    in_flight_.acquire();
    struct Release {
      std::counting_semaphore<>& sem;
      ~Release() { sem.release(); }
    } release{in_flight_};

    httplib::Client client(url_.origin);
    client.set_connection_timeout(10);
    client.set_read_timeout(config_.timeout_seconds);
    client.set_write_timeout(config_.timeout_seconds);
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
      client.set_bearer_token_auth(key);
    }

    const std::string full_path = url_.path + path;
    const std::string body = payload.dump();
    int last_status = 0;
    std::string last_error;
    for (int attempt = 0; attempt <= config_.retry.max_retries; ++attempt) {
      if (attempt > 0) {
        ++total_retries_;
        std::this_thread::sleep_for(config_.retry.delay_for(attempt - 1));
      }
      auto res = client.Post(full_path, body, "application/json");
      if (!res) {
        last_status = 0;
        last_error = httplib::to_string(res.error());
        continue;
      }
      last_status = res->status;
      if (res->status >= 200 && res->status < 300) {
        json parsed = json::parse(res->body, nullptr, false);
        if (parsed.is_discarded()) throw BackendError(full_path + ": response is not valid JSON", res->status);
        return Response{std::move(parsed), attempt};
      }
      if (res->status == 401 || res->status == 403) {
        throw BackendError(full_path + ": http " + std::to_string(res->status) + " (check credentials)",
                           res->status, true);
      }
      if (!detail::is_transient_status(res->status)) {
        throw BackendError(full_path + ": http " + std::to_string(res->status), res->status);
      }
      last_error = "http " + std::to_string(res->status);
    }
    const int retries = config_.retry.max_retries;
    if (last_status == 0) {
      throw BackendError(full_path + ": network failure after " + std::to_string(retries) +
                             " retries: " + last_error,
                         0, true);
    }
    throw BackendError(full_path + ": " + last_error + " after " + std::to_string(retries) + " retries",
                       last_status);
  }

 private:
  RemoteConfig config_;
  detail::SplitUrl url_;
  std::counting_semaphore<> in_flight_;
  std::atomic<long long> total_retries_{0};
};

class RemoteChatBackend : public ChatBackend {
 public:
  struct Result {
    std::string text;
    int retries = 0;
  };

  explicit RemoteChatBackend(RemoteConfig config) : client_(std::move(config)) {}

  Result complete_detailed(const std::string& prompt, const GenerationParams& params) {
    json payload;
    payload["model"] = params.model_name.empty() ? client_.config().model : params.model_name;
    payload["messages"] = json::array({{{"role", "user"}, {"content", prompt}}});
    payload["temperature"] = params.temperature;
    payload["max_tokens"] = params.max_tokens;
    auto res = client_.post("/v1/chat/completions", payload);
    const json& body = res.body;
    if (!body.contains("choices") || !body["choices"].is_array() || body["choices"].empty() ||
        !body["choices"][0].is_object() || !body["choices"][0].contains("message") ||
        !body["choices"][0]["message"].is_object() ||
        !body["choices"][0]["message"].contains("content") ||
        !body["choices"][0]["message"]["content"].is_string()) {
      throw BackendError("/v1/chat/completions: malformed response body", 200);
    }
    return Result{body["choices"][0]["message"]["content"].get<std::string>(), res.retries};
  }

  std::string complete(const std::string& prompt, const GenerationParams& params) override {
    return complete_detailed(prompt, params).text;
  }

  long long total_retries() const { return client_.total_retries(); }

 private:
  HttpJsonClient client_;
};

/// Append-only jsonl cache of remote embeddings keyed by
/// (provider, model, exact text). Writes are serialized.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::filesystem::path path) : path_(std::move(path)) {
    if (!std::filesystem::exists(path_)) return;
    for_each_jsonl(path_, [&](const json& obj, std::size_t) {
      entries_[key(obj.at("provider").get<std::string>(), obj.at("model").get<std::string>(),
                   obj.at("text").get<std::string>())] =
          Embedding{obj.at("embedding").get<std::vector<double>>()};
    });
  }

  std::optional<Embedding> get(const std::string& provider, const std::string& model,
                               const std::string& text) const {
    std::shared_lock lock(mu_);
    auto it = entries_.find(key(provider, model, text));
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  void put(const std::string& provider, const std::string& model, const std::string& text,
           const Embedding& e) {
    std::unique_lock lock(mu_);
    if (!entries_.emplace(key(provider, model, text), e).second) return;
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    json row = {{"provider", provider}, {"model", model}, {"text", text}, {"embedding", e.values}};
    out << row.dump() << '\n';
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return entries_.size();
  }

 private:
  static std::string key(const std::string& provider, const std::string& model, const std::string& text) {
    std::string k = provider;
    k += '\x1f';
    k += model;
    k += '\x1f';
    k += text;
    return k;
  }

  std::filesystem::path path_;
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, Embedding> entries_;
};

class RemoteEmbedBackend : public EmbedBackend {
 public:
  RemoteEmbedBackend(RemoteConfig config, std::size_t expected_dim = kDefaultEmbeddingDim,
                     std::shared_ptr<EmbeddingCache> cache = nullptr, std::size_t batch_size = 64)
      : client_(std::move(config)),
        expected_dim_(expected_dim),
        cache_(std::move(cache)),
        batch_size_(std::max<std::size_t>(1, batch_size)) {}

  std::vector<Embedding> embed(const std::vector<std::string>& texts) override {
    const std::string provider = client_.config().base_url;
    const std::string& model = client_.config().model;
    std::vector<Embedding> out(texts.size());
    std::vector<std::size_t> missing;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      if (texts[i].empty()) throw invalid_input("cannot embed an empty string");
      std::optional<Embedding> hit = cache_ ? cache_->get(provider, model, texts[i]) : std::nullopt;
      if (hit) {
        out[i] = std::move(*hit);
      } else {
        missing.push_back(i);
      }
    }
    for (std::size_t start = 0; start < missing.size(); start += batch_size_) {
      const std::size_t end = std::min(missing.size(), start + batch_size_);
      json input = json::array();
      for (std::size_t j = start; j < end; ++j) input.push_back(texts[missing[j]]);
      auto res = client_.post("/v1/embeddings", json{{"model", model}, {"input", input}});
      auto vectors = parse_embeddings(res.body, end - start);
      for (std::size_t j = start; j < end; ++j) {
        out[missing[j]] = std::move(vectors[j - start]);
        if (cache_) cache_->put(provider, model, texts[missing[j]], out[missing[j]]);
      }
    }
    return out;
  }

 private:
  std::vector<Embedding> parse_embeddings(const json& body, std::size_t expected) const {
    if (!body.contains("data") || !body["data"].is_array() || body["data"].size() != expected) {
      throw BackendError("/v1/embeddings: malformed response body", 200);
    }
    std::vector<Embedding> out(expected);
    for (std::size_t i = 0; i < expected; ++i) {
      const json& item = body["data"][i];
      if (!item.is_object() || !item.contains("embedding") || !item["embedding"].is_array()) {
        throw BackendError("/v1/embeddings: malformed response body", 200);
      }
      const std::size_t slot = item.contains("index") ? item["index"].get<std::size_t>() : i;
      if (slot >= expected) throw BackendError("/v1/embeddings: index out of range", 200);
      Embedding e;
      for (const auto& v : item["embedding"]) {
        if (!v.is_number()) throw BackendError("/v1/embeddings: non-numeric component", 200);
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw BackendError("/v1/embeddings: non-finite component", 200);
        e.values.push_back(d);
      }
      if (expected_dim_ != 0 && e.dim() != expected_dim_) {
        throw BackendError("/v1/embeddings: expected dim " + std::to_string(expected_dim_) + ", got " +
                               std::to_string(e.dim()),
                           200);
      }
      out[slot] = std::move(e);
    }
    return out;
  }

  HttpJsonClient client_;
  std::size_t expected_dim_;
  std::shared_ptr<EmbeddingCache> cache_;
  std::size_t batch_size_;
};

/// Embeds each distinct string once. Returns a lookup table.
inline std::unordered_map<std::string, Embedding> embed_unique(EmbedBackend& embedder,
                                                               const std::vector<std::string>& texts) {
  std::vector<std::string> distinct;
  std::unordered_map<std::string, Embedding> table;
  for (const auto& t : texts) {
    if (table.emplace(t, Embedding{}).second) distinct.push_back(t);
  }
  auto vectors = embedder.embed(distinct);
  if (vectors.size() != distinct.size()) throw BackendError("embedder returned wrong number of vectors");
  for (std::size_t i = 0; i < distinct.size(); ++i) table[distinct[i]] = std::move(vectors[i]);
  return table;
}

}  // namespace topicllm
