#pragma once

// Uniform chat/embedding client. Profiles are named model configurations
// backed by a transport (HTTP or an in-process double), fronted by a
// content-addressed disk cache, exponential-backoff retry and an in-flight
// limit. With a warm cache no operation touches the network, which is what
// makes the whole pipeline replayable offline.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "emerge/common.hpp"

namespace emerge {

struct ChatRequest {
  std::string profile;
  std::string prompt;
  double temperature = 0.0;
  int max_tokens = 1024;
};

struct GatewayResponse {
  std::string text;
  bool cached = false;
  int latency_ms = 0;
  int attempt_count = 0;
};

class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  virtual std::string chat(const ChatRequest& req) = 0;
};

class EmbedTransport {
 public:
  virtual ~EmbedTransport() = default;
  virtual std::vector<double> embed(const std::string& text) = 0;
};

struct RetryPolicy {
  int max_attempts = 3;
  int base_delay_ms = 100;
  double multiplier = 2.0;
};

struct GatewayProfile {
  enum class Kind { chat, embed };
  Kind kind = Kind::chat;
  std::shared_ptr<ChatTransport> chat_transport;
  std::shared_ptr<EmbedTransport> embed_transport;
  int dim = 0;  // embedders: declared output dimension
};

class Gateway {
 public:
  explicit Gateway(std::filesystem::path cache_dir = {}, int max_in_flight = 8,
                   RetryPolicy retry = {})
      : cache_dir_(std::move(cache_dir)), max_in_flight_(max_in_flight), retry_(retry) {}

  void add_chat_profile(const std::string& name, std::shared_ptr<ChatTransport> transport) {
    GatewayProfile p;
    p.kind = GatewayProfile::Kind::chat;
    p.chat_transport = std::move(transport);
    profiles_[name] = std::move(p);
  }

  void add_embed_profile(const std::string& name, std::shared_ptr<EmbedTransport> transport,
                         int dim) {
    if (dim <= 0) throw ConfigError("embed profile '" + name + "' needs a positive dim");
    GatewayProfile p;
    p.kind = GatewayProfile::Kind::embed;
    p.embed_transport = std::move(transport);
    p.dim = dim;
    profiles_[name] = std::move(p);
  }

  bool has_profile(const std::string& name) const { return profiles_.count(name) > 0; }

  int profile_dim(const std::string& name) const {
    return embed_profile(name).dim;
  }

  GatewayResponse chat(const ChatRequest& req) {
    const GatewayProfile& profile = chat_profile(req.profile);
    char tbuf[64];
    std::snprintf(tbuf, sizeof(tbuf), "%.17g", req.temperature);
    std::string key = sha256_hex(req.profile + '\x1f' + "chat" + '\x1f' + req.prompt + '\x1f' +
                                 tbuf + '\x1f' + std::to_string(req.max_tokens));
    auto t0 = std::chrono::steady_clock::now();
    if (auto hit = cache_read(req.profile, key)) {
      GatewayResponse resp;
      resp.text = hit->at("text").get<std::string>();
      resp.cached = true;
      resp.attempt_count = 0;
      resp.latency_ms = elapsed_ms(t0);
      ++cache_hits_;
      return resp;
    }
    GatewayResponse resp;
    resp.text = with_retry(req.profile, resp.attempt_count, [&] {
      return profile.chat_transport->chat(req);
    });
    resp.cached = false;
    resp.latency_ms = elapsed_ms(t0);
    ojson entry;
    entry["request_hash"] = key;
    entry["text"] = resp.text;
    entry["created_at"] = now_iso();
    cache_write(req.profile, key, entry);
    return resp;
  }

  std::vector<double> embed(const std::string& profile_name, const std::string& text) {
    const GatewayProfile& profile = embed_profile(profile_name);
    std::string key = sha256_hex(profile_name + '\x1f' + "embed" + '\x1f' + text);
    if (auto hit = cache_read(profile_name, key)) {
      ++cache_hits_;
      return hit->at("vector").get<std::vector<double>>();
    }
    int attempts = 0;
    std::vector<double> v = with_retry(profile_name, attempts, [&] {
      return profile.embed_transport->embed(text);
    });
    if (static_cast<int>(v.size()) != profile.dim) {
      throw ValidationError("embed profile '" + profile_name + "' declared dim " +
                            std::to_string(profile.dim) + " but returned " +
                            std::to_string(v.size()));
    }
    ojson entry;
    entry["request_hash"] = key;
    entry["vector"] = v;
    entry["created_at"] = now_iso();
    cache_write(profile_name, key, entry);
    return v;
  }

  EmbedFnView embed_fn(const std::string& profile_name) {
    return [this, profile_name](const std::string& text) { return embed(profile_name, text); };
  }

  long network_calls() const { return network_calls_.load(); }
  long cache_hits() const { return cache_hits_.load(); }
  const std::filesystem::path& cache_dir() const { return cache_dir_; }

 private:
  using EmbedFnView = std::function<std::vector<double>(const std::string&)>;

  const GatewayProfile& chat_profile(const std::string& name) const {
    auto it = profiles_.find(name);
    if (it == profiles_.end() || it->second.kind != GatewayProfile::Kind::chat) {
      throw ConfigError("no chat profile named '" + name + "'");
    }
    return it->second;
  }

  const GatewayProfile& embed_profile(const std::string& name) const {
    auto it = profiles_.find(name);
    if (it == profiles_.end() || it->second.kind != GatewayProfile::Kind::embed) {
      throw ConfigError("no embed profile named '" + name + "'");
    }
    return it->second;
  }

  static int elapsed_ms(std::chrono::steady_clock::time_point t0) {
    return static_cast<int>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                std::chrono::steady_clock::now() - t0)
                                .count());
  }

  static std::string now_iso() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm_utc;
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
  }

  std::filesystem::path cache_path(const std::string& profile, const std::string& key) const {
    return cache_dir_ / profile / (key + ".json");
  }

  std::optional<json> cache_read(const std::string& profile, const std::string& key) const {
    if (cache_dir_.empty()) return std::nullopt;
    std::filesystem::path p = cache_path(profile, key);
    std::error_code ec;
    if (!std::filesystem::exists(p, ec)) return std::nullopt;
    return json::parse(read_file(p));
  }

  void cache_write(const std::string& profile, const std::string& key, const ojson& entry) {
    if (cache_dir_.empty()) return;
    std::filesystem::path p = cache_path(profile, key);
    std::error_code ec;
    if (std::filesystem::exists(p, ec)) return;  // content-addressed, immutable
    write_file_atomic(p, entry.dump());
  }

  // Retries transport failures with exponential backoff. Content-risk
  // refusals are definitive: never retried, never cached.
  template <class Fn>
  auto with_retry(const std::string& profile, int& attempts, Fn&& fn) -> decltype(fn()) {
    InFlightGuard guard(*this);
    std::string last_error;
    for (int attempt = 1; attempt <= retry_.max_attempts; ++attempt) {
      attempts = attempt;
      try {
        ++network_calls_;
        return fn();
      } catch (const ContentRiskError&) {
        throw;
      } catch (const std::exception& e) {
        last_error = e.what();
        if (attempt < retry_.max_attempts && retry_.base_delay_ms > 0) {
          auto delay = static_cast<long>(retry_.base_delay_ms *
                                         std::pow(retry_.multiplier, attempt - 1));
          std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        }
      }
    }
    throw TransportError("profile '" + profile + "': exhausted " +
                         std::to_string(retry_.max_attempts) + " attempts; last error: " +
                         last_error);
  }

  struct InFlightGuard {
    explicit InFlightGuard(Gateway& g) : gw(g) {
      std::unique_lock<std::mutex> lock(gw.flight_mu_);
      gw.flight_cv_.wait(lock, [&] { return gw.in_flight_ < gw.max_in_flight_; });
      ++gw.in_flight_;
    }
    ~InFlightGuard() {
      {
        std::lock_guard<std::mutex> lock(gw.flight_mu_);
        --gw.in_flight_;
      }
      gw.flight_cv_.notify_one();
    }
    Gateway& gw;
  };

  std::filesystem::path cache_dir_;
  int max_in_flight_ = 8;
  RetryPolicy retry_;
  std::map<std::string, GatewayProfile> profiles_;
  std::atomic<long> network_calls_{0};
  std::atomic<long> cache_hits_{0};
  std::mutex flight_mu_;
  std::condition_variable flight_cv_;
  int in_flight_ = 0;
};

// ---------------------------------------------------------------------------
// test doubles and offline providers

// Replies from a fixed function of the request; the workhorse for tests.
class ScriptedChat : public ChatTransport {
 public:
  explicit ScriptedChat(std::function<std::string(const ChatRequest&)> fn) : fn_(std::move(fn)) {}
  explicit ScriptedChat(std::string fixed)
      : fn_([t = std::move(fixed)](const ChatRequest&) { return t; }) {}
  std::string chat(const ChatRequest& req) override {
    ++calls_;
    return fn_(req);
  }
  int calls() const { return calls_; }

 private:
  std::function<std::string(const ChatRequest&)> fn_;
  int calls_ = 0;
};

class RefusingChat : public ChatTransport {
 public:
  std::string chat(const ChatRequest&) override {
    throw ContentRiskError("Content Exists Risk");
  }
};

class FlakyChat : public ChatTransport {
 public:
  FlakyChat(int failures_before_success, std::string text)
      : remaining_failures_(failures_before_success), text_(std::move(text)) {}
  std::string chat(const ChatRequest&) override {
    if (remaining_failures_-- > 0) throw TransportError("simulated transport failure");
    return text_;
  }

 private:
  int remaining_failures_;
  std::string text_;
};

// Deterministic feature-hashing bag-of-words embedder; unit-normalized
// output, zero vector for empty text.
class HashEmbedder : public EmbedTransport {
 public:
  explicit HashEmbedder(int dim) : dim_(dim) {
    if (dim <= 0) throw ConfigError("HashEmbedder dim must be positive");
  }
  std::vector<double> embed(const std::string& text) override {
    std::vector<double> v(dim_, 0.0);
    std::string cleaned = to_lower(text);
    for (char& c : cleaned) {
      if (!std::isalnum(static_cast<unsigned char>(c))) c = ' ';
    }
    double norm2 = 0.0;
    for (const std::string& token : split(squeeze_spaces(cleaned), ' ')) {
      if (token.empty()) continue;
      uint64_t h = fnv1a64(token);
      size_t bucket = h % static_cast<uint64_t>(dim_);
      double sign = (h >> 63) ? -1.0 : 1.0;
      v[bucket] += sign;
    }
    for (double x : v) norm2 += x * x;
    if (norm2 > 0.0) {
      double inv = 1.0 / std::sqrt(norm2);
      for (double& x : v) x *= inv;
    }
    return v;
  }

 private:
  int dim_;
};

// Fixed text -> vector table; unknown texts are an error.
class FixtureEmbedder : public EmbedTransport {
 public:
  explicit FixtureEmbedder(std::map<std::string, std::vector<double>> table)
      : table_(std::move(table)) {}
  std::vector<double> embed(const std::string& text) override {
    auto it = table_.find(text);
    if (it == table_.end()) throw TransportError("no fixture embedding for '" + text + "'");
    return it->second;
  }

 private:
  std::map<std::string, std::vector<double>> table_;
};

// Counts calls and always fails; used to prove warm-cache runs stay offline.
class UnreachableChat : public ChatTransport {
 public:
  std::string chat(const ChatRequest&) override {
    ++calls_;
    throw TransportError("network unavailable");
  }
  int calls() const { return calls_; }

 private:
  int calls_ = 0;
};

class UnreachableEmbed : public EmbedTransport {
 public:
  std::vector<double> embed(const std::string&) override {
    ++calls_;
    throw TransportError("network unavailable");
  }
  int calls() const { return calls_; }

 private:
  int calls_ = 0;
};

// ---------------------------------------------------------------------------
// HTTP transports (OpenAI-compatible endpoint shape)

struct HttpEndpoint {
  std::string base_url;  // e.g. "http://localhost:8089/v1"
  std::string model;
  std::string api_key;   // usually from EMERGE_API_KEY
};

namespace detail {

// Defined in gateway_http.hpp to keep the large HTTP header out of every
// translation unit; declared here so the factory below can be used without
// it when only doubles are needed.
std::string http_post_json(const HttpEndpoint& ep, const std::string& path,
                           const std::string& body);

}  // namespace detail

class HttpChatTransport : public ChatTransport {
 public:
  explicit HttpChatTransport(HttpEndpoint ep) : ep_(std::move(ep)) {}
  std::string chat(const ChatRequest& req) override {
    ojson body;
    body["model"] = ep_.model;
    body["messages"] = ojson::array({ojson{{"role", "user"}, {"content", req.prompt}}});
    body["temperature"] = req.temperature;
    body["max_tokens"] = req.max_tokens;
    std::string reply = detail::http_post_json(ep_, "/chat/completions", body.dump());
    json j = json::parse(reply);
    if (j.contains("error")) {
      std::string msg = j["error"].value("message", "unknown error");
      if (contains(msg, "Content Exists Risk")) throw ContentRiskError(msg);
      throw TransportError("chat endpoint error: " + msg);
    }
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  }

 private:
  HttpEndpoint ep_;
};

class HttpEmbedTransport : public EmbedTransport {
 public:
  explicit HttpEmbedTransport(HttpEndpoint ep) : ep_(std::move(ep)) {}
  std::vector<double> embed(const std::string& text) override {
    ojson body;
    body["model"] = ep_.model;
    body["input"] = text;
    std::string reply = detail::http_post_json(ep_, "/embeddings", body.dump());
    json j = json::parse(reply);
    if (j.contains("error")) {
      throw TransportError("embedding endpoint error: " + j["error"].value("message", "unknown"));
    }
    return j.at("data").at(0).at("embedding").get<std::vector<double>>();
  }

 private:
  HttpEndpoint ep_;
};

}  // namespace emerge
