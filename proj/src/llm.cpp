#include <httplib.h>

#include <cstdlib>
#include <fstream>
#include <thread>

#include "deriva/llm.hpp"

namespace deriva::llm {

std::string_view to_string(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

namespace {

Role role_from_string(std::string_view s) {
  if (s == "system") return Role::System;
  if (s == "assistant") return Role::Assistant;
  if (s == "user") return Role::User;
  throw Error(Errc::InvalidConfig, "unknown role '" + std::string(s) + "'");
}

BackendKind backend_kind_from_string(std::string_view s) {
  if (s == "http" || s == "http_chat") return BackendKind::HttpChat;
  if (s == "scripted") return BackendKind::Scripted;
  throw Error(Errc::InvalidConfig, "unknown backend kind '" + std::string(s) + "'");
}

}  // namespace

std::string_view to_string(BackendKind k) { return k == BackendKind::HttpChat ? "http" : "scripted"; }

BackendConfig backend_config_from_json(const nlohmann::json& j) {
  BackendConfig c;
  try {
    if (j.contains("kind")) c.kind = backend_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("fixture_path")) c.fixture_path = j.at("fixture_path").get<std::string>();
    auto& h = c.http;
    if (j.contains("base_url")) h.base_url = j.at("base_url").get<std::string>();
    if (j.contains("model_name")) h.model_name = j.at("model_name").get<std::string>();
    if (j.contains("api_key_env_var")) h.api_key_env_var = j.at("api_key_env_var").get<std::string>();
    if (j.contains("temperature")) h.temperature = j.at("temperature").get<double>();
    if (j.contains("max_tokens")) h.max_tokens = j.at("max_tokens").get<int>();
    if (j.contains("timeout_ms")) h.timeout = std::chrono::milliseconds(j.at("timeout_ms").get<long>());
    if (j.contains("max_retries")) h.max_retries = j.at("max_retries").get<int>();
    if (j.contains("initial_backoff_ms"))
      h.initial_backoff = std::chrono::milliseconds(j.at("initial_backoff_ms").get<long>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("backend config: ") + e.what());
  }
  if (c.kind == BackendKind::Scripted && c.fixture_path.empty())
    throw Error(Errc::InvalidConfig, "scripted backend needs fixture_path");
  if (c.http.max_retries < 0 || c.http.max_tokens <= 0)
    throw Error(Errc::InvalidConfig, "max_retries must be >= 0 and max_tokens > 0");
  return c;
}

nlohmann::json to_json(const BackendConfig& c) {
  nlohmann::json j;
  j["kind"] = to_string(c.kind);
  if (c.kind == BackendKind::Scripted) {
    j["fixture_path"] = c.fixture_path;
  } else {
    j["base_url"] = c.http.base_url;
    j["model_name"] = c.http.model_name;
    j["api_key_env_var"] = c.http.api_key_env_var;
    j["temperature"] = c.http.temperature;
    j["max_tokens"] = c.http.max_tokens;
    j["timeout_ms"] = c.http.timeout.count();
    j["max_retries"] = c.http.max_retries;
    j["initial_backoff_ms"] = c.http.initial_backoff.count();
  }
  return j;
}

namespace {

nlohmann::json messages_to_json(const std::vector<ChatMessage>& messages) {
  auto arr = nlohmann::json::array();
  for (const auto& m : messages) arr.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return arr;
}

}  // namespace

nlohmann::json to_json(const ChatExchange& e) {
  return {{"step_label", e.step_label},
          {"request", messages_to_json(e.request)},
          {"response", e.response},
          {"latency_ms", e.latency_ms},
          {"backend_kind", to_string(e.backend_kind)}};
}

ChatExchange chat_exchange_from_json(const nlohmann::json& j) {
  ChatExchange e;
  e.step_label = j.at("step_label").get<std::string>();
  for (const auto& m : j.at("request"))
    e.request.push_back({role_from_string(m.at("role").get<std::string>()), m.at("content").get<std::string>()});
  e.response = j.at("response").get<std::string>();
  e.latency_ms = j.at("latency_ms").get<double>();
  e.backend_kind = backend_kind_from_string(j.at("backend_kind").get<std::string>());
  return e;
}

nlohmann::json transcript_to_json(const std::vector<ChatExchange>& transcript) {
  auto arr = nlohmann::json::array();
  for (const auto& e : transcript) arr.push_back(to_json(e));
  return arr;
}

// ---- scripted ----

ScriptedBackend::ScriptedBackend(std::map<std::string, std::vector<std::string>> fixture) {
  for (auto& [label, responses] : fixture)
    queues_.emplace(label, std::deque<std::string>(responses.begin(), responses.end()));
}

ScriptedBackend ScriptedBackend::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(Errc::InvalidConfig, "fixture must be an object of label -> [responses]");
  std::map<std::string, std::vector<std::string>> fixture;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it.value().is_array()) throw Error(Errc::InvalidConfig, "fixture entry '" + it.key() + "' is not an array");
    auto& out = fixture[it.key()];
    for (const auto& r : it.value()) {
      if (!r.is_string()) throw Error(Errc::InvalidConfig, "fixture entry '" + it.key() + "' holds a non-string");
      out.push_back(r.get<std::string>());
    }
  }
  return ScriptedBackend(std::move(fixture));
}

ScriptedBackend ScriptedBackend::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open fixture " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidConfig, "fixture " + path + ": " + e.what());
  }
  return from_json(j);
}

std::string ScriptedBackend::send(const std::vector<ChatMessage>&, std::string_view step_label) {
  std::lock_guard lock(mu_);
  auto it = queues_.find(step_label);
  if (it == queues_.end() || it->second.empty())
    throw Error(Errc::FixtureExhausted, "no scripted response left for '" + std::string(step_label) + "'");
  std::string r = std::move(it->second.front());
  it->second.pop_front();
  return r;
}

std::size_t ScriptedBackend::remaining(std::string_view step_label) const {
  std::lock_guard lock(mu_);
  auto it = queues_.find(step_label);
  return it == queues_.end() ? 0 : it->second.size();
}

// ---- http ----

HttpChatBackend::HttpChatBackend(HttpSettings settings) : settings_(std::move(settings)) {
  if (!settings_.api_key_env_var.empty()) {
    const char* v = std::getenv(settings_.api_key_env_var.c_str());
    if (v == nullptr || *v == '\0')
      throw Error(Errc::AuthMissing, "environment variable " + settings_.api_key_env_var + " is not set");
    api_key_ = v;
  }
}

nlohmann::json HttpChatBackend::request_body(const std::vector<ChatMessage>& messages) const {
  return {{"model", settings_.model_name},
          {"temperature", settings_.temperature},
          {"max_tokens", settings_.max_tokens},
          {"messages", messages_to_json(messages)}};
}

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // without trailing slash
};

SplitUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(Errc::InvalidConfig, "base_url needs a scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  SplitUrl s;
  s.origin = url.substr(0, path_start);
  s.path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!s.path.empty() && s.path.back() == '/') s.path.pop_back();
  return s;
}

std::string excerpt(const std::string& body) { return body.size() > 300 ? body.substr(0, 300) + "..." : body; }

}  // namespace

std::string HttpChatBackend::send(const std::vector<ChatMessage>& messages, std::string_view) {
  const auto url = split_url(settings_.base_url);
  httplib::Client client(url.origin);
  const auto secs = settings_.timeout.count() / 1000;
  const auto usecs = (settings_.timeout.count() % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  const std::string body = request_body(messages).dump();
  const std::string path = url.path + "/chat/completions";

  Error last(Errc::HttpError, "no attempt made");
  for (int attempt = 0; attempt <= settings_.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(settings_.initial_backoff * (1LL << (attempt - 1)));
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      const auto err = res.error();
      const bool timed_out = err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read;
      last = Error(timed_out ? Errc::Timeout : Errc::HttpError, "transport: " + httplib::to_string(err));
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last = Error(Errc::HttpError, "status " + std::to_string(res->status) + ": " + excerpt(res->body));
      continue;
    }
    if (res->status < 200 || res->status >= 300)
      throw Error(Errc::HttpError, "status " + std::to_string(res->status) + ": " + excerpt(res->body));
    try {
      auto j = nlohmann::json::parse(res->body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw Error(Errc::HttpError, "status " + std::to_string(res->status) + ": malformed completion body");
    }
  }
  throw last;
}

std::unique_ptr<ChatBackend> make_backend(const BackendConfig& config) {
  if (config.kind == BackendKind::Scripted)
    return std::make_unique<ScriptedBackend>(ScriptedBackend::from_file(config.fixture_path));
  return std::make_unique<HttpChatBackend>(config.http);
}

Completion complete(ChatBackend& backend, const std::vector<ChatMessage>& messages, std::string_view step_label) {
  const auto start = std::chrono::steady_clock::now();
  Completion c;
  c.text = backend.send(messages, step_label);
  const auto elapsed = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  c.exchange.step_label = std::string(step_label);
  c.exchange.request = messages;
  c.exchange.response = c.text;
  c.exchange.backend_kind = backend.kind();
  c.exchange.latency_ms = backend.kind() == BackendKind::Scripted ? 0.0 : elapsed;
  return c;
}

}  // namespace deriva::llm
