#pragma once

#include <chrono>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "deriva/error.hpp"

namespace deriva::llm {

enum class Role { System, User, Assistant };

std::string_view to_string(Role r);

struct ChatMessage {
  Role role = Role::User;
  std::string content;
};

enum class TemplateId { DomainSketch, CodeGen, Reflector, Summarizer };

/// Python: the original prompt texts with "### Python" blocks.
/// Formula: same prompts, asking for formula-language programs in "### FORMULA" blocks.
enum class PromptStyle { Python, Formula };

inline constexpr std::string_view kPythonMarker = "### Python";
inline constexpr std::string_view kFormulaMarker = "### FORMULA";

struct PromptTemplate {
  TemplateId id;
  std::string body;
  std::set<std::string> variables;
};

const PromptTemplate& builtin_template(TemplateId id, PromptStyle style);
std::string_view marker_for(PromptStyle style);

/// Substitutes every {name} placeholder. Throws MissingVariable / UnknownPlaceholder.
std::string render_template(const PromptTemplate& tmpl, const std::map<std::string, std::string>& vars);

/// Text strictly between the first two lines equal (after trimming) to `marker`;
/// everything after the marker when only one exists. Throws MarkerNotFound.
std::string extract_block(std::string_view text, std::string_view marker);

struct Reflection {
  std::string diagnosis;
  std::string new_sketch;
};

/// Splits a reflector reply at its "### New Sketch:" heading. Throws MalformedReflection.
Reflection parse_reflection(std::string_view text);

enum class BackendKind { HttpChat, Scripted };

std::string_view to_string(BackendKind k);

struct HttpSettings {
  std::string base_url = "https://api.openai.com/v1";
  std::string model_name = "gpt-4o";
  /// Environment variable holding the API key; empty means no Authorization header.
  std::string api_key_env_var = "OPENAI_API_KEY";
  double temperature = 0.0;
  int max_tokens = 4096;
  std::chrono::milliseconds timeout{120'000};
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{1'000};
};

struct BackendConfig {
  BackendKind kind = BackendKind::Scripted;
  HttpSettings http;
  std::string fixture_path;
};

BackendConfig backend_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BackendConfig& c);

struct ChatExchange {
  std::string step_label;
  std::vector<ChatMessage> request;
  std::string response;
  double latency_ms = 0.0;
  BackendKind backend_kind = BackendKind::Scripted;
};

nlohmann::json to_json(const ChatExchange& e);
ChatExchange chat_exchange_from_json(const nlohmann::json& j);
nlohmann::json transcript_to_json(const std::vector<ChatExchange>& transcript);

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual BackendKind kind() const = 0;
  /// Returns the assistant text for one request.
  virtual std::string send(const std::vector<ChatMessage>& messages, std::string_view step_label) = 0;
};

/// Fixture-driven backend: step label -> queue of responses, consumed in order.
class ScriptedBackend final : public ChatBackend {
 public:
  explicit ScriptedBackend(std::map<std::string, std::vector<std::string>> fixture);
  ScriptedBackend(ScriptedBackend&& other) noexcept : queues_(std::move(other.queues_)) {}
  static ScriptedBackend from_json(const nlohmann::json& j);
  static ScriptedBackend from_file(const std::string& path);

  BackendKind kind() const override { return BackendKind::Scripted; }
  std::string send(const std::vector<ChatMessage>& messages, std::string_view step_label) override;

  std::size_t remaining(std::string_view step_label) const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::deque<std::string>, std::less<>> queues_;
};

/// OpenAI-compatible POST {base_url}/chat/completions client with bounded retries.
class HttpChatBackend final : public ChatBackend {
 public:
  /// Throws AuthMissing when the configured key variable is named but unset.
  explicit HttpChatBackend(HttpSettings settings);

  BackendKind kind() const override { return BackendKind::HttpChat; }
  std::string send(const std::vector<ChatMessage>& messages, std::string_view step_label) override;

  nlohmann::json request_body(const std::vector<ChatMessage>& messages) const;

 private:
  HttpSettings settings_;
  std::string api_key_;
};

std::unique_ptr<ChatBackend> make_backend(const BackendConfig& config);

struct Completion {
  std::string text;
  ChatExchange exchange;
};

/// Sends `messages`, timing the call. Scripted calls record zero latency so transcripts are reproducible.
Completion complete(ChatBackend& backend, const std::vector<ChatMessage>& messages, std::string_view step_label);

}  // namespace deriva::llm
