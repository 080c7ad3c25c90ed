#include "hdm/mocksvc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "hdm/base64.hpp"
#include "hdm/error.hpp"
#include "hdm/rng.hpp"

using json = nlohmann::json;

namespace hdm::mock {

namespace {

std::string window_id(const WindowRef& w) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), ":%.6f", w.t_s);
  return w.conversation_id + buf;
}

json error_body(const std::string& msg) { return json{{"error", msg}}; }

}  // namespace

WindowRegistry parse_registry_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot open registry file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ValidationError("malformed registry file " + path + ": " + e.what());
  }
  WindowRegistry reg;
  for (const auto& [key, val] : j.at("windows").items()) {
    WindowRef ref;
    ref.conversation_id = val.at("conversation_id").get<std::string>();
    ref.t_s = val.at("t_s").get<double>();
    ref.context_start_s = val.at("context_start_s").get<double>();
    reg.by_fingerprint[std::stoull(key, nullptr, 16)] = std::move(ref);
  }
  return reg;
}

void write_registry_file(const WindowRegistry& registry, const std::string& path) {
  json windows = json::object();
  for (const auto& [fp, ref] : registry.by_fingerprint) {
    char key[32];
    std::snprintf(key, sizeof(key), "%016llx", static_cast<unsigned long long>(fp));
    windows[key] = {{"conversation_id", ref.conversation_id},
                    {"t_s", ref.t_s},
                    {"context_start_s", ref.context_start_s}};
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write registry file: " + path);
  out << json{{"windows", std::move(windows)}}.dump(2) << "\n";
}

struct MockService::Impl {
  MockConfig config;
  httplib::Server server;
  std::thread server_thread;
  int bound_port = 0;

  // Locate the window: explicit metadata first, audio fingerprint second.
  std::optional<WindowRef> locate(const json& body) const {
    if (body.contains("meta") && body["meta"].is_object() &&
        body["meta"].contains("conversation_id")) {
      const auto& meta = body["meta"];
      WindowRef ref;
      ref.conversation_id = meta.at("conversation_id").get<std::string>();
      if (!config.corpus.find(ref.conversation_id)) return std::nullopt;
      ref.t_s = meta.at("t_s").get<double>();
      ref.context_start_s = meta.value("context_start_s", ref.t_s - 4.0);
      return ref;
    }
    std::string audio_b64;
    if (body.contains("audio_b64") && body["audio_b64"].is_string()) {
      audio_b64 = body["audio_b64"].get<std::string>();
    } else if (body.contains("segments") && body["segments"].is_array()) {
      // the target is the unlabeled segment (the last one)
      for (const auto& seg : body["segments"]) {
        if (seg.contains("label") && seg["label"].is_null())
          audio_b64 = seg.value("audio_b64", "");
      }
    }
    if (audio_b64.empty()) return std::nullopt;
    std::uint64_t fp = fnv1a64(base64_decode(audio_b64));
    auto it = config.registry.by_fingerprint.find(fp);
    if (it == config.registry.by_fingerprint.end()) return std::nullopt;
    return it->second;
  }
};

MockService::MockService(MockConfig config) : impl_(std::make_unique<Impl>()) {
  if (config.word_drop_prob < 0 || config.word_drop_prob > 1)
    throw ValidationError("word_drop_prob must be in [0, 1]");
  if (config.score_noise_sigma < 0) throw ValidationError("score_noise_sigma must be >= 0");
  for (const auto& e : config.events) {
    if (!config.corpus.find(e.conversation_id))
      throw ValidationError("event references unknown conversation \"" + e.conversation_id + "\"");
  }
  impl_->config = std::move(config);
}

MockService::~MockService() { stop(); }

double MockService::emitted_probability(const WindowRef& window) const {
  const auto& cfg = impl_->config;
  // t_s inside an event (closed at the end: positives sampled at an event's
  // end must score positive)
  bool positive = false;
  for (const auto& e : cfg.events) {
    if (e.conversation_id == window.conversation_id && window.t_s >= e.start_s &&
        window.t_s <= e.end_s) {
      positive = true;
      break;
    }
  }
  double p = positive ? 1.0 : 0.0;
  if (cfg.score_noise_sigma > 0) {
    Rng rng = Rng::split(cfg.seed, "score:" + window_id(window));
    p += rng.normal(0.0, cfg.score_noise_sigma);
  }
  p += cfg.miscalibration_bias;
  return std::min(0.999, std::max(0.001, p));
}

std::string MockService::ground_truth_transcript(const WindowRef& window) const {
  const auto& cfg = impl_->config;
  const auto* conv = cfg.corpus.find(window.conversation_id);
  if (!conv) throw ValidationError("unknown conversation " + window.conversation_id);

  std::string text;
  for (const auto& u : conv->utterances) {
    if (std::max(u.start_s, window.context_start_s) < std::min(u.end_s, window.t_s)) {
      if (!text.empty()) text += ' ';
      text += u.text;
    }
  }
  if (cfg.word_drop_prob <= 0.0) return text;

  Rng rng = Rng::split(cfg.seed, "wer:" + window_id(window));
  std::istringstream words(text);
  std::string word, out;
  while (words >> word) {
    if (rng.coin(cfg.word_drop_prob)) continue;
    if (!out.empty()) out += ' ';
    out += word;
  }
  return out;
}

std::pair<int, std::string> MockService::handle_transcribe(const std::string& body) const {
  try {
    json req = json::parse(body);
    auto window = impl_->locate(req);
    if (!window) return {404, error_body("unknown window").dump()};
    return {200, json{{"transcript", ground_truth_transcript(*window)}}.dump()};
  } catch (const json::exception& e) {
    return {400, error_body(std::string("bad request: ") + e.what()).dump()};
  } catch (const Error& e) {
    return {400, error_body(e.what()).dump()};
  }
}

std::pair<int, std::string> MockService::handle_logprobs(const std::string& body) const {
  try {
    json req = json::parse(body);
    if (!req.contains("prompt") || !req["prompt"].is_string())
      return {400, error_body("missing prompt").dump()};
    auto window = impl_->locate(req);
    if (!window) return {404, error_body("unknown window").dump()};
    double p = emitted_probability(*window);
    return {200, json{{"logprob_p", std::log(p)}, {"logprob_n", std::log1p(-p)}}.dump()};
  } catch (const json::exception& e) {
    return {400, error_body(std::string("bad request: ") + e.what()).dump()};
  } catch (const Error& e) {
    return {400, error_body(e.what()).dump()};
  }
}

std::pair<int, std::string> MockService::handle_classify(const std::string& body) const {
  try {
    json req = json::parse(body);
    auto window = impl_->locate(req);
    if (!window) return {404, error_body("unknown window").dump()};
    return {200, json{{"probability", emitted_probability(*window)}}.dump()};
  } catch (const json::exception& e) {
    return {400, error_body(std::string("bad request: ") + e.what()).dump()};
  } catch (const Error& e) {
    return {400, error_body(e.what()).dump()};
  }
}

int MockService::start() {
  auto route = [this](auto handler) {
    return [this, handler](const httplib::Request& req, httplib::Response& res) {
      auto [status, body] = (this->*handler)(req.body);
      res.status = status;
      res.set_content(body, "application/json");
    };
  };
  impl_->server.Post("/v1/transcribe", route(&MockService::handle_transcribe));
  impl_->server.Post("/v1/logprobs", route(&MockService::handle_logprobs));
  impl_->server.Post("/v1/classify", route(&MockService::handle_classify));

  if (impl_->config.port == 0) {
    impl_->bound_port = impl_->server.bind_to_any_port("127.0.0.1");
    if (impl_->bound_port <= 0) throw RuntimeError("cannot bind mock service port");
  } else {
    if (!impl_->server.bind_to_port("0.0.0.0", impl_->config.port))
      throw RuntimeError("cannot bind mock service to port " + std::to_string(impl_->config.port));
    impl_->bound_port = impl_->config.port;
  }
  impl_->server_thread = std::thread([this]() { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->bound_port;
}

void MockService::stop() {
  if (impl_ && impl_->server_thread.joinable()) {
    impl_->server.stop();
    impl_->server_thread.join();
  }
}

int MockService::port() const { return impl_->bound_port; }

}  // namespace hdm::mock
