#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "qcdr/rectifier.hpp"

namespace httplib {
class Server;
}

namespace qcdr {

struct ServiceOptions {
  int max_side = 1024;                  // larger images are rejected with 413
  std::size_t max_body = 64u << 20;     // bytes
};

struct HttpResult {
  int status = 200;
  nlohmann::json body;
};

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws ValidationError on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// HTTP front end over an immutable Rectifier snapshot.
///   POST /rectify  {"image": b64 png, "degree_label": d | "blend": [w1..wN],
///                   "return_metrics": bool, "gt": b64 png}
///   GET  /queries  {"count", "shape", "degree_labels", "control_mode"}
///   GET  /health   {"status", "checkpoint_id", "uptime_s"}
/// Errors are {"error": {"code", "message"}} with status 400 (413 for oversized images).
class RectifyService {
 public:
  /// Requires a fine-tuned model (StateError otherwise).
  explicit RectifyService(const ModelState& state, ServiceOptions options = {});
  ~RectifyService();

  HttpResult handle_rectify(const std::string& body) const;
  HttpResult handle_queries() const;
  HttpResult handle_health() const;

  /// Binds host:port (0 picks a free port) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  void run();
  void stop();
  bool running() const;

 private:
  void install_routes();

  Rectifier rectifier_;
  ServiceOptions options_;
  std::chrono::steady_clock::time_point started_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace qcdr
