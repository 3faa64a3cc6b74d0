#include "qcdr/service.hpp"

#include <cmath>

#include <httplib.h>
#include <sodium.h>

#include "qcdr/errors.hpp"
#include "qcdr/metrics.hpp"

namespace qcdr {

namespace {

using nlohmann::json;

struct RequestError {
  int status;
  std::string code;
  std::string message;
};

HttpResult error_result(int status, const std::string& code, const std::string& message) {
  return {status, json{{"error", {{"code", code}, {"message", message}}}}};
}

ImageBuffer decode_field(const json& request, const char* field, int max_side) {
  if (!request.contains(field) || !request[field].is_string()) {
    throw RequestError{400, std::string("missing_") + field,
                       std::string("'") + field + "' must be a base64 PNG string"};
  }
  std::vector<std::uint8_t> bytes;
  try {
    bytes = base64_decode(request[field].get<std::string>());
  } catch (const ValidationError& e) {
    throw RequestError{400, "invalid_base64", std::string(field) + ": " + e.what()};
  }
  ImageBuffer image;
  try {
    image = decode_image(bytes);
  } catch (const std::exception& e) {
    throw RequestError{400, "invalid_image", std::string(field) + ": " + e.what()};
  }
  if (image.height() > max_side || image.width() > max_side) {
    throw RequestError{413, "image_too_large",
                       std::string(field) + " exceeds max side " + std::to_string(max_side)};
  }
  return image;
}

RectifyControl parse_control(const json& request) {
  const bool has_degree = request.contains("degree_label");
  const bool has_blend = request.contains("blend");
  if (has_degree == has_blend) {
    throw RequestError{400, "invalid_control", "exactly one of degree_label or blend is required"};
  }
  if (has_degree) {
    if (!request["degree_label"].is_number_integer()) {
      throw RequestError{400, "invalid_control", "degree_label must be an integer"};
    }
    return request["degree_label"].get<int>();
  }
  const json& blend = request["blend"];
  if (!blend.is_array()) throw RequestError{400, "invalid_blend", "blend must be an array"};
  QueryBlend b;
  for (const auto& w : blend) {
    if (!w.is_number()) throw RequestError{400, "invalid_blend", "blend entries must be numbers"};
    b.weights.push_back(w.get<double>());
  }
  return b;
}

json metric_value(double v) { return std::isfinite(v) ? json(v) : json("inf"); }

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(sodium_base64_ENCODED_LEN(bytes.size(), sodium_base64_VARIANT_ORIGINAL), '\0');
  sodium_bin2base64(out.data(), out.size(), bytes.data(), bytes.size(),
                    sodium_base64_VARIANT_ORIGINAL);
  out.resize(out.size() - 1);  // trailing NUL
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  std::vector<std::uint8_t> out(text.size() / 4 * 3 + 3);
  std::size_t len = 0;
  const char* end = nullptr;
  if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), " \r\n", &len, &end,
                        sodium_base64_VARIANT_ORIGINAL) != 0 ||
      end != text.data() + text.size()) {
    throw ValidationError("malformed base64");
  }
  out.resize(len);
  return out;
}

RectifyService::RectifyService(const ModelState& state, ServiceOptions options)
    : rectifier_(state), options_(options), started_(std::chrono::steady_clock::now()) {
  if (state.stage != Stage::finetuned) {
    throw StateError("serving requires a finetuned checkpoint (got " + to_string(state.stage) + ")");
  }
  if (sodium_init() < 0) throw std::runtime_error("libsodium initialisation failed");
}

RectifyService::~RectifyService() { stop(); }

HttpResult RectifyService::handle_rectify(const std::string& body) const {
  const auto t0 = std::chrono::steady_clock::now();
  try {
    json request;
    try {
      request = json::parse(body);
    } catch (const json::parse_error& e) {
      return error_result(400, "malformed_json", e.what());
    }
    if (!request.is_object()) return error_result(400, "malformed_json", "body must be an object");
    const ImageBuffer image = decode_field(request, "image", options_.max_side);
    const RectifyControl control = parse_control(request);
    bool return_metrics = false;
    if (request.contains("return_metrics")) {
      if (!request["return_metrics"].is_boolean()) {
        return error_result(400, "invalid_options", "return_metrics must be a boolean");
      }
      return_metrics = request["return_metrics"].get<bool>();
    }
    std::optional<ImageBuffer> gt;
    if (return_metrics && request.contains("gt")) {
      gt = decode_field(request, "gt", options_.max_side);
      if (!gt->same_shape(image)) {
        return error_result(400, "gt_size_mismatch", "gt must match the image dimensions");
      }
    }

    RectifyResult result;
    try {
      result = rectifier_.rectify(image, control);
    } catch (const ValidationError& e) {
      return error_result(400, std::holds_alternative<int>(control) ? "invalid_control" : "invalid_blend",
                          e.what());
    }
    const std::vector<std::uint8_t> png = encode_png(result.image);
    json response{{"image", base64_encode(png)},
                  {"blend", result.blend},
                  {"checkpoint_id", rectifier_.checkpoint_id()},
                  {"width", result.image.width()},
                  {"height", result.image.height()}};
    if (gt) {
      // Metrics are taken on the image exactly as the client will decode it.
      const ImageBuffer delivered = decode_image(png);
      response["psnr"] = metric_value(psnr(delivered, *gt));
      response["ssim"] = metric_value(ssim(delivered, *gt));
    }
    response["latency_ms"] =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return {200, std::move(response)};
  } catch (const RequestError& e) {
    return error_result(e.status, e.code, e.message);
  }
}

HttpResult RectifyService::handle_queries() const {
  const auto shape = rectifier_.config().query_shape();
  std::vector<int> labels;
  for (int i = 1; i <= rectifier_.query_count(); ++i) labels.push_back(i);
  return {200, json{{"count", rectifier_.query_count()},
                    {"shape", {shape[0], shape[1], shape[2]}},
                    {"degree_labels", labels},
                    {"control_mode", to_string(rectifier_.config().control_mode)}}};
}

HttpResult RectifyService::handle_health() const {
  const double uptime =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  return {200, json{{"status", "ok"},
                    {"checkpoint_id", rectifier_.checkpoint_id()},
                    {"uptime_s", uptime}}};
}

void RectifyService::install_routes() {
  auto reply = [](httplib::Response& res, const HttpResult& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server_->set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});
  server_->set_payload_max_length(options_.max_body);
  server_->Post("/rectify", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, handle_rectify(req.body));
  });
  server_->Get("/queries", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, handle_queries());
  });
  server_->Get("/health", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, handle_health());
  });
  server_->Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
  });
  server_->set_exception_handler(
      [reply](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string message = "internal error";
        try {
          std::rethrow_exception(ep);
        } catch (const std::exception& e) {
          message = e.what();
        } catch (...) {
        }
        reply(res, error_result(500, "internal", message));
      });
}

int RectifyService::bind(const std::string& host, int port) {
  server_ = std::make_unique<httplib::Server>();
  install_routes();
  if (port == 0) {
    const int bound = server_->bind_to_any_port(host);
    if (bound < 0) throw std::runtime_error("cannot bind " + host);
    return bound;
  }
  if (!server_->bind_to_port(host, port)) {
    throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void RectifyService::run() {
  if (!server_) throw StateError("bind() before run()");
  server_->listen_after_bind();
}

void RectifyService::stop() {
  if (server_) server_->stop();
}

bool RectifyService::running() const { return server_ && server_->is_running(); }

}  // namespace qcdr
