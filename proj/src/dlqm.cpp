#include "qcdr/dlqm.hpp"

#include <cmath>

#include "qcdr/blocks.hpp"
#include "qcdr/errors.hpp"

namespace F = torch::nn::functional;

namespace qcdr {

std::string to_string(ControlMode mode) {
  switch (mode) {
    case ControlMode::learnable_query: return "learnable_query";
    case ControlMode::fixed_query: return "fixed_query";
    case ControlMode::scalar: return "scalar";
    case ControlMode::none: return "none";
  }
  return "?";
}

ControlMode parse_control_mode(const std::string& text) {
  if (text == "learnable_query") return ControlMode::learnable_query;
  if (text == "fixed_query") return ControlMode::fixed_query;
  if (text == "scalar") return ControlMode::scalar;
  if (text == "none") return ControlMode::none;
  throw ConfigError("unknown control mode '" + text + "'");
}

namespace {

// N(0, gain^2 / fan_in) weights, zero bias.
void init_fan_in(torch::nn::Conv2d& conv, double gain) {
  const auto& w = conv->weight;
  const double fan_in = static_cast<double>(w.size(1) * w.size(2) * w.size(3));
  w.normal_(0.0, gain / std::sqrt(fan_in));
  if (conv->bias.defined()) conv->bias.zero_();
}

}  // namespace

// ---------------------------------------------------------------------------

QuerySetImpl::QuerySetImpl(int64_t count, std::array<int64_t, 3> shape, double init_range)
    : shape_(shape) {
  if (count < 1) throw ConfigError("query set needs at least one query");
  for (int64_t i = 1; i <= count; ++i) {
    torch::Tensor q = torch::empty({shape[0], shape[1], shape[2]}).uniform_(-init_range, init_range);
    queries_.push_back(register_parameter("q" + std::to_string(i), q));
  }
}

const torch::Tensor& QuerySetImpl::query(int degree_label) const {
  if (degree_label < 1 || degree_label > size()) {
    throw ValidationError("no query for degree label " + std::to_string(degree_label));
  }
  return queries_[static_cast<std::size_t>(degree_label - 1)];
}

void QuerySetImpl::replicate(int source_label) {
  const torch::Tensor source = query(source_label).detach().clone();
  torch::NoGradGuard no_grad;
  for (auto& q : queries_) q.copy_(source);
}

// ---------------------------------------------------------------------------

QueryBlend QueryBlend::one_hot(int count, int degree_label) {
  if (degree_label < 1 || degree_label > count) {
    throw ValidationError("degree label " + std::to_string(degree_label) + " outside 1.." +
                          std::to_string(count));
  }
  QueryBlend blend;
  blend.weights.assign(static_cast<std::size_t>(count), 0.0);
  blend.weights[static_cast<std::size_t>(degree_label - 1)] = 1.0;
  return blend;
}

void QueryBlend::validate(std::size_t expected_count, double tol) const {
  if (weights.size() != expected_count) {
    throw DimensionError("blend has " + std::to_string(weights.size()) + " weights, expected " +
                         std::to_string(expected_count));
  }
  double sum = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0 || w > 1.0) {
      throw ValidationError("blend weights must lie in [0, 1]");
    }
    sum += w;
  }
  if (std::abs(sum - 1.0) > tol) {
    throw ValidationError("blend weights must sum to 1 (got " + std::to_string(sum) + ")");
  }
}

torch::Tensor interpolate(const QuerySet& queries, const QueryBlend& blend, bool unsafe) {
  const std::size_t n = static_cast<std::size_t>(queries->size());
  if (unsafe) {
    if (blend.weights.size() != n) throw DimensionError("blend weight count mismatch");
  } else {
    blend.validate(n);
  }
  torch::Tensor out;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = blend.weights[i];
    if (w == 0.0) continue;
    const torch::Tensor term = queries->query(static_cast<int>(i + 1)) * w;
    out = out.defined() ? out + term : term;
  }
  if (!out.defined()) out = torch::zeros_like(queries->query(1));
  return out;
}

// ---------------------------------------------------------------------------

ControlExtractorImpl::ControlExtractorImpl(int64_t channels) : channels_(channels) {
  for (int i = 0; i < 3; ++i) {
    convs_.push_back(register_module("conv" + std::to_string(i + 1), conv3x3(channels, channels)));
  }
  torch::NoGradGuard no_grad;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    // Variance-preserving init; the last conv has no GELU after it.
    const double gain = i + 1 < convs_.size() ? std::sqrt(2.0) : 1.0;
    init_fan_in(convs_[i], gain);
  }
}

torch::Tensor ControlExtractorImpl::forward(const torch::Tensor& query) {
  const torch::Tensor q = query.dim() == 3 ? query.unsqueeze(0) : query;
  if (q.dim() != 4 || q.size(1) != channels_) {
    throw DimensionError("control extractor expects " + std::to_string(channels_) + " channels");
  }
  torch::Tensor x = F::gelu(convs_[0]->forward(q));
  x = F::gelu(convs_[1]->forward(x));
  return convs_[2]->forward(x);
}

// ---------------------------------------------------------------------------

int64_t ControlChainImpl::hidden_width(int64_t in_channels, int64_t out_channels) {
  return 2 * std::max(in_channels, out_channels);
}

ControlChainImpl::ControlChainImpl(int64_t input_channels, std::vector<LayerSpec> specs)
    : specs_(std::move(specs)) {
  if (specs_.empty()) throw ConfigError("control chain needs at least one layer spec");
  int64_t previous = input_channels;
  for (std::size_t l = 0; l < specs_.size(); ++l) {
    const int64_t out = specs_[l].channels;
    const int64_t hidden = hidden_width(previous, out);
    const std::string tag = std::to_string(l + 1);
    fc1_.push_back(register_module("fc1_" + tag, torch::nn::Conv2d(torch::nn::Conv2dOptions(previous, hidden, 1))));
    fc2_.push_back(register_module("fc2_" + tag, torch::nn::Conv2d(torch::nn::Conv2dOptions(hidden, out, 1))));
    previous = out;
  }
  // Unit-gain linear maps with zero bias keep the query signal from decaying
  // along the chain, so late layers still see (and back-propagate to) the query.
  torch::NoGradGuard no_grad;
  for (std::size_t l = 0; l < specs_.size(); ++l) {
    init_fan_in(fc1_[l], 1.0);
    init_fan_in(fc2_[l], 1.0);
  }
}

std::vector<torch::Tensor> ControlChainImpl::forward(const torch::Tensor& extracted) {
  std::vector<torch::Tensor> conditions;
  conditions.reserve(specs_.size());
  torch::Tensor q = extracted.dim() == 3 ? extracted.unsqueeze(0) : extracted;
  for (std::size_t l = 0; l < specs_.size(); ++l) {
    q = fc2_[l]->forward(fc1_[l]->forward(q));
    q = resize_bilinear(q, specs_[l].height, specs_[l].width);
    conditions.push_back(q);
  }
  return conditions;
}

// ---------------------------------------------------------------------------

torch::Tensor fixed_query_ramp(std::array<int64_t, 3> shape, torch::TensorOptions options) {
  const int64_t h = shape[1];
  const int64_t w = shape[2];
  const double cy = static_cast<double>(h / 2);
  const double cx = static_cast<double>(w / 2);
  double corner = 0.0;
  for (double y : {0.0, static_cast<double>(h - 1)})
    for (double x : {0.0, static_cast<double>(w - 1)})
      corner = std::max(corner, std::hypot(y - cy, x - cx));
  const auto dopts = torch::TensorOptions().dtype(torch::kDouble);
  const torch::Tensor ys = torch::arange(h, dopts).view({h, 1}) - cy;
  const torch::Tensor xs = torch::arange(w, dopts).view({1, w}) - cx;
  torch::Tensor ramp = torch::sqrt(ys * ys + xs * xs);
  if (corner > 0.0) ramp = ramp / corner;
  return ramp.unsqueeze(0).expand({shape[0], h, w}).contiguous().to(options.has_dtype() ? options.dtype() : caffe2::TypeMeta::Make<float>());
}

torch::Tensor make_control_source(ControlMode mode, int degree_label, const QuerySet& queries) {
  switch (mode) {
    case ControlMode::learnable_query:
      return queries->query(degree_label);
    case ControlMode::fixed_query:
      return fixed_query_ramp(queries->shape(), queries->query(1).options());
    case ControlMode::scalar: {
      if (degree_label < 1 || degree_label > 9) throw ValidationError("degree label outside 1..9");
      const auto s = queries->shape();
      return torch::full({s[0], s[1], s[2]}, degree_label / 9.0, queries->query(1).options());
    }
    case ControlMode::none:
      break;
  }
  throw ConfigError("control mode '" + to_string(mode) + "' has no control source");
}

}  // namespace qcdr
