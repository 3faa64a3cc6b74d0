#include "qcdr/model.hpp"

#include <algorithm>
#include <sstream>

#include "qcdr/errors.hpp"

namespace F = torch::nn::functional;

namespace qcdr {

namespace {

constexpr std::array<int, kRectifierLayers> kLayersBySize{1, 11, 2, 10, 3, 9, 4, 8, 5, 7, 6};

// Resolution divisor of each layer's input feature relative to the input image.
constexpr std::array<int64_t, kRectifierLayers> kLayerStride{2, 4, 8, 16, 32, 32, 32, 16, 8, 4, 2};

std::vector<int64_t> parse_i64_list(const std::string& text) {
  std::vector<int64_t> out;
  for (int v : parse_int_list(text)) out.push_back(v);
  return out;
}

std::string join_i64(const std::vector<int64_t>& v) {
  std::vector<int> ints(v.begin(), v.end());
  return join_ints(ints);
}

int64_t conv3_params(int64_t in, int64_t out) { return 9 * in * out + out; }
int64_t conv1_params(int64_t in, int64_t out) { return in * out + out; }

// Skip source (1-based layer) concatenated into transition l -> l+1, or 0.
int skip_layer_for_transition(int l) { return l >= 6 ? 11 - l : 0; }

}  // namespace

BlockAssignment hybrid_assignment(int ccmb_layers) {
  if (ccmb_layers < 0 || ccmb_layers > kRectifierLayers) {
    throw ConfigError("CCMB layer count must be in 0..11");
  }
  BlockAssignment blocks;
  blocks.fill(BlockKind::camb);
  for (int i = 0; i < ccmb_layers; ++i) {
    blocks[static_cast<std::size_t>(kLayersBySize[static_cast<std::size_t>(i)] - 1)] = BlockKind::ccmb;
  }
  return blocks;
}

BlockAssignment parse_block_assignment(const std::string& text) {
  int c = 0;
  int a = 0;
  char plus = 0;
  char c_tag = 0;
  char a_tag = 0;
  std::istringstream in(text);
  if (in >> c >> c_tag >> plus >> a >> a_tag && c_tag == 'C' && plus == '+' && a_tag == 'A' &&
      in.peek() == EOF) {
    if (c < 0 || a < 0 || c + a != kRectifierLayers) {
      throw ConfigError("block assignment '" + text + "' must cover 11 layers");
    }
    return hybrid_assignment(c);
  }
  if (text.size() == kRectifierLayers &&
      std::all_of(text.begin(), text.end(), [](char ch) { return ch == 'C' || ch == 'A'; })) {
    BlockAssignment blocks;
    for (std::size_t i = 0; i < text.size(); ++i) {
      blocks[i] = text[i] == 'C' ? BlockKind::ccmb : BlockKind::camb;
    }
    return blocks;
  }
  throw ConfigError("unrecognised block assignment '" + text + "'");
}

std::string to_string(const BlockAssignment& blocks) {
  std::string out;
  for (BlockKind k : blocks) out += k == BlockKind::ccmb ? 'C' : 'A';
  return out;
}

Modulation parse_modulation(const std::string& text) {
  if (text == "direct") return Modulation::direct;
  if (text == "fixed") return Modulation::fixed;
  if (text == "dynamic") return Modulation::dynamic;
  throw ConfigError("unknown modulation '" + text + "'");
}

std::string to_string(Modulation mode) {
  switch (mode) {
    case Modulation::direct: return "direct";
    case Modulation::fixed: return "fixed";
    case Modulation::dynamic: return "dynamic";
  }
  return "?";
}

// ---------------------------------------------------------------------------

void ModelConfig::validate() const {
  if (input_size < 32 || input_size % 32 != 0) {
    throw ConfigError("input_size must be a positive multiple of 32");
  }
  if (encoder_channels.size() != 5) throw ConfigError("encoder_channels needs 5 entries");
  if (flow_channels.size() != 4) throw ConfigError("flow_channels needs 4 entries");
  for (int64_t c : encoder_channels)
    if (c <= 0) throw ConfigError("channel widths must be positive");
  for (int64_t c : flow_channels)
    if (c <= 0) throw ConfigError("channel widths must be positive");
  if (bottleneck_channels <= 0) throw ConfigError("bottleneck_channels must be positive");
  if (num_queries < 1 || num_queries > 9) throw ConfigError("num_queries must be in 1..9");
  if (z != kDecoderStages) throw ConfigError("z must be 6");
}

std::vector<LayerSpec> ModelConfig::layer_specs() const {
  const auto& e = encoder_channels;
  const std::array<int64_t, kRectifierLayers> channels{
      e[0], e[1], e[2], e[3], e[4], bottleneck_channels, e[4], e[3], e[2], e[1], e[0]};
  std::vector<LayerSpec> specs;
  for (std::size_t l = 0; l < kRectifierLayers; ++l) {
    const int64_t side = input_size / kLayerStride[l];
    specs.push_back({channels[l], side, side});
  }
  return specs;
}

double ModelConfig::effective_flow_gain() const {
  return flow_gain > 0.0 ? flow_gain : static_cast<double>(input_size) / 16.0;
}

ModelConfig ModelConfig::from_config(const KeyValueConfig& cfg) {
  ModelConfig m;
  m.input_size = cfg.get_int("input_size", static_cast<int>(m.input_size));
  if (cfg.contains("encoder_channels")) m.encoder_channels = parse_i64_list(cfg.get_string("encoder_channels", ""));
  m.bottleneck_channels = cfg.get_int("bottleneck_channels", static_cast<int>(m.bottleneck_channels));
  if (cfg.contains("flow_channels")) m.flow_channels = parse_i64_list(cfg.get_string("flow_channels", ""));
  m.flow_gain = cfg.get_double("flow_gain", m.flow_gain);
  if (cfg.contains("blocks")) m.blocks = parse_block_assignment(cfg.get_string("blocks", ""));
  if (cfg.contains("modulation")) m.modulation = parse_modulation(cfg.get_string("modulation", ""));
  if (cfg.contains("control_mode")) m.control_mode = parse_control_mode(cfg.get_string("control_mode", ""));
  m.num_queries = cfg.get_int("num_queries", static_cast<int>(m.num_queries));
  m.z = cfg.get_int("z", static_cast<int>(m.z));
  m.validate();
  return m;
}

KeyValueConfig ModelConfig::to_config() const {
  KeyValueConfig cfg;
  std::ostringstream gain;
  gain.precision(17);
  gain << flow_gain;
  cfg.set("input_size", std::to_string(input_size));
  cfg.set("encoder_channels", join_i64(encoder_channels));
  cfg.set("bottleneck_channels", std::to_string(bottleneck_channels));
  cfg.set("flow_channels", join_i64(flow_channels));
  cfg.set("flow_gain", gain.str());
  cfg.set("blocks", to_string(blocks));
  cfg.set("modulation", to_string(modulation));
  cfg.set("control_mode", to_string(control_mode));
  cfg.set("num_queries", std::to_string(num_queries));
  cfg.set("z", std::to_string(z));
  return cfg;
}

ModelConfig ModelConfig::micro64() {
  ModelConfig m;
  m.input_size = 64;
  m.encoder_channels = {8, 16, 16, 16, 16};
  m.bottleneck_channels = 16;
  return m;
}

ModelConfig ModelConfig::micro32() {
  ModelConfig m;
  m.input_size = 32;
  m.encoder_channels = {4, 8, 8, 8, 8};
  m.bottleneck_channels = 8;
  return m;
}

// ---------------------------------------------------------------------------

ScaleHeadsImpl::ScaleHeadsImpl(const std::vector<int64_t>& channels) {
  for (std::size_t j = 0; j < channels.size(); ++j) {
    heads_.push_back(register_module("head" + std::to_string(j + 1), conv3x3(channels[j], 3)));
  }
}

torch::Tensor ScaleHeadsImpl::forward(const torch::Tensor& feature, int j) {
  if (j < 1 || j > static_cast<int>(heads_.size())) {
    throw DimensionError("no decoding head for scale " + std::to_string(j));
  }
  return heads_[static_cast<std::size_t>(j - 1)]->forward(feature);
}

// ---------------------------------------------------------------------------

QueryCdrImpl::QueryCdrImpl(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  specs_ = config_.layer_specs();
  flow_ = register_module("flow", FlowEstimator(config_.input_size, config_.flow_channels,
                                                config_.effective_flow_gain()));
  queries_ = register_module("queries", QuerySet(config_.num_queries, config_.query_shape()));
  extractor_ = register_module("extractor", ControlExtractor(3));
  chain_ = register_module("chain", ControlChain(3, specs_));
  stem_ = register_module("stem", conv3x3(3, specs_[0].channels, 2));

  for (int l = 1; l <= kRectifierLayers; ++l) {
    const auto idx = static_cast<std::size_t>(l - 1);
    const int64_t c = specs_[idx].channels;
    const std::string tag = std::to_string(l);
    body_.push_back(register_module("body" + tag, conv3x3(c, c)));
    if (config_.blocks[idx] == BlockKind::ccmb) {
      ccmb_.push_back(register_module("ccmb" + tag, Ccmb(c, config_.modulation)));
      camb_.push_back(nullptr);
    } else {
      ccmb_.push_back(nullptr);
      camb_.push_back(register_module("camb" + tag, Camb(c)));
    }
    if (l < kRectifierLayers) {
      const int skip = skip_layer_for_transition(l);
      const int64_t in = c + (skip ? specs_[static_cast<std::size_t>(skip - 1)].channels : 0);
      const int64_t stride = l <= 4 ? 2 : 1;
      transition_.push_back(register_module("transition" + tag,
                                            conv3x3(in, specs_[idx + 1].channels, stride)));
    }
  }
  out_head_ = register_module("out_head", conv3x3(specs_.back().channels + 3, 3));
  {
    // The rectifier starts as an identity correction on the warped image.
    torch::NoGradGuard no_grad;
    out_head_->weight.zero_();
    out_head_->bias.zero_();
  }

  std::vector<int64_t> head_channels;
  for (int j = 1; j < config_.z; ++j) {
    head_channels.push_back(specs_[static_cast<std::size_t>(kRectifierLayers - j)].channels);
  }
  heads_ = register_module("heads", ScaleHeads(head_channels));
}

std::vector<torch::Tensor> QueryCdrImpl::control_conditions(const torch::Tensor& control) {
  const auto shape = config_.query_shape();
  const torch::Tensor c = control.dim() == 3 ? control.unsqueeze(0) : control;
  if (c.dim() != 4 || c.size(1) != shape[0] || c.size(2) != shape[1] || c.size(3) != shape[2]) {
    throw DimensionError("control tensor does not match the query shape");
  }
  return chain_->forward(extractor_->forward(c));
}

torch::Tensor QueryCdrImpl::apply_block(int layer, const torch::Tensor& x,
                                        const torch::Tensor& condition) {
  const auto idx = static_cast<std::size_t>(layer - 1);
  return ccmb_[idx] ? ccmb_[idx]->forward(x, condition) : camb_[idx]->forward(x, condition);
}

ForwardOutput QueryCdrImpl::forward(const torch::Tensor& image,
                                    const std::optional<torch::Tensor>& control) {
  const int64_t s = config_.input_size;
  if (image.dim() != 4 || image.size(1) != 3 || image.size(2) != s || image.size(3) != s) {
    throw DimensionError("QueryCDR expects (B, 3, " + std::to_string(s) + ", " +
                         std::to_string(s) + ") input");
  }
  std::vector<torch::Tensor> conditions;
  if (config_.control_mode != ControlMode::none) {
    if (!control) throw ConfigError("control tensor required for mode " + to_string(config_.control_mode));
    conditions = control_conditions(*control);
  }

  ForwardOutput out;
  out.flow = flow_->forward(image);
  out.warped = warp(image, out.flow);

  std::array<torch::Tensor, kRectifierLayers> y;
  torch::Tensor x = F::gelu(stem_->forward(out.warped));
  for (int l = 1; l <= kRectifierLayers; ++l) {
    const auto idx = static_cast<std::size_t>(l - 1);
    const torch::Tensor f_in = F::gelu(body_[idx]->forward(x));
    const torch::Tensor condition =
        conditions.empty() ? torch::ones_like(f_in) : conditions[idx];
    y[idx] = apply_block(l, f_in, condition);
    if (l == kRectifierLayers) break;
    torch::Tensor next = y[idx];
    const int skip = skip_layer_for_transition(l);
    if (skip) {
      const torch::Tensor& skip_feature = y[static_cast<std::size_t>(skip - 1)];
      next = torch::cat({resize_bilinear(next, skip_feature.size(2), skip_feature.size(3)), skip_feature}, 1);
    }
    x = F::gelu(transition_[idx]->forward(next));
  }

  for (int j = 1; j < config_.z; ++j) {
    out.decoder_features.push_back(y[static_cast<std::size_t>(kRectifierLayers - j)]);
  }
  const torch::Tensor top = resize_bilinear(y.back(), s, s);
  out.image_out = out.warped + out_head_->forward(torch::cat({top, out.warped}, 1));
  if (!is_training()) out.image_out = out.image_out.clamp(0.0, 1.0);
  return out;
}

// ---------------------------------------------------------------------------

int64_t count_params(const ModelConfig& config) {
  config.validate();
  const auto specs = config.layer_specs();
  const auto& f = config.flow_channels;
  int64_t total = 0;

  // Flow estimator.
  total += conv3_params(3, f[0]);
  for (std::size_t i = 1; i < 4; ++i) total += conv3_params(f[i - 1], f[i]);
  for (std::size_t i = 3; i > 0; --i) total += conv3_params(f[i] + f[i - 1], f[i - 1]);
  total += conv3_params(f[0], 2);

  // DLQM.
  const auto q = config.query_shape();
  total += config.num_queries * q[0] * q[1] * q[2];
  total += 3 * conv3_params(3, 3);
  int64_t previous = 3;
  for (const auto& spec : specs) {
    const int64_t hidden = ControlChainImpl::hidden_width(previous, spec.channels);
    total += conv1_params(previous, hidden) + conv1_params(hidden, spec.channels);
    previous = spec.channels;
  }

  // Rectifier.
  total += conv3_params(3, specs[0].channels);
  for (int l = 1; l <= kRectifierLayers; ++l) {
    const auto idx = static_cast<std::size_t>(l - 1);
    const int64_t c = specs[idx].channels;
    total += conv3_params(c, c);
    if (config.blocks[idx] == BlockKind::ccmb) {
      if (config.modulation == Modulation::dynamic) total += (2 * c * c + c) + (c + 1);
    } else {
      total += 4 * c;                                   // two layer norms
      total += 3 * c * c;                               // W_Q, W_K, W_V
      total += (2 * c * c + 2 * c) + (4 * c * c + 2 * c) + (2 * c * c + c);  // FFN
      total += c * c + c;                               // 1x1 projection
    }
    if (l < kRectifierLayers) {
      const int skip = skip_layer_for_transition(l);
      const int64_t in = c + (skip ? specs[static_cast<std::size_t>(skip - 1)].channels : 0);
      total += conv3_params(in, specs[idx + 1].channels);
    }
  }
  total += conv3_params(specs.back().channels + 3, 3);
  for (int j = 1; j < config.z; ++j) {
    total += conv3_params(specs[static_cast<std::size_t>(kRectifierLayers - j)].channels, 3);
  }
  return total;
}

}  // namespace qcdr
