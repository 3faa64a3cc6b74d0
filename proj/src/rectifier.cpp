#include "qcdr/rectifier.hpp"

#include "qcdr/errors.hpp"
#include "qcdr/training.hpp"

namespace qcdr {

Rectifier::Rectifier(const ModelState& state)
    : checkpoint_id_(state.checkpoint_id), stage_(state.stage) {
  if (!state.model) throw StateError("rectifier needs a model");
  model_ = QueryCdr(state.model->config());
  torch::NoGradGuard no_grad;
  const auto source_params = state.model->named_parameters();
  for (auto& item : model_->named_parameters()) item.value().copy_(source_params[item.key()]);
  const auto source_buffers = state.model->named_buffers();
  for (auto& item : model_->named_buffers()) item.value().copy_(source_buffers[item.key()]);
  for (auto& p : model_->parameters()) p.set_requires_grad(false);
  model_->eval();
}

QueryBlend Rectifier::resolve(const RectifyControl& control, bool unsafe) const {
  const auto n = static_cast<int>(query_count());
  if (const int* degree = std::get_if<int>(&control)) {
    if (*degree < 1 || *degree > n) {
      throw ValidationError("degree_label must be in 1.." + std::to_string(n));
    }
    return QueryBlend::one_hot(n, *degree);
  }
  const auto& blend = std::get<QueryBlend>(control);
  if (unsafe) {
    if (blend.weights.size() != static_cast<std::size_t>(n)) {
      throw ValidationError("blend needs " + std::to_string(n) + " weights");
    }
  } else {
    blend.validate(static_cast<std::size_t>(n), 1e-6);
  }
  return blend;
}

torch::Tensor Rectifier::control_for(const QueryBlend& blend, bool unsafe) const {
  const ControlMode mode = model_->config().control_mode;
  if (mode == ControlMode::learnable_query) return interpolate(model_->queries(), blend, unsafe);
  if (!unsafe) blend.validate(static_cast<std::size_t>(query_count()), 1e-6);
  torch::Tensor total;
  for (std::size_t i = 0; i < blend.weights.size(); ++i) {
    if (blend.weights[i] == 0.0) continue;
    torch::Tensor term =
        make_control_source(mode, static_cast<int>(i) + 1, model_->queries()) * blend.weights[i];
    total = total.defined() ? total + term : term;
  }
  if (!total.defined()) {
    const auto s = model_->config().query_shape();
    total = torch::zeros({s[0], s[1], s[2]});
  }
  return total;
}

torch::Tensor Rectifier::rectify_tensor(const torch::Tensor& input, const QueryBlend& blend,
                                        bool unsafe) const {
  torch::NoGradGuard no_grad;
  std::optional<torch::Tensor> control;
  if (model_->config().control_mode != ControlMode::none) control = control_for(blend, unsafe);
  return model_.ptr()->forward(input, control).image_out;
}

RectifyResult Rectifier::rectify(const ImageBuffer& image, const RectifyControl& control,
                                 bool unsafe) const {
  if (image.empty()) throw ValidationError("empty image");
  const QueryBlend blend = resolve(control, unsafe);
  const int size = static_cast<int>(model_->config().input_size);
  const bool resized = image.height() != size || image.width() != size;
  const ImageBuffer input = resized ? resize(image, size, size) : image;
  const torch::Tensor out = rectify_tensor(image_to_tensor(input).unsqueeze(0), blend, unsafe);
  ImageBuffer result = tensor_to_image(out[0]);
  if (resized) result = resize(result, image.height(), image.width());
  result.clamp();
  return {std::move(result), blend.weights};
}

}  // namespace qcdr
