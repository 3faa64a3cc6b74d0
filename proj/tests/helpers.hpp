#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include <torch/torch.h>

#include "oracles.hpp"
#include "qcdr/blocks.hpp"

namespace testing_support {

inline std::vector<double> flat(const torch::Tensor& t) {
  const torch::Tensor c = t.detach().to(torch::kDouble).contiguous().cpu();
  return std::vector<double>(c.data_ptr<double>(), c.data_ptr<double>() + c.numel());
}

/// (C, H, W) or (1, C, H, W) tensor to an oracle grid.
inline oracle::Grid grid(const torch::Tensor& t) {
  const torch::Tensor s = t.dim() == 4 ? t[0] : t;
  oracle::Grid g(static_cast<int>(s.size(0)), static_cast<int>(s.size(1)), static_cast<int>(s.size(2)));
  g.v = flat(s);
  return g;
}

inline oracle::ConvWeights conv_weights(torch::nn::Conv2d conv) {
  oracle::ConvWeights w;
  w.w = flat(conv->weight);
  if (conv->bias.defined()) w.b = flat(conv->bias);
  w.out = static_cast<int>(conv->weight.size(0));
  return w;
}

inline oracle::CcmbWeights ccmb_weights(qcdr::Ccmb& m) {
  return {flat(m->fc1()->weight), flat(m->fc1()->bias), flat(m->fc2()->weight), flat(m->fc2()->bias)};
}

inline oracle::CambWeights camb_weights(qcdr::Camb& m) {
  oracle::CambWeights w;
  w.ln_in_g = flat(m->norm_in()->weight);
  w.ln_in_b = flat(m->norm_in()->bias);
  w.ln_out_g = flat(m->norm_out()->weight);
  w.ln_out_b = flat(m->norm_out()->bias);
  w.wq = flat(m->w_q()->weight);
  w.wk = flat(m->w_k()->weight);
  w.wv = flat(m->w_v()->weight);
  w.f1_w = flat(m->ffn(0)->weight);
  w.f1_b = flat(m->ffn(0)->bias);
  w.f2_w = flat(m->ffn(1)->weight);
  w.f2_b = flat(m->ffn(1)->bias);
  w.f3_w = flat(m->ffn(2)->weight);
  w.f3_b = flat(m->ffn(2)->bias);
  w.proj_w = flat(m->projection()->weight);
  w.proj_b = flat(m->projection()->bias);
  return w;
}

inline double max_abs(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// max_i |a_i - b_i| / max(|b_i|, floor): the relative error used by the oracle
/// suites. The floor keeps entries that are zero in the reference from
/// dividing by zero; with unit-scale inputs it only matters for tiny values.
inline double max_rel(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-3) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]) / std::max(std::abs(b[i]), floor));
  }
  return m;
}

inline double rel(double a, double b, double floor = 1e-3) {
  return std::abs(a - b) / std::max(std::abs(b), floor);
}

/// Re-draws every parameter of a module from U(-scale, scale) using torch's RNG.
inline void randomize(torch::nn::Module& module, double scale) {
  torch::NoGradGuard no_grad;
  for (auto& p : module.parameters()) p.uniform_(-scale, scale);
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
  std::string worst;
};

/// Central-difference check of d loss / d param for `per_tensor` random entries
/// of every tensor in `params` (all entries when the tensor is smaller).
/// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, abs_floor).
inline GradCheckResult grad_check(const std::function<torch::Tensor()>& loss,
                                  const std::vector<std::pair<std::string, torch::Tensor>>& params,
                                  int per_tensor, uint64_t seed, double h = 1e-5,
                                  double abs_floor = 1e-6) {
  for (const auto& [name, p] : params) {
    if (p.grad().defined()) p.mutable_grad().zero_();
  }
  loss().backward();
  GradCheckResult result;
  std::mt19937_64 rng(seed);
  for (const auto& [name, p] : params) {
    const torch::Tensor analytic = p.grad().detach().clone().reshape({-1});
    torch::Tensor data = p.detach().view({-1});  // shares storage with p
    const int64_t n = data.numel();
    std::vector<int64_t> idx;
    if (n <= per_tensor) {
      for (int64_t i = 0; i < n; ++i) idx.push_back(i);
    } else {
      std::uniform_int_distribution<int64_t> pick(0, n - 1);
      for (int i = 0; i < per_tensor; ++i) idx.push_back(pick(rng));
    }
    for (int64_t i : idx) {
      const double original = data[i].item<double>();
      double plus = 0.0;
      double minus = 0.0;
      {
        torch::NoGradGuard no_grad;
        data[i] = original + h;
        plus = loss().item<double>();
        data[i] = original - h;
        minus = loss().item<double>();
        data[i] = original;
      }
      const double numeric = (plus - minus) / (2 * h);
      const double a = analytic[i].item<double>();
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), abs_floor});
      ++result.checked;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst = name + "[" + std::to_string(i) + "] analytic=" + std::to_string(a) +
                       " numeric=" + std::to_string(numeric);
      }
    }
  }
  return result;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("qcdr_test_" + tag + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing_support
