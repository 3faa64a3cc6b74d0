#pragma once

// Scalar float64 reference implementations used as test oracles. They are
// written directly from the defining formulas with plain loops and share no
// code with the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace oracle {

/// Dense (C, H, W) array.
struct Grid {
  int c = 0, h = 0, w = 0;
  std::vector<double> v;

  Grid() = default;
  Grid(int c_, int h_, int w_, double fill = 0.0)
      : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, fill) {}
  double& at(int ci, int y, int x) { return v[(static_cast<std::size_t>(ci) * h + y) * w + x]; }
  double at(int ci, int y, int x) const { return v[(static_cast<std::size_t>(ci) * h + y) * w + x]; }
};

/// Row-major matrix (rows x cols).
struct Mat {
  int rows = 0, cols = 0;
  std::vector<double> v;
  Mat() = default;
  Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, fill) {}
  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
};

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Grid gelu(const Grid& g) {
  Grid out = g;
  for (double& x : out.v) x = gelu(x);
  return out;
}

/// Convolution with zero padding. weight is (out, in, k, k) flattened.
inline Grid conv2d(const Grid& in, const std::vector<double>& weight, const std::vector<double>& bias,
                   int out_channels, int k, int stride, int pad) {
  const int oh = (in.h + 2 * pad - k) / stride + 1;
  const int ow = (in.w + 2 * pad - k) / stride + 1;
  Grid out(out_channels, oh, ow);
  for (int o = 0; o < out_channels; ++o)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        double acc = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(o)];
        for (int i = 0; i < in.c; ++i)
          for (int dy = 0; dy < k; ++dy)
            for (int dx = 0; dx < k; ++dx) {
              const int sy = y * stride + dy - pad;
              const int sx = x * stride + dx - pad;
              if (sy < 0 || sy >= in.h || sx < 0 || sx >= in.w) continue;
              acc += weight[((static_cast<std::size_t>(o) * in.c + i) * k + dy) * k + dx] * in.at(i, sy, sx);
            }
        out.at(o, y, x) = acc;
      }
  return out;
}

/// Bilinear resize with half-pixel centres and edge clamping.
inline Grid resize_bilinear(const Grid& in, int oh, int ow) {
  Grid out(in.c, oh, ow);
  auto source = [](int dst, int in_size, int out_size, int& i0, int& i1, double& frac) {
    double s = (dst + 0.5) * static_cast<double>(in_size) / out_size - 0.5;
    if (s < 0) s = 0;
    i0 = static_cast<int>(std::floor(s));
    if (i0 > in_size - 1) i0 = in_size - 1;
    i1 = std::min(i0 + 1, in_size - 1);
    frac = s - i0;
  };
  for (int y = 0; y < oh; ++y) {
    int y0, y1;
    double fy;
    source(y, in.h, oh, y0, y1, fy);
    for (int x = 0; x < ow; ++x) {
      int x0, x1;
      double fx;
      source(x, in.w, ow, x0, x1, fx);
      for (int c = 0; c < in.c; ++c) {
        const double top = in.at(c, y0, x0) * (1 - fx) + in.at(c, y0, x1) * fx;
        const double bottom = in.at(c, y1, x0) * (1 - fx) + in.at(c, y1, x1) * fx;
        out.at(c, y, x) = top * (1 - fy) + bottom * fy;
      }
    }
  }
  return out;
}

/// Downsampling by an integer factor f with a triangle filter of half-width f
/// centred on each output pixel (pixel-centre coordinates), weights
/// renormalised over the taps that fall inside the image.
inline Grid downsample_triangle(const Grid& in, int f) {
  const int oh = in.h / f, ow = in.w / f;
  auto taps = [f](int dst, int in_size) {
    std::vector<std::pair<int, double>> t;
    const double centre = f * (dst + 0.5);
    double sum = 0.0;
    for (int j = 0; j < in_size; ++j) {
      const double w = std::max(0.0, 1.0 - std::abs(j + 0.5 - centre) / f);
      if (w > 0.0) {
        t.emplace_back(j, w);
        sum += w;
      }
    }
    for (auto& [j, w] : t) w /= sum;
    return t;
  };
  Grid out(in.c, oh, ow);
  for (int y = 0; y < oh; ++y) {
    const auto ty = taps(y, in.h);
    for (int x = 0; x < ow; ++x) {
      const auto tx = taps(x, in.w);
      for (int c = 0; c < in.c; ++c) {
        double acc = 0.0;
        for (const auto& [sy, wy] : ty)
          for (const auto& [sx, wx] : tx) acc += wy * wx * in.at(c, sy, sx);
        out.at(c, y, x) = acc;
      }
    }
  }
  return out;
}

// --- distortion --------------------------------------------------------------

/// r_d = k1 r + k2 r^3 + k3 r^5 + k4 r^7, evaluated term by term.
inline double radial(const double k[4], double r) {
  return k[0] * r + k[1] * std::pow(r, 3) + k[2] * std::pow(r, 5) + k[3] * std::pow(r, 7);
}

// --- controllable blocks -------------------------------------------------------

inline double spatial_mean(const Grid& g, int c) {
  double s = 0.0;
  for (int y = 0; y < g.h; ++y)
    for (int x = 0; x < g.w; ++x) s += g.at(c, y, x);
  return s / (g.h * g.w);
}

/// Dense layer y = W x + b with W given as (out, in) row-major.
inline std::vector<double> linear(const std::vector<double>& x, const std::vector<double>& w,
                                  const std::vector<double>& b, int out) {
  const int in = static_cast<int>(x.size());
  std::vector<double> y(static_cast<std::size_t>(out));
  for (int o = 0; o < out; ++o) {
    double acc = b.empty() ? 0.0 : b[static_cast<std::size_t>(o)];
    for (int i = 0; i < in; ++i) acc += w[static_cast<std::size_t>(o) * in + i] * x[static_cast<std::size_t>(i)];
    y[static_cast<std::size_t>(o)] = acc;
  }
  return y;
}

struct CcmbWeights {
  std::vector<double> fc1_w, fc1_b;  // (C, 2C), (C)
  std::vector<double> fc2_w, fc2_b;  // (1, C), (1)
};

/// theta = sigmoid(FC2(GELU(FC1([GAP(F_in), GAP(Q_c)])))).
inline double ccmb_theta(const Grid& f_in, const Grid& q_c, const CcmbWeights& wts) {
  std::vector<double> pooled;
  for (int c = 0; c < f_in.c; ++c) pooled.push_back(spatial_mean(f_in, c));
  for (int c = 0; c < q_c.c; ++c) pooled.push_back(spatial_mean(q_c, c));
  std::vector<double> hidden = linear(pooled, wts.fc1_w, wts.fc1_b, f_in.c);
  for (double& h : hidden) h = gelu(h);
  return sigmoid(linear(hidden, wts.fc2_w, wts.fc2_b, 1)[0]);
}

/// mode 0 direct, 1 fixed ratio 0.5, 2 dynamic.
inline Grid ccmb(const Grid& f_in, const Grid& q_c, const CcmbWeights& wts, int mode) {
  const double theta = mode == 0 ? 1.0 : mode == 1 ? 0.5 : ccmb_theta(f_in, q_c, wts);
  Grid out = f_in;
  for (std::size_t i = 0; i < out.v.size(); ++i) {
    const double f_c = f_in.v[i] * q_c.v[i];
    out.v[i] = theta * f_c + (1 - theta) * f_in.v[i];
  }
  return out;
}

struct CambWeights {
  std::vector<double> ln_in_g, ln_in_b, ln_out_g, ln_out_b;
  std::vector<double> wq, wk, wv;  // (C, C) each, no bias
  std::vector<double> f1_w, f1_b, f2_w, f2_b, f3_w, f3_b;
  std::vector<double> proj_w, proj_b;  // (C, C), (C)
};

inline std::vector<double> layer_norm(const std::vector<double>& x, const std::vector<double>& g,
                                      const std::vector<double>& b, double eps = 1e-5) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mean) / std::sqrt(var + eps) * g[i] + b[i];
  return y;
}

/// Single-head attention with the controlled feature as the query stream,
/// residual on F_in, LayerNorm + 3-layer GELU FFN with residual, then a 1x1 projection.
inline Grid camb(const Grid& f_in, const Grid& q_c, const CambWeights& w) {
  const int C = f_in.c;
  const int L = f_in.h * f_in.w;
  auto token = [&](const Grid& g, int t) {
    std::vector<double> v(static_cast<std::size_t>(C));
    for (int c = 0; c < C; ++c) v[static_cast<std::size_t>(c)] = g.at(c, t / g.w, t % g.w);
    return v;
  };
  std::vector<std::vector<double>> q(L), k(L), v(L), x(L);
  for (int t = 0; t < L; ++t) {
    x[t] = token(f_in, t);
    std::vector<double> controlled = x[t];
    const auto qt = token(q_c, t);
    for (int c = 0; c < C; ++c) controlled[static_cast<std::size_t>(c)] *= qt[static_cast<std::size_t>(c)];
    q[t] = linear(layer_norm(controlled, w.ln_in_g, w.ln_in_b), w.wq, {}, C);
    const auto normed = layer_norm(x[t], w.ln_in_g, w.ln_in_b);
    k[t] = linear(normed, w.wk, {}, C);
    v[t] = linear(normed, w.wv, {}, C);
  }
  Grid out(C, f_in.h, f_in.w);
  for (int t = 0; t < L; ++t) {
    std::vector<double> logits(static_cast<std::size_t>(L));
    double mx = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < L; ++s) {
      double d = 0.0;
      for (int c = 0; c < C; ++c) d += q[t][static_cast<std::size_t>(c)] * k[s][static_cast<std::size_t>(c)];
      logits[static_cast<std::size_t>(s)] = d / std::sqrt(static_cast<double>(C));
      mx = std::max(mx, logits[static_cast<std::size_t>(s)]);
    }
    double z = 0.0;
    for (double& l : logits) {
      l = std::exp(l - mx);
      z += l;
    }
    std::vector<double> fa = x[t];
    for (int s = 0; s < L; ++s)
      for (int c = 0; c < C; ++c) fa[static_cast<std::size_t>(c)] += logits[static_cast<std::size_t>(s)] / z * v[s][static_cast<std::size_t>(c)];
    auto h = linear(layer_norm(fa, w.ln_out_g, w.ln_out_b), w.f1_w, w.f1_b, 2 * C);
    for (double& e : h) e = gelu(e);
    h = linear(h, w.f2_w, w.f2_b, 2 * C);
    for (double& e : h) e = gelu(e);
    auto y = linear(h, w.f3_w, w.f3_b, C);
    for (int c = 0; c < C; ++c) y[static_cast<std::size_t>(c)] += fa[static_cast<std::size_t>(c)];
    const auto p = linear(y, w.proj_w, w.proj_b, C);
    for (int c = 0; c < C; ++c) out.at(c, t / f_in.w, t % f_in.w) = p[static_cast<std::size_t>(c)];
  }
  return out;
}

// --- query control --------------------------------------------------------------

struct ConvWeights {
  std::vector<double> w, b;
  int out = 0;
};

/// conv3x3 -> GELU -> conv3x3 -> GELU -> conv3x3 (stride 1, zero padding 1).
inline Grid extract(const Grid& q, const ConvWeights convs[3]) {
  Grid x = gelu(conv2d(q, convs[0].w, convs[0].b, convs[0].out, 3, 1, 1));
  x = gelu(conv2d(x, convs[1].w, convs[1].b, convs[1].out, 3, 1, 1));
  return conv2d(x, convs[2].w, convs[2].b, convs[2].out, 3, 1, 1);
}

struct ChainLayer {
  ConvWeights fc1, fc2;  // 1x1 convolutions
  int height = 0, width = 0;
};

/// Q^l = resize(FC2(FC1(Q^{l-1}))) for every layer.
inline std::vector<Grid> control_chain(const Grid& q_ex, const std::vector<ChainLayer>& layers) {
  std::vector<Grid> out;
  Grid q = q_ex;
  for (const auto& l : layers) {
    q = conv2d(conv2d(q, l.fc1.w, l.fc1.b, l.fc1.out, 1, 1, 0), l.fc2.w, l.fc2.b, l.fc2.out, 1, 1, 0);
    q = resize_bilinear(q, l.height, l.width);
    out.push_back(q);
  }
  return out;
}

inline Grid interpolate(const std::vector<Grid>& queries, const std::vector<double>& weights) {
  Grid out(queries[0].c, queries[0].h, queries[0].w);
  for (std::size_t i = 0; i < queries.size(); ++i)
    for (std::size_t e = 0; e < out.v.size(); ++e) out.v[e] += weights[i] * queries[i].v[e];
  return out;
}

// --- losses and metrics ---------------------------------------------------------

inline double mean_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

/// Sum over scales j = 1..n of mean |downsample_triangle(gt, 2^j) - head_j(feature_j)|.
inline double multiscale(const Grid& gt, const std::vector<Grid>& features,
                         const std::vector<ConvWeights>& heads) {
  double total = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const int factor = 1 << (i + 1);
    const Grid target = downsample_triangle(gt, factor);
    const Grid decoded = conv2d(features[i], heads[i].w, heads[i].b, 3, 3, 1, 1);
    total += mean_abs_diff(decoded.v, target.v);
  }
  return total;
}

inline double psnr(const std::vector<double>& a, const std::vector<double>& b) {
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mse += (a[i] - b[i]) * (a[i] - b[i]);
  mse /= static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mse);
}

/// Mean SSIM with a normalised 11x11 Gaussian (sigma 1.5) evaluated directly in
/// 2D at every fully-inside window position, averaged over the three channels.
inline double ssim(const Grid& a, const Grid& b) {
  const int k = 11;
  const double sigma = 1.5;
  std::vector<double> win(static_cast<std::size_t>(k * k));
  double norm = 0.0;
  for (int y = 0; y < k; ++y)
    for (int x = 0; x < k; ++x) {
      const double dy = y - 5, dx = x - 5;
      win[static_cast<std::size_t>(y * k + x)] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
      norm += win[static_cast<std::size_t>(y * k + x)];
    }
  for (double& v : win) v /= norm;
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0.0;
  for (int c = 0; c < a.c; ++c) {
    double sum = 0.0;
    int count = 0;
    for (int y = 0; y + k <= a.h; ++y)
      for (int x = 0; x + k <= a.w; ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = 0; i < k; ++i)
          for (int j = 0; j < k; ++j) {
            const double g = win[static_cast<std::size_t>(i * k + j)];
            const double va = a.at(c, y + i, x + j), vb = b.at(c, y + i, x + j);
            ma += g * va;
            mb += g * vb;
            saa += g * va * va;
            sbb += g * vb * vb;
            sab += g * va * vb;
          }
        const double var_a = saa - ma * ma, var_b = sbb - mb * mb, cov = sab - ma * mb;
        sum += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
        ++count;
      }
    total += sum / count;
  }
  return total / a.c;
}

}  // namespace oracle
