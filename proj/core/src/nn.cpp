// Copyright 2026 The ProtoDA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "protoda/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "protoda/errors.hpp"

namespace protoda {
namespace nn {

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::size_t in_c_, std::size_t out_c_, std::size_t k_,
               std::size_t stride_, std::size_t pad_)
    : in_c(in_c_), out_c(out_c_), k(k_), stride(stride_), pad(pad_) {
  w.assign(out_c * in_c * k * k, 0.0);
  b.assign(out_c, 0.0);
  gw.assign(w.size(), 0.0);
  gb.assign(b.size(), 0.0);
}

void Conv2d::init_params(Rng& rng) {
  const double scale = std::sqrt(2.0 / static_cast<double>(in_c * k * k));
  std::normal_distribution<double> dist(0.0, scale);
  for (auto& x : w) x = dist(rng);
  std::fill(b.begin(), b.end(), 0.0);
}

Chw Conv2d::forward(const Chw& x, Ctx* ctx) const {
  if (x.c != in_c) throw ShapeError("conv input channel mismatch");
  const std::size_t oh = (x.h + 2 * pad - k) / stride + 1;
  const std::size_t ow = (x.w + 2 * pad - k) / stride + 1;
  Chw out(out_c, oh, ow);
  for (std::size_t oc = 0; oc < out_c; ++oc) {
    double* out_plane = out.v.data() + oc * oh * ow;
    for (std::size_t i = 0; i < oh * ow; ++i) out_plane[i] = b[oc];
    for (std::size_t ic = 0; ic < in_c; ++ic) {
      const double* in_plane = x.v.data() + ic * x.h * x.w;
      for (std::size_t ky = 0; ky < k; ++ky)
        for (std::size_t kx = 0; kx < k; ++kx) {
          const double wv = w[((oc * in_c + ic) * k + ky) * k + kx];
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const std::ptrdiff_t iy =
                static_cast<std::ptrdiff_t>(oy * stride + ky) -
                static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(x.h)) continue;
            const double* in_row = in_plane + iy * x.w;
            double* out_row = out_plane + oy * ow;
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(ox * stride + kx) -
                  static_cast<std::ptrdiff_t>(pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(x.w)) continue;
              out_row[ox] += wv * in_row[ix];
            }
          }
        }
    }
  }
  if (ctx) ctx->input = x;
  return out;
}

Chw Conv2d::backward(const Chw& g_out, const Ctx& ctx) {
  const Chw& x = ctx.input;
  const std::size_t oh = g_out.h, ow = g_out.w;
  Chw g_in(x.c, x.h, x.w);
  for (std::size_t oc = 0; oc < out_c; ++oc) {
    const double* g_plane = g_out.v.data() + oc * oh * ow;
    double acc_b = 0.0;
    for (std::size_t i = 0; i < oh * ow; ++i) acc_b += g_plane[i];
    gb[oc] += acc_b;
    for (std::size_t ic = 0; ic < in_c; ++ic) {
      const double* in_plane = x.v.data() + ic * x.h * x.w;
      double* gin_plane = g_in.v.data() + ic * x.h * x.w;
      for (std::size_t ky = 0; ky < k; ++ky)
        for (std::size_t kx = 0; kx < k; ++kx) {
          const std::size_t widx = ((oc * in_c + ic) * k + ky) * k + kx;
          const double wv = w[widx];
          double acc_w = 0.0;
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const std::ptrdiff_t iy =
                static_cast<std::ptrdiff_t>(oy * stride + ky) -
                static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(x.h)) continue;
            const double* in_row = in_plane + iy * x.w;
            double* gin_row = gin_plane + iy * x.w;
            const double* g_row = g_plane + oy * ow;
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(ox * stride + kx) -
                  static_cast<std::ptrdiff_t>(pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(x.w)) continue;
              acc_w += g_row[ox] * in_row[ix];
              gin_row[ix] += wv * g_row[ox];
            }
          }
          gw[widx] += acc_w;
        }
    }
  }
  return g_in;
}

void Conv2d::zero_grad() {
  std::fill(gw.begin(), gw.end(), 0.0);
  std::fill(gb.begin(), gb.end(), 0.0);
}

std::vector<ParamRef> Conv2d::params(const std::string& prefix) {
  return {{prefix + ".w", &w, &gw}, {prefix + ".b", &b, &gb}};
}

// -------------------------------------------------------------- MaxPool2

Chw MaxPool2::forward(const Chw& x, Ctx* ctx) {
  const std::size_t oh = x.h / 2, ow = x.w / 2;
  Chw out(x.c, oh, ow);
  if (ctx) {
    ctx->argmax.assign(x.c * oh * ow, 0);
    ctx->in_h = x.h;
    ctx->in_w = x.w;
    ctx->c = x.c;
  }
  for (std::size_t c = 0; c < x.c; ++c)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t iy = oy * 2 + dy, ix = ox * 2 + dx;
            const std::size_t idx = (c * x.h + iy) * x.w + ix;
            if (x.v[idx] > best) {
              best = x.v[idx];
              best_idx = idx;
            }
          }
        out.at(c, oy, ox) = best;
        if (ctx) ctx->argmax[(c * oh + oy) * ow + ox] = best_idx;
      }
  return out;
}

Chw MaxPool2::backward(const Chw& g_out, const Ctx& ctx) {
  Chw g_in(ctx.c, ctx.in_h, ctx.in_w);
  for (std::size_t i = 0; i < g_out.v.size(); ++i)
    g_in.v[ctx.argmax[i]] += g_out.v[i];
  return g_in;
}

// ------------------------------------------------------------------ ReLU

Chw relu_forward(const Chw& x, std::vector<std::uint8_t>* mask) {
  Chw out = x;
  if (mask) mask->assign(x.v.size(), 0);
  for (std::size_t i = 0; i < out.v.size(); ++i) {
    if (out.v[i] > 0) {
      if (mask) (*mask)[i] = 1;
    } else {
      out.v[i] = 0;
    }
  }
  return out;
}

Chw relu_backward(const Chw& g, const std::vector<std::uint8_t>& mask) {
  Chw out = g;
  for (std::size_t i = 0; i < out.v.size(); ++i)
    if (!mask[i]) out.v[i] = 0;
  return out;
}

std::vector<double> relu_forward_vec(const std::vector<double>& x,
                                     std::vector<std::uint8_t>* mask) {
  std::vector<double> out = x;
  if (mask) mask->assign(x.size(), 0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] > 0) {
      if (mask) (*mask)[i] = 1;
    } else {
      out[i] = 0;
    }
  }
  return out;
}

std::vector<double> relu_backward_vec(const std::vector<double>& g,
                                      const std::vector<std::uint8_t>& mask) {
  std::vector<double> out = g;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!mask[i]) out[i] = 0;
  return out;
}

// ---------------------------------------------------------------- Linear

Linear::Linear(std::size_t in_dim_, std::size_t out_dim_)
    : in_dim(in_dim_), out_dim(out_dim_) {
  w.assign(out_dim * in_dim, 0.0);
  b.assign(out_dim, 0.0);
  gw.assign(w.size(), 0.0);
  gb.assign(b.size(), 0.0);
}

void Linear::init_params(Rng& rng) {
  const double scale = std::sqrt(2.0 / static_cast<double>(in_dim));
  std::normal_distribution<double> dist(0.0, scale);
  for (auto& x : w) x = dist(rng);
  std::fill(b.begin(), b.end(), 0.0);
}

std::vector<double> Linear::forward(const std::vector<double>& x,
                                    Ctx* ctx) const {
  if (x.size() != in_dim) throw ShapeError("linear input size mismatch");
  std::vector<double> out(out_dim);
  for (std::size_t o = 0; o < out_dim; ++o) {
    const double* wr = w.data() + o * in_dim;
    double acc = b[o];
    for (std::size_t i = 0; i < in_dim; ++i) acc += wr[i] * x[i];
    out[o] = acc;
  }
  if (ctx) ctx->input = x;
  return out;
}

std::vector<double> Linear::backward(const std::vector<double>& g_out,
                                     const Ctx& ctx) {
  std::vector<double> g_in(in_dim, 0.0);
  for (std::size_t o = 0; o < out_dim; ++o) {
    const double g = g_out[o];
    gb[o] += g;
    double* gwr = gw.data() + o * in_dim;
    const double* wr = w.data() + o * in_dim;
    for (std::size_t i = 0; i < in_dim; ++i) {
      gwr[i] += g * ctx.input[i];
      g_in[i] += g * wr[i];
    }
  }
  return g_in;
}

void Linear::zero_grad() {
  std::fill(gw.begin(), gw.end(), 0.0);
  std::fill(gb.begin(), gb.end(), 0.0);
}

std::vector<ParamRef> Linear::params(const std::string& prefix) {
  return {{prefix + ".w", &w, &gw}, {prefix + ".b", &b, &gb}};
}

// ----------------------------------------------------------- PatchLinear

PatchLinear::PatchLinear(std::size_t in_d_, std::size_t out_d_)
    : in_d(in_d_), out_d(out_d_) {
  w.assign(out_d * in_d, 0.0);
  b.assign(out_d, 0.0);
  gw.assign(w.size(), 0.0);
  gb.assign(b.size(), 0.0);
}

void PatchLinear::init_params(Rng& rng) {
  const double scale = std::sqrt(2.0 / static_cast<double>(in_d));
  std::normal_distribution<double> dist(0.0, scale);
  for (auto& x : w) x = dist(rng);
  std::fill(b.begin(), b.end(), 0.0);
}

Hwc PatchLinear::forward(const Hwc& x, Ctx* ctx) const {
  if (x.d != in_d) throw ShapeError("patch linear depth mismatch");
  Hwc out(x.h, x.w, out_d);
  for (std::size_t p = 0; p < x.patches(); ++p) {
    const double* in = x.v.data() + p * in_d;
    double* o = out.v.data() + p * out_d;
    for (std::size_t j = 0; j < out_d; ++j) {
      const double* wr = w.data() + j * in_d;
      double acc = b[j];
      for (std::size_t i = 0; i < in_d; ++i) acc += wr[i] * in[i];
      o[j] = acc;
    }
  }
  if (ctx) ctx->input = x;
  return out;
}

Hwc PatchLinear::backward(const Hwc& g_out, const Ctx& ctx) {
  const Hwc& x = ctx.input;
  Hwc g_in(x.h, x.w, in_d);
  for (std::size_t p = 0; p < x.patches(); ++p) {
    const double* in = x.v.data() + p * in_d;
    const double* g = g_out.v.data() + p * out_d;
    double* gi = g_in.v.data() + p * in_d;
    for (std::size_t j = 0; j < out_d; ++j) {
      gb[j] += g[j];
      const double* wr = w.data() + j * in_d;
      double* gwr = gw.data() + j * in_d;
      for (std::size_t i = 0; i < in_d; ++i) {
        gwr[i] += g[j] * in[i];
        gi[i] += g[j] * wr[i];
      }
    }
  }
  return g_in;
}

void PatchLinear::zero_grad() {
  std::fill(gw.begin(), gw.end(), 0.0);
  std::fill(gb.begin(), gb.end(), 0.0);
}

std::vector<ParamRef> PatchLinear::params(const std::string& prefix) {
  return {{prefix + ".w", &w, &gw}, {prefix + ".b", &b, &gb}};
}

// ----------------------------------------------------------- PatchL2Norm

Hwc PatchL2Norm::forward(const Hwc& x, Ctx* ctx) {
  Hwc out(x.h, x.w, x.d);
  if (ctx) {
    ctx->input = x;
    ctx->norms.assign(x.patches(), 0.0);
  }
  for (std::size_t p = 0; p < x.patches(); ++p) {
    const double* in = x.v.data() + p * x.d;
    double* o = out.v.data() + p * x.d;
    double norm2 = 0;
    for (std::size_t t = 0; t < x.d; ++t) norm2 += in[t] * in[t];
    const double denom = std::sqrt(norm2) + kEps;
    for (std::size_t t = 0; t < x.d; ++t) o[t] = in[t] / denom;
    if (ctx) ctx->norms[p] = denom;
  }
  return out;
}

Hwc PatchL2Norm::backward(const Hwc& g_out, const Ctx& ctx) {
  const Hwc& x = ctx.input;
  Hwc g_in(x.h, x.w, x.d);
  for (std::size_t p = 0; p < x.patches(); ++p) {
    const double* in = x.v.data() + p * x.d;
    const double* g = g_out.v.data() + p * x.d;
    double* gi = g_in.v.data() + p * x.d;
    const double denom = ctx.norms[p];
    // d(z/denom)/dz with denom = ||z|| + eps:
    // g/denom - z * (g . z) / (||z|| * denom^2)
    double dot = 0, norm2 = 0;
    for (std::size_t t = 0; t < x.d; ++t) {
      dot += g[t] * in[t];
      norm2 += in[t] * in[t];
    }
    const double norm = std::sqrt(norm2);
    const double scale = norm > 0 ? dot / (norm * denom * denom) : 0.0;
    for (std::size_t t = 0; t < x.d; ++t)
      gi[t] = g[t] / denom - in[t] * scale;
  }
  return g_in;
}

// ------------------------------------------------------------ loss utils

std::vector<double> softmax(const std::vector<double>& logits) {
  std::vector<double> q(logits.size());
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    q[i] = std::exp(logits[i] - mx);
    sum += q[i];
  }
  for (auto& x : q) x /= sum;
  return q;
}

double cross_entropy(const std::vector<double>& logits, int label,
                     std::vector<double>* dlogits) {
  if (label < 0 || label >= static_cast<int>(logits.size()))
    throw IndexError("cross entropy label out of range");
  const std::vector<double> q = softmax(logits);
  const double loss = -std::log(std::max(q[label], 1e-300));
  if (dlogits) {
    *dlogits = q;
    (*dlogits)[label] -= 1.0;
  }
  return loss;
}

double bce_with_logit(double z, double target, double* dz) {
  // softplus(z) - target*z, stable on both tails
  const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  const double sig = 1.0 / (1.0 + std::exp(-z));
  if (dz) *dz = sig - target;
  return softplus - target * z;
}

int argmax_tie_smallest(const std::vector<double>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

// ------------------------------------------------------------------ Adam

Adam::Adam(double lr_, double beta1, double beta2, double eps)
    : lr(lr_), b1_(beta1), b2_(beta2), eps_(eps) {}

void Adam::attach(ParamRef p) {
  Slot s;
  s.p = p;
  s.m.assign(p.value->size(), 0.0);
  s.v.assign(p.value->size(), 0.0);
  slots_.push_back(std::move(s));
}

void Adam::attach_all(const std::vector<ParamRef>& ps) {
  for (const auto& p : ps) attach(p);
}

void Adam::step(double grad_scale) {
  ++t_;
  const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (auto& s : slots_) {
    auto& val = *s.p.value;
    const auto& grad = *s.p.grad;
    for (std::size_t i = 0; i < val.size(); ++i) {
      const double g = grad[i] * grad_scale;
      s.m[i] = b1_ * s.m[i] + (1.0 - b1_) * g;
      s.v[i] = b2_ * s.v[i] + (1.0 - b2_) * g * g;
      const double mhat = s.m[i] / bc1;
      const double vhat = s.v[i] / bc2;
      val[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

std::vector<Adam::SlotState> Adam::export_state() const {
  std::vector<SlotState> out;
  out.reserve(slots_.size());
  for (const auto& s : slots_) out.push_back({s.p.name, s.m, s.v});
  return out;
}

void Adam::import_state(const std::vector<SlotState>& slots, long t) {
  t_ = t;
  for (const auto& in : slots)
    for (auto& s : slots_)
      if (s.p.name == in.name) {
        if (in.m.size() == s.m.size()) s.m = in.m;
        if (in.v.size() == s.v.size()) s.v = in.v;
      }
}

}  // namespace nn
}  // namespace protoda
