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

#ifndef PROTODA_NN_HPP
#define PROTODA_NN_HPP

#include <cstddef>
#include <string>
#include <vector>

#include "protoda/rng.hpp"
#include "protoda/tensor.hpp"

namespace protoda {
namespace nn {

/// Named view of one parameter array and its gradient accumulator.
struct ParamRef {
  std::string name;
  std::vector<double>* value;
  std::vector<double>* grad;
};

class Conv2d {
 public:
  struct Ctx {
    Chw input;
  };

  Conv2d() = default;
  Conv2d(std::size_t in_c, std::size_t out_c, std::size_t k, std::size_t stride,
         std::size_t pad);

  void init_params(Rng& rng);
  Chw forward(const Chw& x, Ctx* ctx) const;
  /// Accumulates weight/bias grads and returns the input grad.
  Chw backward(const Chw& g_out, const Ctx& ctx);
  void zero_grad();
  std::vector<ParamRef> params(const std::string& prefix);

  std::size_t in_c = 0, out_c = 0, k = 0, stride = 1, pad = 0;
  std::vector<double> w, b, gw, gb;
};

/// 2x2 max pooling, stride 2. Gradient routes to the first maximum in scan
/// order.
class MaxPool2 {
 public:
  struct Ctx {
    std::vector<std::size_t> argmax;  // flat input index per output element
    std::size_t in_h = 0, in_w = 0, c = 0;
  };
  static Chw forward(const Chw& x, Ctx* ctx);
  static Chw backward(const Chw& g_out, const Ctx& ctx);
};

Chw relu_forward(const Chw& x, std::vector<std::uint8_t>* mask);
Chw relu_backward(const Chw& g, const std::vector<std::uint8_t>& mask);
std::vector<double> relu_forward_vec(const std::vector<double>& x,
                                     std::vector<std::uint8_t>* mask);
std::vector<double> relu_backward_vec(const std::vector<double>& g,
                                      const std::vector<std::uint8_t>& mask);

class Linear {
 public:
  struct Ctx {
    std::vector<double> input;
  };

  Linear() = default;
  Linear(std::size_t in_dim, std::size_t out_dim);

  void init_params(Rng& rng);
  std::vector<double> forward(const std::vector<double>& x, Ctx* ctx) const;
  std::vector<double> backward(const std::vector<double>& g_out, const Ctx& ctx);
  void zero_grad();
  std::vector<ParamRef> params(const std::string& prefix);

  std::size_t in_dim = 0, out_dim = 0;
  std::vector<double> w, b, gw, gb;  // w is out_dim x in_dim, row-major
};

/// Per-patch linear map on an HWC volume; equivalently a 1x1 convolution.
class PatchLinear {
 public:
  struct Ctx {
    Hwc input;
  };

  PatchLinear() = default;
  PatchLinear(std::size_t in_d, std::size_t out_d);

  void init_params(Rng& rng);
  Hwc forward(const Hwc& x, Ctx* ctx) const;
  Hwc backward(const Hwc& g_out, const Ctx& ctx);
  void zero_grad();
  std::vector<ParamRef> params(const std::string& prefix);

  std::size_t in_d = 0, out_d = 0;
  std::vector<double> w, b, gw, gb;  // w is out_d x in_d
};

/// Per-patch L2 normalization of an HWC volume: z -> z / (||z|| + eps).
/// Keeps the downstream distance computations on a bounded scale.
class PatchL2Norm {
 public:
  static constexpr double kEps = 1e-8;
  struct Ctx {
    Hwc input;
    std::vector<double> norms;  // per patch
  };
  static Hwc forward(const Hwc& x, Ctx* ctx);
  static Hwc backward(const Hwc& g_out, const Ctx& ctx);
};

/// Identity forward; backward multiplies the incoming gradient by -lambda.
struct GradientReversal {
  double lambda = 1.0;
  template <typename T>
  const T& forward(const T& x) const {
    return x;
  }
  std::vector<double> backward(const std::vector<double>& g) const {
    std::vector<double> out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = -lambda * g[i];
    return out;
  }
};

std::vector<double> softmax(const std::vector<double>& logits);
/// Returns CE loss; if dlogits is non-null, writes softmax - onehot into it.
double cross_entropy(const std::vector<double>& logits, int label,
                     std::vector<double>* dlogits);
/// Binary cross entropy on a single logit against a {0,1} target.
double bce_with_logit(double z, double target, double* dz);
/// Argmax with ties broken toward the smallest index.
int argmax_tie_smallest(const std::vector<double>& v);

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);

  void attach(ParamRef p);
  void attach_all(const std::vector<ParamRef>& ps);
  /// One update using the currently accumulated grads, each multiplied by
  /// grad_scale (used for batch averaging). Does not clear grads.
  void step(double grad_scale = 1.0);
  long steps_taken() const { return t_; }

  struct SlotState {
    std::string name;
    std::vector<double> m, v;
  };
  std::vector<SlotState> export_state() const;
  void import_state(const std::vector<SlotState>& slots, long t);

  double lr;

 private:
  struct Slot {
    ParamRef p;
    std::vector<double> m, v;
  };
  double b1_, b2_, eps_;
  long t_ = 0;
  std::vector<Slot> slots_;
};

}  // namespace nn
}  // namespace protoda

#endif  // PROTODA_NN_HPP
