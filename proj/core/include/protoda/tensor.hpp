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

#ifndef PROTODA_TENSOR_HPP
#define PROTODA_TENSOR_HPP

#include <cstddef>
#include <cstdint>
#include <vector>

namespace protoda {

/// Channel-major (CHW) activation plane used inside the conv stack.
struct Chw {
  std::size_t c = 0, h = 0, w = 0;
  std::vector<double> v;

  Chw() = default;
  Chw(std::size_t c_, std::size_t h_, std::size_t w_)
      : c(c_), h(h_), w(w_), v(c_ * h_ * w_, 0.0) {}

  double& at(std::size_t ci, std::size_t y, std::size_t x) {
    return v[(ci * h + y) * w + x];
  }
  double at(std::size_t ci, std::size_t y, std::size_t x) const {
    return v[(ci * h + y) * w + x];
  }
  std::size_t size() const { return v.size(); }
};

/// Patch-major (HWC) feature volume: the D-vector at each spatial
/// location is contiguous, which is the access pattern every prototype
/// distance computation needs.
struct Hwc {
  std::size_t h = 0, w = 0, d = 0;
  std::vector<double> v;

  Hwc() = default;
  Hwc(std::size_t h_, std::size_t w_, std::size_t d_)
      : h(h_), w(w_), d(d_), v(h_ * w_ * d_, 0.0) {}

  double* patch(std::size_t y, std::size_t x) { return v.data() + (y * w + x) * d; }
  const double* patch(std::size_t y, std::size_t x) const {
    return v.data() + (y * w + x) * d;
  }
  std::size_t patches() const { return h * w; }
  std::size_t size() const { return v.size(); }
};

/// Row-major matrix of doubles.
struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
  double* row(std::size_t r) { return v.data() + r * cols; }
  const double* row(std::size_t r) const { return v.data() + r * cols; }
};

inline Hwc chw_to_hwc(const Chw& x) {
  Hwc out(x.h, x.w, x.c);
  for (std::size_t ci = 0; ci < x.c; ++ci)
    for (std::size_t y = 0; y < x.h; ++y)
      for (std::size_t xx = 0; xx < x.w; ++xx)
        out.patch(y, xx)[ci] = x.at(ci, y, xx);
  return out;
}

inline Chw hwc_to_chw(const Hwc& x) {
  Chw out(x.d, x.h, x.w);
  for (std::size_t y = 0; y < x.h; ++y)
    for (std::size_t xx = 0; xx < x.w; ++xx) {
      const double* p = x.patch(y, xx);
      for (std::size_t ci = 0; ci < x.d; ++ci) out.at(ci, y, xx) = p[ci];
    }
  return out;
}

}  // namespace protoda

#endif  // PROTODA_TENSOR_HPP
