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

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "protoda/datasets.hpp"
#include "protoda/rng.hpp"

namespace protoda {
namespace {

constexpr std::array<const char*, 8> kShapeNames = {
    "circle", "square", "triangle", "plus", "ring", "stripes", "diamond", "frame"};

struct Latents {
  double cx, cy;      // center, pixels
  double r;           // characteristic radius, pixels
  double theta;       // shape rotation
  double fg[3];       // foreground RGB in [0,1]
  double bg[3];       // background RGB in [0,1]
};

void hsv_to_rgb(double h, double s, double v, double* rgb) {
  h = std::fmod(h, 360.0);
  if (h < 0) h += 360.0;
  const double c = v * s;
  const double x = c * (1.0 - std::fabs(std::fmod(h / 60.0, 2.0) - 1.0));
  const double m = v - c;
  double r = 0, g = 0, b = 0;
  if (h < 60) {
    r = c; g = x;
  } else if (h < 120) {
    r = x; g = c;
  } else if (h < 180) {
    g = c; b = x;
  } else if (h < 240) {
    g = x; b = c;
  } else if (h < 300) {
    r = x; b = c;
  } else {
    r = c; b = x;
  }
  rgb[0] = r + m;
  rgb[1] = g + m;
  rgb[2] = b + m;
}

Latents draw_latents(Rng& rng, int side) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  Latents lat{};
  lat.cx = side * (0.5 + 0.12 * (2 * u01(rng) - 1));
  lat.cy = side * (0.5 + 0.12 * (2 * u01(rng) - 1));
  lat.r = side * (0.26 + 0.14 * u01(rng));
  lat.theta = 2.0 * M_PI * u01(rng);
  const double hue = 360.0 * u01(rng);
  const double sat = 0.65 + 0.35 * u01(rng);
  const double val = 0.75 + 0.25 * u01(rng);
  hsv_to_rgb(hue, sat, val, lat.fg);
  const double bg = 0.06 + 0.12 * u01(rng);
  for (int c = 0; c < 3; ++c) lat.bg[c] = bg + 0.02 * (2 * u01(rng) - 1);
  return lat;
}

bool inside_shape(int klass, const Latents& lat, double px, double py) {
  const double dx = px - lat.cx, dy = py - lat.cy;
  const double ct = std::cos(lat.theta), st = std::sin(lat.theta);
  const double x = ct * dx + st * dy;   // rotated frame
  const double y = -st * dx + ct * dy;
  const double r = lat.r;
  switch (klass) {
    case 0:  // circle
      return dx * dx + dy * dy <= r * r;
    case 1:  // square
      return std::max(std::fabs(x), std::fabs(y)) <= 0.82 * r;
    case 2: {  // equilateral triangle
      double vx[3], vy[3];
      for (int j = 0; j < 3; ++j) {
        const double a = lat.theta + M_PI / 2 + j * 2.0 * M_PI / 3.0;
        vx[j] = lat.cx + 1.15 * r * std::cos(a);
        vy[j] = lat.cy + 1.15 * r * std::sin(a);
      }
      bool neg = false, pos = false;
      for (int j = 0; j < 3; ++j) {
        const int n = (j + 1) % 3;
        const double cross = (vx[n] - vx[j]) * (py - vy[j]) -
                             (vy[n] - vy[j]) * (px - vx[j]);
        if (cross < 0) neg = true;
        if (cross > 0) pos = true;
      }
      return !(neg && pos);
    }
    case 3:  // plus
      return (std::fabs(x) <= 0.32 * r && std::fabs(y) <= r) ||
             (std::fabs(y) <= 0.32 * r && std::fabs(x) <= r);
    case 4: {  // ring
      const double d2 = dx * dx + dy * dy;
      return d2 <= r * r && d2 >= 0.55 * 0.55 * r * r;
    }
    case 5: {  // striped disc
      if (dx * dx + dy * dy > r * r) return false;
      const double period = 0.55 * r;
      double phase = std::fmod(x, period);
      if (phase < 0) phase += period;
      return phase < 0.5 * period;
    }
    case 6:  // diamond
      return std::fabs(x) + std::fabs(y) <= 1.15 * r;
    case 7: {  // hollow square frame
      const double m = std::max(std::fabs(x), std::fabs(y));
      return m <= 0.85 * r && m >= 0.5 * r;
    }
    default:
      return false;
  }
}

void render_base(int klass, const Latents& lat, int side,
                 std::vector<double>& rgb, std::vector<std::uint8_t>& mask) {
  rgb.assign(3u * side * side, 0.0);
  mask.assign(static_cast<std::size_t>(side) * side, 0);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const bool in = inside_shape(klass, lat, x + 0.5, y + 0.5);
      mask[y * side + x] = in ? 1 : 0;
      for (int c = 0; c < 3; ++c)
        rgb[(c * side + y) * side + x] = in ? lat.fg[c] : lat.bg[c];
    }
}

void apply_hue_rotation(std::vector<double>& rgb, int side, double deg) {
  const double a = deg * M_PI / 180.0;
  const double c = std::cos(a), s = std::sin(a);
  const double m[9] = {
      0.213 + 0.787 * c - 0.213 * s, 0.715 - 0.715 * c - 0.715 * s,
      0.072 - 0.072 * c + 0.928 * s, 0.213 - 0.213 * c + 0.143 * s,
      0.715 + 0.285 * c + 0.140 * s, 0.072 - 0.072 * c - 0.283 * s,
      0.213 - 0.213 * c - 0.787 * s, 0.715 - 0.715 * c + 0.715 * s,
      0.072 + 0.928 * c + 0.072 * s};
  const int plane = side * side;
  for (int i = 0; i < plane; ++i) {
    const double r = rgb[i], g = rgb[plane + i], b = rgb[2 * plane + i];
    rgb[i] = m[0] * r + m[1] * g + m[2] * b;
    rgb[plane + i] = m[3] * r + m[4] * g + m[5] * b;
    rgb[2 * plane + i] = m[6] * r + m[7] * g + m[8] * b;
  }
}

void apply_texture(std::vector<double>& rgb, const std::vector<std::uint8_t>& mask,
                   int side, Rng& rng) {
  std::uniform_int_distribution<int> phase_dist(0, 3);
  const int px = phase_dist(rng), py = phase_dist(rng);
  const int plane = side * side;
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      if (mask[y * side + x]) continue;
      const bool parity = (((x + px) / 4) + ((y + py) / 4)) % 2 == 0;
      const double delta = parity ? 0.10 : -0.03;
      for (int c = 0; c < 3; ++c) rgb[c * plane + y * side + x] += delta;
    }
}

void apply_noise(std::vector<double>& rgb, Rng& rng, double sigma_u8) {
  std::normal_distribution<double> noise(0.0, sigma_u8 / 255.0);
  for (auto& v : rgb) v += noise(rng);
}

std::vector<std::uint8_t> quantize(const std::vector<double>& rgb) {
  std::vector<std::uint8_t> out(rgb.size());
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    const double v = std::clamp(rgb[i], 0.0, 1.0);
    out[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return out;
}

std::string sample_id(Domain domain, const char* shape, int index) {
  return std::string("syn/") + (domain == Domain::source ? "s" : "t") + "/" +
         shape + "/" + std::to_string(index);
}

}  // namespace

DomainPair generate_synthetic_pair(const SyntheticSpec& spec) {
  if (spec.n_classes < 2) throw Error("synthetic benchmark needs n_classes >= 2");
  if (spec.n_classes > static_cast<int>(kShapeNames.size()))
    throw ConfigError("synthetic benchmark supports at most " +
                      std::to_string(kShapeNames.size()) + " classes");
  if (spec.per_class < 4) throw Error("synthetic benchmark needs per_class >= 4");
  if (spec.side < 8) throw ConfigError("synthetic side too small");

  DomainPair pair;
  for (int k = 0; k < spec.n_classes; ++k) pair.categories.push_back(kShapeNames[k]);

  std::vector<int> eval_labels;
  std::vector<double> rgb;
  std::vector<std::uint8_t> mask;
  for (int k = 0; k < spec.n_classes; ++k) {
    for (int i = 0; i < spec.per_class; ++i) {
      const std::uint64_t latent_seed =
          mix_seed(spec.seed, /*stream=*/1, static_cast<std::uint64_t>(k) * 100003 + i);

      // Source: clean render of the latent draw.
      {
        Rng rng(latent_seed);
        const Latents lat = draw_latents(rng, spec.side);
        render_base(k, lat, spec.side, rgb, mask);
        ImageSample s;
        s.id = sample_id(Domain::source, kShapeNames[k], i);
        s.side = spec.side;
        s.domain = Domain::source;
        s.label = k;
        s.pixels = quantize(rgb);
        pair.source.push_back(std::move(s));
        pair.source_masks.push_back(mask);
      }

      // Target: identical latents, then the domain shift.
      {
        Rng rng(latent_seed);
        const Latents lat = draw_latents(rng, spec.side);
        render_base(k, lat, spec.side, rgb, mask);
        Rng shift_rng(mix_seed(spec.seed, /*stream=*/2,
                               static_cast<std::uint64_t>(k) * 100003 + i));
        if (spec.target_shift.texture)
          apply_texture(rgb, mask, spec.side, shift_rng);
        if (spec.target_shift.hue_deg != 0.0)
          apply_hue_rotation(rgb, spec.side, spec.target_shift.hue_deg);
        if (spec.target_shift.noise_sigma > 0.0)
          apply_noise(rgb, shift_rng, spec.target_shift.noise_sigma);
        ImageSample t;
        t.id = sample_id(Domain::target, kShapeNames[k], i);
        t.side = spec.side;
        t.domain = Domain::target;
        t.pixels = quantize(rgb);
        pair.target.push_back(std::move(t));
        pair.target_masks.push_back(mask);
        eval_labels.push_back(k);
      }
    }
  }
  pair.set_eval_target_labels(std::move(eval_labels));
  pair.validate();
  return pair;
}

}  // namespace protoda
