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

#ifndef PROTODA_RNG_HPP
#define PROTODA_RNG_HPP

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace protoda {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; derives independent stream seeds from a root seed
/// so that e.g. epoch 3's shuffle does not depend on how many draws epoch 2
/// consumed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream,
                              std::uint64_t index = 0) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1) +
                    0xbf58476d1ce4e5b9ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::string rng_state_to_string(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline void rng_state_from_string(Rng& rng, const std::string& s) {
  std::istringstream is(s);
  is >> rng;
}

}  // namespace protoda

#endif  // PROTODA_RNG_HPP
