// Copyright 2026 The Tamperloc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TAMPERLOC_RNG_HPP_
#define TAMPERLOC_RNG_HPP_

#include <cstdint>

namespace tamperloc {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Every random draw in a run is keyed off one base seed. Each subsystem owns
// a fixed stream id, and `index` distinguishes draws within a stream (step
// number, sample index, ...).
enum class SeedStream : std::uint64_t {
  kInit = 1,
  kDataOrder = 2,
  kMasking = 3,
  kAugment = 4,
  kSynth = 5,
  kPerceptual = 6,
};

inline std::uint64_t derive_seed(std::uint64_t base, SeedStream stream, std::uint64_t index = 0) {
  return splitmix64(splitmix64(base ^ (static_cast<std::uint64_t>(stream) * 0xD1B54A32D192ED03ULL)) + index);
}

}  // namespace tamperloc

#endif  // TAMPERLOC_RNG_HPP_
