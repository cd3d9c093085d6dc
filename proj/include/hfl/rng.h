// Copyright 2026 The hierfl Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef HFL_RNG_H_
#define HFL_RNG_H_

#include <cstdint>
#include <initializer_list>
#include <random>

namespace hfl {

using Rng = std::mt19937_64;

// splitmix64 finalizer.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a base seed and a path of stream
// labels, e.g. derive_seed(run_seed, {kStreamTrain, device, round}).
inline uint64_t derive_seed(uint64_t base, std::initializer_list<uint64_t> path) {
  uint64_t s = mix64(base);
  for (uint64_t p : path) s = mix64(s ^ mix64(p + 0x632be59bd9b4e019ULL));
  return s;
}

// Stream labels used across modules.
enum Stream : uint64_t {
  kStreamInit = 1,
  kStreamCentroids = 2,
  kStreamDevice = 3,
  kStreamTest = 4,
  kStreamRefresh = 5,
  kStreamTopology = 6,
  kStreamTrain = 7,
  kStreamSim = 8,
  kStreamWarmup = 9,
};

}  // namespace hfl

#endif  // HFL_RNG_H_
