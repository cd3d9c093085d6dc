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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <unistd.h>

#include "hfl/data.h"
#include "hfl/error.h"

using namespace hfl;
namespace fs = std::filesystem;

namespace {

std::set<int> label_set(const Shard& s) {
  return std::set<int>(s.labels.begin(), s.labels.end());
}

fs::path scratch_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() /
               ("hfl_data_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream(p) << s;
}

}  // namespace

TEST_CASE("every shard holds exactly classes_per_device labels") {
  DataSpec spec;
  FederatedDataset d = gen_synthetic(spec, 3);
  REQUIRE(d.num_devices() == spec.num_devices);
  for (int i = 0; i < d.num_devices(); ++i) {
    CHECK(label_set(d.shards[i]).size() == 2u);
    CHECK(label_set(d.shards[i]) ==
          std::set<int>(d.class_map[i].begin(), d.class_map[i].end()));
    CHECK(d.shards[i].size() == static_cast<size_t>(spec.samples_per_device));
  }
  CHECK(d.test.size() == 1000u);
  CHECK(label_set(d.test).size() == 10u);
}

TEST_CASE("classes_per_device = K gives every device all classes") {
  DataSpec spec;
  spec.num_devices = 5;
  spec.num_classes = 4;
  spec.classes_per_device = 4;
  FederatedDataset d = gen_synthetic(spec, 1);
  for (const Shard& s : d.shards) CHECK(label_set(s).size() == 4u);
}

TEST_CASE("generation is deterministic and seed-sensitive") {
  DataSpec spec;
  spec.num_devices = 6;
  CHECK(gen_synthetic(spec, 4) == gen_synthetic(spec, 4));
  CHECK_FALSE(gen_synthetic(spec, 4) == gen_synthetic(spec, 5));
}

TEST_CASE("devices with the same class map get the same label set") {
  DataSpec spec;
  spec.num_devices = 60;
  spec.num_classes = 4;
  FederatedDataset d = gen_synthetic(spec, 2);
  int pairs = 0;
  for (int a = 0; a < d.num_devices(); ++a)
    for (int b = a + 1; b < d.num_devices(); ++b)
      if (d.class_map[a] == d.class_map[b]) {
        ++pairs;
        CHECK(label_set(d.shards[a]) == label_set(d.shards[b]));
        CHECK(d.shards[a].labels == d.shards[b].labels);
        CHECK_FALSE(d.shards[a].features == d.shards[b].features);
      }
  CHECK(pairs > 0);
}

TEST_CASE("refresh disabled returns the shard unchanged") {
  DataSpec spec;
  spec.num_devices = 2;
  FederatedDataset d = gen_synthetic(spec, 1);
  CHECK(refresh_shard(d.shards[0], d.class_map[0], d.centroids, spec, 9) ==
        d.shards[0]);
}

TEST_CASE("refresh keeps size and labels and redraws features") {
  DataSpec spec;
  spec.num_devices = 2;
  spec.refresh = true;
  FederatedDataset d = gen_synthetic(spec, 1);
  Shard r = refresh_shard(d.shards[1], d.class_map[1], d.centroids, spec, 9);
  CHECK(r.size() == d.shards[1].size());
  CHECK(r.labels == d.shards[1].labels);
  CHECK_FALSE(r.features == d.shards[1].features);
  CHECK(refresh_shard(d.shards[1], d.class_map[1], d.centroids, spec, 9) == r);
}

TEST_CASE("refreshed feature means sit near the class-mixture mean") {
  DataSpec spec;
  spec.num_devices = 1;
  spec.samples_per_device = 600;
  spec.cluster_spread = 0.5;
  spec.refresh = true;
  FederatedDataset d = gen_synthetic(spec, 6);
  Shard r = refresh_shard(d.shards[0], d.class_map[0], d.centroids, spec, 77);
  const int dim = spec.input_dim;
  const double n = static_cast<double>(r.size());
  const double bound = 3.0 * spec.cluster_spread / std::sqrt(n);
  for (int f = 0; f < dim; ++f) {
    double mean = 0.0, mix = 0.0;
    for (size_t k = 0; k < r.size(); ++k) {
      mean += r.row(k)[f];
      mix += d.centroids[static_cast<size_t>(r.labels[k]) * dim + f];
    }
    CHECK(std::abs(mean / n - mix / n) <= bound);
  }
}

TEST_CASE("save then load round-trips exactly") {
  DataSpec spec;
  spec.num_devices = 4;
  spec.samples_per_device = 13;
  FederatedDataset d = gen_synthetic(spec, 8);
  fs::path dir = scratch_dir("rt");
  save_shards(d, dir);
  CHECK(load_shards(dir) == d);
  CHECK(load_shards(dir / "manifest.json") == d);
  fs::remove_all(dir);
}

TEST_CASE("out-of-range label names the shard and row") {
  DataSpec spec;
  spec.num_devices = 3;
  spec.num_classes = 3;
  spec.samples_per_device = 4;
  FederatedDataset d = gen_synthetic(spec, 8);
  d.shards[2].labels[1] = 3;
  CHECK_THROWS_AS(d.validate(), ValidationError);
  try {
    d.validate();
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2") != std::string::npos);
    CHECK(msg.find("row 1") != std::string::npos);
  }
  fs::path dir = scratch_dir("lab");
  save_shards(d, dir);
  CHECK_THROWS_AS(load_shards(dir), ValidationError);
  fs::remove_all(dir);
}

TEST_CASE("malformed csv reports the line number") {
  DataSpec spec;
  spec.num_devices = 2;
  spec.samples_per_device = 4;
  FederatedDataset d = gen_synthetic(spec, 8);
  fs::path dir = scratch_dir("bad");
  save_shards(d, dir);
  std::string text = "f0";
  for (int f = 1; f < spec.input_dim; ++f) text += ",f" + std::to_string(f);
  text += ",label\n";
  std::string row;
  for (int f = 0; f < spec.input_dim; ++f) row += "0.5,";
  text += row + "1\n" + row + "oops\n";
  write_text(dir / "device_1.csv", text);
  try {
    load_shards(dir);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  fs::remove_all(dir);
}

TEST_CASE("an empty device list is rejected") {
  FederatedDataset d;
  d.num_classes = 2;
  CHECK_THROWS_WITH_AS(d.validate(), "at least one device required", ValidationError);
  fs::path dir = scratch_dir("empty");
  fs::create_directories(dir);
  write_text(dir / "manifest.json",
             R"({"num_classes": 2, "input_dim": 1, "test": "test.csv", "devices": []})");
  CHECK_THROWS_WITH_AS(load_shards(dir), "at least one device required", ValidationError);
  fs::remove_all(dir);
}

TEST_CASE("spec validation") {
  DataSpec spec;
  spec.classes_per_device = 11;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = DataSpec{};
  spec.cluster_spread = 0.0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}
