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

#include "hfl/data.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "hfl/error.h"
#include "hfl/rng.h"
#include "json.hpp"

namespace hfl {

namespace fs = std::filesystem;

void DataSpec::validate() const {
  if (num_devices < 1) throw ConfigError("data.num_devices must be >= 1");
  if (num_classes < 2) throw ConfigError("data.num_classes must be >= 2");
  if (classes_per_device < 1 || classes_per_device > num_classes)
    throw ConfigError("data.classes_per_device must be in [1, num_classes]");
  if (samples_per_device < classes_per_device)
    throw ConfigError("data.samples_per_device must be >= classes_per_device");
  if (input_dim < 1) throw ConfigError("data.input_dim must be >= 1");
  if (!(cluster_spread > 0.0))
    throw ConfigError("data.cluster_spread must be > 0");
}

void FederatedDataset::validate() const {
  if (shards.empty()) throw ValidationError("at least one device required");
  if (class_map.size() != shards.size())
    throw ValidationError("class_map has " + std::to_string(class_map.size()) +
                          " entries for " + std::to_string(shards.size()) +
                          " shards");
  const int dim = test.input_dim;
  auto check = [&](const Shard& s, const std::string& name,
                   const std::vector<int>* allowed) {
    if (s.size() == 0) throw ValidationError(name + " is empty");
    if (s.input_dim != dim)
      throw ValidationError(name + " has input_dim " +
                            std::to_string(s.input_dim) + ", expected " +
                            std::to_string(dim));
    for (size_t r = 0; r < s.size(); ++r) {
      const int y = s.labels[r];
      if (y < 0 || y >= num_classes)
        throw ValidationError(name + " row " + std::to_string(r) + ": label " +
                              std::to_string(y) + " outside [0, " +
                              std::to_string(num_classes) + ")");
      if (allowed &&
          std::find(allowed->begin(), allowed->end(), y) == allowed->end())
        throw ValidationError(name + " row " + std::to_string(r) + ": label " +
                              std::to_string(y) + " not in its class map");
    }
  };
  for (size_t i = 0; i < shards.size(); ++i)
    check(shards[i], "shard " + std::to_string(i), &class_map[i]);
  check(test, "test set", nullptr);
  std::set<int> seen(test.labels.begin(), test.labels.end());
  if (static_cast<int>(seen.size()) != num_classes)
    throw ValidationError("test set does not cover all " +
                          std::to_string(num_classes) + " classes");
}

namespace {

void draw_sample(const std::vector<double>& centroids, int cls, int dim,
                 double spread, Rng& rng, Shard& out) {
  std::normal_distribution<double> noise(0.0, spread);
  const double* c = centroids.data() + static_cast<size_t>(cls) * dim;
  for (int f = 0; f < dim; ++f) out.features.push_back(c[f] + noise(rng));
  out.labels.push_back(cls);
}

// Splits n samples across the classes; the first n % k classes get one more.
std::vector<int> per_class_counts(int n, int k) {
  std::vector<int> counts(k, n / k);
  for (int c = 0; c < n % k; ++c) ++counts[c];
  return counts;
}

}  // namespace

FederatedDataset gen_synthetic(const DataSpec& spec, uint64_t seed) {
  spec.validate();
  const int dim = spec.input_dim, k = spec.num_classes;
  FederatedDataset out;
  out.num_classes = k;

  Rng crng(derive_seed(seed, {kStreamCentroids}));
  std::normal_distribution<double> gauss(0.0, 1.0);
  out.centroids.resize(static_cast<size_t>(k) * dim);
  for (int c = 0; c < k; ++c) {
    double norm = 0.0;
    double* v = out.centroids.data() + static_cast<size_t>(c) * dim;
    for (int f = 0; f < dim; ++f) {
      v[f] = gauss(crng);
      norm += v[f] * v[f];
    }
    norm = std::sqrt(norm);
    for (int f = 0; f < dim; ++f) v[f] /= norm;
  }

  for (int i = 0; i < spec.num_devices; ++i) {
    Rng rng(derive_seed(seed, {kStreamDevice, static_cast<uint64_t>(i)}));
    std::vector<int> all(k);
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    std::vector<int> classes(all.begin(), all.begin() + spec.classes_per_device);
    std::sort(classes.begin(), classes.end());

    Shard s;
    s.input_dim = dim;
    const auto counts =
        per_class_counts(spec.samples_per_device, spec.classes_per_device);
    for (size_t c = 0; c < classes.size(); ++c)
      for (int n = 0; n < counts[c]; ++n)
        draw_sample(out.centroids, classes[c], dim, spec.cluster_spread, rng, s);
    out.shards.push_back(std::move(s));
    out.class_map.push_back(std::move(classes));
  }

  Rng trng(derive_seed(seed, {kStreamTest}));
  out.test.input_dim = dim;
  for (int n = 0; n < 100; ++n)
    for (int c = 0; c < k; ++c)
      draw_sample(out.centroids, c, dim, spec.cluster_spread, trng, out.test);
  return out;
}

Shard refresh_shard(const Shard& shard, const std::vector<int>& classes,
                    const std::vector<double>& centroids, const DataSpec& spec,
                    uint64_t round_seed) {
  if (!spec.refresh || centroids.empty()) return shard;
  Rng rng(derive_seed(round_seed, {kStreamRefresh}));
  Shard out;
  out.input_dim = shard.input_dim;
  // Keep the original label sequence so counts and the label set match.
  for (int y : shard.labels) {
    if (std::find(classes.begin(), classes.end(), y) == classes.end())
      throw ValidationError("refresh_shard: label " + std::to_string(y) +
                            " not in the device's class map");
    draw_sample(centroids, y, shard.input_dim, spec.cluster_spread, rng, out);
  }
  return out;
}

// --- file IO ---------------------------------------------------------------

namespace {

std::string format_real(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void write_csv(const Shard& s, const fs::path& file) {
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  for (int f = 0; f < s.input_dim; ++f) out << 'f' << f << ',';
  out << "label\n";
  for (size_t r = 0; r < s.size(); ++r) {
    for (double v : s.row(r)) out << format_real(v) << ',';
    out << s.labels[r] << '\n';
  }
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  size_t start = 0;
  while (true) {
    const size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view tok, const std::string& file, int line) {
  while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t'))
    tok.remove_prefix(1);
  while (!tok.empty() &&
         (tok.back() == ' ' || tok.back() == '\t' || tok.back() == '\r'))
    tok.remove_suffix(1);
  T v{};
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw ParseError(file + ": bad number '" + std::string(tok) + "'", line);
  return v;
}

Shard read_csv(const fs::path& file, int expected_dim) {
  std::ifstream in(file);
  if (!in) throw ParseError("cannot open " + file.string());
  const std::string name = file.filename().string();
  std::string line;
  int lineno = 1;
  if (!std::getline(in, line)) throw ParseError(name + ": missing header", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_commas(line);
  const int dim = static_cast<int>(header.size()) - 1;
  if (dim < 1 || header.back() != "label")
    throw ParseError(name + ": header must be f0,...,f{D-1},label", 1);
  for (int f = 0; f < dim; ++f)
    if (header[f] != "f" + std::to_string(f))
      throw ParseError(name + ": unexpected header column '" +
                           std::string(header[f]) + "'",
                       1);
  if (expected_dim > 0 && dim != expected_dim)
    throw ParseError(name + ": " + std::to_string(dim) +
                         " feature columns, manifest says " +
                         std::to_string(expected_dim),
                     1);
  Shard s;
  s.input_dim = dim;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto toks = split_commas(line);
    if (static_cast<int>(toks.size()) != dim + 1)
      throw ParseError(name + ": expected " + std::to_string(dim + 1) +
                           " fields, got " + std::to_string(toks.size()),
                       lineno);
    for (int f = 0; f < dim; ++f)
      s.features.push_back(parse_number<double>(toks[f], name, lineno));
    s.labels.push_back(parse_number<int>(toks[dim], name, lineno));
  }
  return s;
}

}  // namespace

void save_shards(const FederatedDataset& data, const fs::path& dir) {
  fs::create_directories(dir);
  nlohmann::json m;
  m["num_classes"] = data.num_classes;
  m["input_dim"] = data.input_dim();
  m["test"] = "test.csv";
  m["devices"] = nlohmann::json::array();
  for (int i = 0; i < data.num_devices(); ++i) {
    const std::string file = "device_" + std::to_string(i) + ".csv";
    write_csv(data.shards[i], dir / file);
    m["devices"].push_back(
        {{"id", i}, {"file", file}, {"classes", data.class_map[i]}});
  }
  write_csv(data.test, dir / "test.csv");
  if (!data.centroids.empty()) m["centroids"] = data.centroids;
  std::ofstream out(dir / "manifest.json");
  out << m.dump(2) << '\n';
}

FederatedDataset load_shards(const fs::path& path) {
  const fs::path manifest =
      fs::is_directory(path) ? path / "manifest.json" : path;
  const fs::path dir = manifest.parent_path();
  std::ifstream in(manifest);
  if (!in) throw ParseError("cannot open " + manifest.string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(manifest.filename().string() + ": " + e.what());
  }

  FederatedDataset out;
  try {
    out.num_classes = m.at("num_classes").get<int>();
    const int dim = m.value("input_dim", 0);
    const auto& devices = m.at("devices");
    if (!devices.is_array() || devices.empty())
      throw ValidationError("at least one device required");
    for (size_t k = 0; k < devices.size(); ++k) {
      const auto& dev = devices[k];
      if (dev.value("id", static_cast<int>(k)) != static_cast<int>(k))
        throw ValidationError("manifest devices must be listed in id order");
      out.shards.push_back(read_csv(dir / dev.at("file").get<std::string>(), dim));
      if (dev.contains("classes")) {
        out.class_map.push_back(dev["classes"].get<std::vector<int>>());
      } else {
        std::set<int> labels(out.shards.back().labels.begin(),
                             out.shards.back().labels.end());
        out.class_map.emplace_back(labels.begin(), labels.end());
      }
    }
    out.test = read_csv(dir / m.at("test").get<std::string>(), dim);
    if (m.contains("centroids"))
      out.centroids = m["centroids"].get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(manifest.filename().string() + ": " + e.what());
  }
  out.validate();
  return out;
}

}  // namespace hfl
