// Copyright 2026 The polystack Authors.
//
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

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "polystack/error.hpp"
#include "polystack/network_builder.hpp"

namespace polystack {

namespace {

constexpr char kMagic[4] = {'P', 'N', 'C', 'K'};
constexpr std::uint64_t kMaxManifest = 1 << 24;

void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  if (!in) throw ValidationError("truncated checkpoint");
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in, std::uint64_t limit = 4096) {
  const std::uint64_t n = read_u64(in);
  if (n > limit) throw ValidationError("checkpoint string too long");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw ValidationError("truncated checkpoint");
  return s;
}

nlohmann::json manifest(const Model& model) {
  const ModelMeta& m = model.meta;
  nlohmann::json widths = nlohmann::json::array();
  nlohmann::json resolutions = nlohmann::json::array();
  for (const auto& s : m.config.stages) {
    widths.push_back(s.width);
    resolutions.push_back(s.resolution);
  }
  return {
      {"format", "polystack-checkpoint"},
      {"version", 1},
      {"network", render_network(m.config)},
      {"widths", widths},
      {"resolutions", resolutions},
      {"input_size", m.config.input_size},
      {"classes", m.config.classes},
      {"arch", m.arch.describe()},
      {"beta", m.beta},
      {"seed", m.seed},
      {"iteration", m.iteration},
      {"form", m.form == ModuleForm::Cascaded ? "cascaded" : "naive"},
      {"precision", std::string(to_string(m.precision))},
      {"headless", m.headless},
      {"spatial", m.spatial},
  };
}

Model rebuild(const nlohmann::json& j) {
  if (j.value("format", "") != "polystack-checkpoint") throw ValidationError("not a polystack checkpoint");
  if (j.value("version", 0) != 1) throw ValidationError("unsupported checkpoint version");
  NetworkConfig config = parse_network(j.at("network").get<std::string>());
  const auto widths = j.at("widths").get<std::vector<std::int64_t>>();
  if (widths.size() != config.stages.size()) throw ValidationError("checkpoint widths do not match stages");
  for (std::size_t i = 0; i < widths.size(); ++i) config.stages[i].width = widths[i];
  if (j.contains("resolutions")) {
    const auto tags = j.at("resolutions").get<std::vector<std::string>>();
    if (tags.size() != config.stages.size()) throw ValidationError("checkpoint resolutions do not match stages");
    for (std::size_t i = 0; i < tags.size(); ++i) config.stages[i].resolution = tags[i];
  }
  config.input_size = j.at("input_size").get<std::int64_t>();
  config.classes = j.at("classes").get<std::int64_t>();
  LowerOptions opts;
  opts.form = j.at("form").get<std::string>() == "naive" ? ModuleForm::Naive : ModuleForm::Cascaded;
  opts.precision = parse_precision(j.at("precision").get<std::string>());
  opts.spatial = j.value("spatial", std::int64_t{4});
  const BlockArch arch = BlockArch::parse(j.at("arch").get<std::string>());
  const double beta = j.at("beta").get<double>();
  const auto seed = j.at("seed").get<std::uint64_t>();
  Model model = j.value("headless", false)
                    ? lower_module(config.stages.front().modules.front(), arch, beta, seed, opts)
                    : lower(config, arch, beta, seed, opts);
  model.meta.iteration = j.at("iteration").get<std::int64_t>();
  return model;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.write(kMagic, 4);
  write_string(out, manifest(model).dump());
  std::uint64_t count = 0;
  model.params.for_each([&](const std::string&, const std::string&, const ParamEntry&) { ++count; });
  write_u64(out, count);
  model.params.for_each([&](const std::string& key, const std::string& name, const ParamEntry& e) {
    write_string(out, key);
    write_string(out, name);
    const char flag = e.trainable ? 1 : 0;
    out.write(&flag, 1);
    e.value.write(out);
  });
  if (!out) throw Error("failed writing checkpoint '" + path + "'");
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint '" + path + "'");
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw ValidationError("'" + path + "' is not a checkpoint");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_string(in, kMaxManifest));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad checkpoint manifest: ") + e.what());
  }
  Model model;
  try {
    model = rebuild(j);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad checkpoint manifest: ") + e.what());
  }
  std::uint64_t expected = 0;
  model.params.for_each([&](const std::string&, const std::string&, const ParamEntry&) { ++expected; });
  const std::uint64_t count = read_u64(in);
  if (count != expected) {
    throw ValidationError("checkpoint has " + std::to_string(count) + " tensors, model needs " +
                          std::to_string(expected));
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string key = read_string(in);
    const std::string name = read_string(in);
    char flag = 0;
    in.read(&flag, 1);
    Tensor t = Tensor::read(in);
    const ParamEntry* slot = model.params.find(key, name);
    if (!slot) throw ValidationError("checkpoint tensor '" + key + ":" + name + "' is not in the model");
    if (slot->value.shape() != t.shape() || slot->trainable != (flag != 0)) {
      throw ValidationError("checkpoint tensor '" + key + ":" + name + "' does not match the model");
    }
    model.params.set(key, name, t.cast(model.meta.precision), flag != 0);
  }
  return model;
}

}  // namespace polystack
