// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#include "replaygate/numcore/checkpoint.hpp"

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "replaygate/errors.hpp"

namespace replaygate::nc {
namespace {

using json = nlohmann::json;
namespace bai = boost::archive::iterators;
using ToBase64 = bai::base64_from_binary<bai::transform_width<std::string::const_iterator, 6, 8>>;
using FromBase64 = bai::transform_width<bai::binary_from_base64<std::string::const_iterator>, 8, 6>;

constexpr const char* kFormat = "replaygate-checkpoint-v1";

}  // namespace

std::string encode_f64(std::span<const double> values) {
  std::string bytes;
  bytes.reserve(values.size() * 8);
  for (double v : values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
  std::string out(ToBase64(bytes.begin()), ToBase64(bytes.end()));
  out.append((3 - bytes.size() % 3) % 3, '=');
  return out;
}

std::vector<double> decode_f64(const std::string& text) {
  std::string trimmed = text;
  std::size_t pad = 0;
  while (!trimmed.empty() && trimmed.back() == '=') {
    trimmed.pop_back();
    ++pad;
  }
  if (pad > 2 || (trimmed.size() + pad) % 4 != 0) {
    throw ParseError("base64 payload has invalid length", 0);
  }
  std::string bytes;
  try {
    bytes.assign(FromBase64(trimmed.begin()), FromBase64(trimmed.end()));
  } catch (const std::exception&) {
    throw ParseError("invalid base64 character", 0);
  }
  if (bytes.size() > trimmed.size() * 6 / 8) bytes.resize(trimmed.size() * 6 / 8);
  if (bytes.size() % 8 != 0) throw ParseError("base64 payload is not a whole number of f64", 0);
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[8 * k + i])) << (8 * i);
    }
    std::memcpy(&out[k], &bits, sizeof bits);
  }
  return out;
}

std::string checkpoint_to_string(const ParamStore& params, const CheckpointMeta& meta) {
  json doc;
  doc["format"] = kFormat;
  doc["metadata"] = {{"seed", meta.seed},
                     {"config_hash", meta.config_hash},
                     {"phase", meta.phase},
                     {"step", meta.step}};
  json ps = json::object();
  for (const Param* p : params.all()) {
    ps[p->name] = {{"shape", p->value.shape().dims()},
                   {"data", encode_f64(p->value.values())},
                   {"frozen", p->frozen}};
  }
  doc["params"] = std::move(ps);
  return doc.dump(1);
}

CheckpointMeta checkpoint_from_string(const std::string& text, ParamStore& params) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("checkpoint is not valid JSON: ") + e.what(), e.byte);
  }
  try {
    if (doc.at("format").get<std::string>() != kFormat) {
      throw ParseError("unsupported checkpoint format", 0);
    }
    CheckpointMeta meta;
    const json& m = doc.at("metadata");
    meta.seed = m.at("seed").get<std::uint64_t>();
    meta.config_hash = m.at("config_hash").get<std::string>();
    meta.phase = m.at("phase").get<std::string>();
    meta.step = m.at("step").get<std::uint64_t>();
    for (const auto& [name, entry] : doc.at("params").items()) {
      const auto dims = entry.at("shape").get<std::vector<std::size_t>>();
      Tensor value(Shape(std::span<const std::size_t>(dims)),
                   decode_f64(entry.at("data").get<std::string>()));
      const bool frozen = entry.at("frozen").get<bool>();
      if (params.contains(name)) {
        Param& p = params.at(name);
        if (!(p.value.shape() == value.shape())) {
          throw ParseError("parameter " + name + " has shape " + value.shape().str() +
                               ", expected " + p.value.shape().str(),
                           0);
        }
        p.value = std::move(value);
        p.frozen = frozen;
        p.grad = Tensor(p.value.shape());
        p.adam_m = Tensor(p.value.shape());
        p.adam_v = Tensor(p.value.shape());
      } else {
        params.add(name, std::move(value), frozen);
      }
    }
    return meta;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what(), 0);
  } catch (const DimensionError& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what(), 0);
  }
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params,
                     const CheckpointMeta& meta) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << checkpoint_to_string(params, meta);
}

CheckpointMeta load_checkpoint(const std::filesystem::path& path, ParamStore& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StageOrderError("checkpoint not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_string(ss.str(), params);
}

}  // namespace replaygate::nc
