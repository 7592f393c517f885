// Copyright 2026 The LocAt Authors. All Rights Reserved.
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

#include "locat/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "locat/errors.hpp"

namespace locat {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string bad_value(std::string_view key, std::string_view value, const char* expected) {
  return "config key '" + std::string(key) + "': expected " + expected + ", got '" +
         std::string(value) + "'";
}

}  // namespace

KeyValues parse_key_values(std::string_view text) {
  KeyValues out;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw FormatError("line " + std::to_string(line_no) + ": expected 'key = value', got '" +
                        std::string(line) + "'");
    }
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw FormatError("line " + std::to_string(line_no) + ": empty key");
    if (!seen.insert(key).second) {
      throw FormatError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

std::size_t parse_size(std::string_view key, std::string_view value) {
  return static_cast<std::size_t>(parse_u64(key, value));
}

std::uint64_t parse_u64(std::string_view key, std::string_view value) {
  const std::string s(value);
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError(bad_value(key, value, "a non-negative integer"));
  }
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    throw ConfigError(bad_value(key, value, "a non-negative integer"));
  }
}

double parse_double(std::string_view key, std::string_view value) {
  const std::string s(value);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size() || !std::isfinite(v)) {
    throw ConfigError(bad_value(key, value, "a finite number"));
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "on" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "off" || value == "0" || value == "no") return false;
  throw ConfigError(bad_value(key, value, "a boolean"));
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t ModelConfig::mlp_hidden() const noexcept {
  return static_cast<std::size_t>(std::llround(static_cast<double>(embed_dim) * mlp_ratio));
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (patch_size == 0 || image_size == 0) fail("image_size and patch_size must be positive");
  if (image_size % patch_size != 0) {
    fail("image_size " + std::to_string(image_size) + " is not divisible by patch_size " +
         std::to_string(patch_size));
  }
  if (channels == 0) fail("channels must be positive");
  if (embed_dim == 0 || heads == 0) fail("embed_dim and heads must be positive");
  if (embed_dim % heads != 0) {
    fail("embed_dim " + std::to_string(embed_dim) + " is not divisible by heads " +
         std::to_string(heads));
  }
  if (depth == 0) fail("depth must be positive");
  if (num_classes < 2) fail("num_classes must be at least 2");
  if (!(mlp_ratio > 0.0) || mlp_hidden() == 0) fail("mlp_ratio must be positive");
  if (pooling.type == prr::PoolingKind::Type::Prr && embed_dim % prr_heads() != 0) {
    fail("prr_heads " + std::to_string(prr_heads()) + " does not divide embed_dim " +
         std::to_string(embed_dim));
  }
  if (kernel.type == gaug::KernelKind::Type::FixedWidth && !(kernel.fixed_sigma > 0.0)) {
    fail("fixed kernel width must be positive");
  }
  if (!(stochastic_depth_rate >= 0.0 && stochastic_depth_rate < 1.0)) {
    fail("stochastic_depth must lie in [0, 1)");
  }
}

bool ModelConfig::apply(std::string_view key, std::string_view value) {
  if (key == "image_size") {
    image_size = parse_size(key, value);
  } else if (key == "patch_size") {
    patch_size = parse_size(key, value);
  } else if (key == "channels") {
    channels = parse_size(key, value);
  } else if (key == "embed_dim") {
    embed_dim = parse_size(key, value);
  } else if (key == "depth") {
    depth = parse_size(key, value);
  } else if (key == "heads") {
    heads = parse_size(key, value);
  } else if (key == "mlp_ratio") {
    mlp_ratio = parse_double(key, value);
  } else if (key == "num_classes") {
    num_classes = parse_size(key, value);
  } else if (key == "pooling") {
    const std::size_t keep = pooling.heads;
    pooling = prr::parse_pooling(value);
    pooling.heads = keep;
  } else if (key == "prr_heads") {
    pooling.heads = parse_size(key, value);
  } else if (key == "locat") {
    locat_enabled = parse_bool(key, value);
  } else if (key == "kernel") {
    kernel = gaug::parse_kernel(value);
  } else if (key == "scaling") {
    scaling = gaug::parse_scaling(value);
  } else if (key == "sigma_source") {
    sigma_source = gaug::parse_sigma_source(value);
  } else if (key == "pos_embed") {
    use_pos_embed = parse_bool(key, value);
  } else if (key == "final_norm") {
    final_norm = parse_bool(key, value);
  } else if (key == "seed") {
    seed = parse_u64(key, value);
  } else if (key == "stochastic_depth") {
    stochastic_depth_rate = parse_double(key, value);
  } else {
    return false;
  }
  return true;
}

KeyValues ModelConfig::to_key_values() const {
  return {
      {"image_size", std::to_string(image_size)},
      {"patch_size", std::to_string(patch_size)},
      {"channels", std::to_string(channels)},
      {"embed_dim", std::to_string(embed_dim)},
      {"depth", std::to_string(depth)},
      {"heads", std::to_string(heads)},
      {"mlp_ratio", format_double(mlp_ratio)},
      {"num_classes", std::to_string(num_classes)},
      {"pooling", prr::to_string(pooling)},
      {"prr_heads", std::to_string(pooling.heads)},
      {"locat", locat_enabled ? "on" : "off"},
      {"kernel", gaug::to_string(kernel)},
      {"scaling", gaug::to_string(scaling)},
      {"sigma_source", gaug::to_string(sigma_source)},
      {"pos_embed", use_pos_embed ? "true" : "false"},
      {"final_norm", final_norm ? "true" : "false"},
      {"seed", std::to_string(seed)},
      {"stochastic_depth", format_double(stochastic_depth_rate)},
  };
}

ModelConfig ModelConfig::from_key_values(const KeyValues& kv) {
  ModelConfig cfg;
  for (const auto& [k, v] : kv) {
    if (!cfg.apply(k, v)) throw ConfigError("unknown config key '" + k + "'");
  }
  cfg.validate();
  return cfg;
}

ModelConfig ModelConfig::vanilla() const {
  ModelConfig v = *this;
  v.locat_enabled = false;
  v.pooling = prr::PoolingKind::cls_only();
  return v;
}

ModelConfig desk_config() { return ModelConfig{}; }

ModelConfig gradcheck_config() {
  ModelConfig cfg;
  cfg.image_size = 6;
  cfg.patch_size = 2;
  cfg.channels = 1;
  cfg.embed_dim = 16;
  cfg.depth = 2;
  cfg.heads = 2;
  cfg.mlp_ratio = 2.0;
  cfg.num_classes = 3;
  return cfg;
}

}  // namespace locat
