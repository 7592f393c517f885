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

#include "locat/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include "locat/errors.hpp"

namespace locat {
namespace {

constexpr char kMagic[4] = {'L', 'C', 'A', 'T'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  void need(std::size_t n, const std::string& field) const {
    if (in_.size() - pos_ < n) {
      throw FormatError("checkpoint truncated while reading " + field + " at byte " +
                        std::to_string(pos_));
    }
  }
  std::uint32_t u32(const std::string& field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const std::string& field) {
    need(8, field);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64(const std::string& field) { return std::bit_cast<double>(u64(field)); }
  std::string str(const std::string& field) {
    const std::uint32_t n = u32(field + " length");
    need(n, field);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::span<const std::uint8_t> raw(std::size_t n, const std::string& field) {
    need(n, field);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const CheckpointData& data) {
  std::set<std::string> names;
  for (const auto& t : data.tensors) {
    if (!names.insert(t.name).second) {
      throw FormatError("checkpoint: duplicate tensor name '" + t.name + "'");
    }
  }
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.str(data.config_text);
  w.u32(static_cast<std::uint32_t>(data.tensors.size()));
  for (const auto& t : data.tensors) {
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.value.rank()));
    for (auto d : t.value.shape()) w.u64(d);
    for (double v : t.value.data()) w.f64(v);
  }
  return w.take();
}

CheckpointData decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.raw(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kMagic)) {
    throw FormatError("checkpoint: bad magic (expected \"LCAT\")");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  CheckpointData data;
  data.config_text = r.str("config");
  const std::uint32_t count = r.u32("tensor count");
  std::set<std::string> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string label = "tensor #" + std::to_string(i);
    NamedTensor t;
    t.name = r.str(label + " name");
    if (!names.insert(t.name).second) {
      throw FormatError("checkpoint: duplicate tensor name '" + t.name + "'");
    }
    const std::string field = "tensor '" + t.name + "'";
    const std::uint32_t rank = r.u32(field + " rank");
    if (rank == 0 || rank > 8) {
      throw FormatError("checkpoint: " + field + " has unsupported rank " + std::to_string(rank));
    }
    Shape shape(rank);
    std::uint64_t total = 1;
    for (auto& d : shape) {
      const std::uint64_t v = r.u64(field + " dims");
      if (v == 0 || v > (std::uint64_t{1} << 32)) {
        throw FormatError("checkpoint: " + field + " has invalid dimension " + std::to_string(v));
      }
      total *= v;
      if (total > (std::uint64_t{1} << 36)) throw FormatError("checkpoint: " + field + " is too large");
      d = static_cast<std::size_t>(v);
    }
    r.need(static_cast<std::size_t>(total) * 8, field + " data");
    std::vector<double> values(static_cast<std::size_t>(total));
    for (auto& v : values) v = r.f64(field + " data");
    t.value = Tensor(std::move(shape), std::move(values));
    data.tensors.push_back(std::move(t));
  }
  if (!r.done()) {
    throw FormatError("checkpoint: trailing bytes after tensor table at byte " +
                      std::to_string(r.pos()));
  }
  return data;
}

void write_checkpoint_file(const std::filesystem::path& path, const CheckpointData& data) {
  const auto bytes = encode_checkpoint(data);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing " + path.string());
}

CheckpointData read_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg,
                     const ModelParams& params) {
  validate_params(cfg, params);
  CheckpointData data;
  data.config_text = format_key_values(cfg.to_key_values());
  params.for_each([&data](const std::string& name, const Tensor& t) {
    data.tensors.push_back({name, t});
  });
  write_checkpoint_file(path, data);
}

std::pair<ModelConfig, ModelParams> load_checkpoint(const std::filesystem::path& path) {
  CheckpointData data = read_checkpoint_file(path);
  ModelConfig cfg;
  try {
    cfg = ModelConfig::from_key_values(parse_key_values(data.config_text));
  } catch (const Error& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  std::map<std::string, Tensor*> stored;
  for (auto& t : data.tensors) stored.emplace(t.name, &t.value);

  ModelParams params = init_params(cfg);
  std::size_t matched = 0;
  params.for_each([&](const std::string& name, Tensor& t) {
    auto it = stored.find(name);
    if (it == stored.end()) throw FormatError("checkpoint: missing tensor '" + name + "'");
    if (it->second->shape() != t.shape()) {
      throw FormatError("checkpoint: tensor '" + name + "' has shape " +
                        shape_string(it->second->shape()) + ", config implies " +
                        shape_string(t.shape()));
    }
    t = std::move(*it->second);
    ++matched;
  });
  if (matched != stored.size()) {
    for (const auto& [name, _] : stored) {
      bool known = false;
      params.for_each([&](const std::string& n, const Tensor&) { known = known || n == name; });
      if (!known) throw FormatError("checkpoint: unexpected tensor '" + name + "'");
    }
  }
  return {cfg, std::move(params)};
}

}  // namespace locat
