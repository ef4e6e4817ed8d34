// Copyright 2026 The fedsim Authors. All Rights Reserved.
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

#include "fedsim/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace fedsim {

namespace {

constexpr std::uint64_t kMagic = 0x46534d434b505431ULL;  // "FSMCKPT1"
constexpr std::uint32_t kVersion = 1;

void put_u64(std::string& out, std::uint64_t x) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}
void put_u32(std::string& out, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}
void put_f64(std::string& out, double x) { put_u64(out, std::bit_cast<std::uint64_t>(x)); }

class Reader {
 public:
  Reader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t x = 0;
    for (int i = 0; i < 8; ++i)
      x |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return x;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t x = 0;
    for (int i = 0; i < 4; ++i)
      x |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return x;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  void seek(std::size_t p) { pos_ = p; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw IoError("checkpoint: '" + path_ + "' is truncated");
  }
  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, const ParamTree& tensors,
                     std::uint64_t config_hash, Index round) {
  std::string head;
  std::string payload;
  for (const auto& [name, t] : tensors) {
    (void)name;
    payload.reserve(payload.size() + t.size() * 8);
  }

  put_u64(head, kMagic);
  put_u32(head, kVersion);
  put_u64(head, config_hash);
  put_u64(head, static_cast<std::uint64_t>(round));
  put_u64(head, tensors.size());
  for (const auto& [name, t] : tensors) {
    put_u32(head, static_cast<std::uint32_t>(name.size()));
    head += name;
    put_u32(head, static_cast<std::uint32_t>(t.shape.size()));
    for (Index d : t.shape) put_u64(head, static_cast<std::uint64_t>(d));
    put_u64(head, payload.size());  // byte offset into the payload
    for (Index i = 0; i < t.size(); ++i) put_f64(payload, t.data[i]);
  }
  put_u64(head, payload.size());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("checkpoint: cannot open '" + path + "' for writing");
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  out.flush();
  if (!out) throw IoError("checkpoint: write failed for '" + path + "'");
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open '" + path + "'");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(data), path);

  if (r.u64() != kMagic) throw IoError("checkpoint: '" + path + "' has a bad magic number");
  if (r.u32() != kVersion) throw IoError("checkpoint: '" + path + "' has an unknown version");
  CheckpointData ckpt;
  ckpt.config_hash = r.u64();
  ckpt.round = static_cast<Index>(r.u64());
  const std::uint64_t n = r.u64();

  struct Entry {
    std::string name;
    Shape shape;
    std::uint64_t offset;
  };
  std::vector<Entry> entries;
  entries.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    Entry e;
    e.name = r.bytes(r.u32());
    const std::uint32_t rank = r.u32();
    for (std::uint32_t d = 0; d < rank; ++d) e.shape.push_back(static_cast<Index>(r.u64()));
    e.offset = r.u64();
    entries.push_back(std::move(e));
  }
  const std::uint64_t payload_size = r.u64();
  const std::size_t payload_start = r.pos();

  for (const Entry& e : entries) {
    Tensor t = Tensor::zeros(e.shape);
    if (e.offset + 8 * t.size() > payload_size)
      throw IoError("checkpoint: tensor '" + e.name + "' escapes the payload");
    r.seek(payload_start + e.offset);
    for (Index i = 0; i < t.size(); ++i) t.data[i] = r.f64();
    ckpt.tensors.add(e.name, std::move(t));
  }
  return ckpt;
}

void check_checkpoint_shapes(const CheckpointData& ckpt, const ParamTree& expected) {
  for (const auto& [name, t] : expected) {
    if (!ckpt.tensors.contains(name))
      throw Error("checkpoint: missing tensor '" + name + "'");
    const Tensor& got = ckpt.tensors.at(name);
    if (got.shape != t.shape)
      throw Error("checkpoint: tensor '" + name + "' has shape " + shape_str(got.shape) +
                  ", expected " + shape_str(t.shape));
  }
}

}  // namespace fedsim
