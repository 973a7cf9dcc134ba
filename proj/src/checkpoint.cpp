// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#include "masan/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace masan {

namespace {

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>(v >> (8 * i)));
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void floats(std::span<const float> xs) {
    for (float f : xs) u32(std::bit_cast<std::uint32_t>(f));
  }
  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}
  std::uint64_t uint(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{static_cast<unsigned char>(bytes_[pos_ + i])} << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  std::uint64_t u64() { return uint(8); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void floats(std::span<float> out) {
    need(out.size() * 4);
    for (float& f : out) f = std::bit_cast<float>(u32());
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("checkpoint is truncated");
  }
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string Checkpoint::fingerprint() const { return config_of(*this).fingerprint(); }

Checkpoint make_checkpoint(const MasanModel& model, const ExperimentConfig& cfg, const AdamState& adam) {
  Checkpoint c;
  c.config_text = cfg.to_text();
  for (const auto& p : model.params().params()) c.params.push_back({p.name, p.value.detach()});
  c.adam = adam;
  return c;
}

void restore(MasanModel& model, const Checkpoint& ckpt) {
  auto& params = model.params();
  if (params.size() != ckpt.params.size())
    throw std::invalid_argument("checkpoint holds " + std::to_string(ckpt.params.size()) + " parameters, model has " +
                                std::to_string(params.size()));
  for (const auto& nt : ckpt.params) {
    Tensor dst = params.get(nt.name);
    if (dst.shape() != nt.value.shape())
      throw std::invalid_argument("checkpoint parameter '" + nt.name + "' has shape " + shape_str(nt.value.shape()) +
                                  ", model expects " + shape_str(dst.shape()));
    std::copy(nt.value.data().begin(), nt.value.data().end(), dst.data().begin());
  }
}

ExperimentConfig config_of(const Checkpoint& ckpt) { return config_from_text(ckpt.config_text); }

MasanModel model_from(const Checkpoint& ckpt) {
  const ExperimentConfig cfg = config_of(ckpt);
  MasanModel m(cfg.model_config(), cfg.seed);
  restore(m, ckpt);
  return m;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  Writer w;
  w.u32(0x314B434Du);  // "MCK1"
  w.str(ckpt.config_text);
  w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& p : ckpt.params) {
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.value.ndim()));
    for (auto e : p.value.shape()) w.u32(static_cast<std::uint32_t>(e));
  }
  const bool moments = !ckpt.adam.m.empty();
  w.u64(static_cast<std::uint64_t>(ckpt.adam.t));
  w.u32(moments ? 1 : 0);
  for (const auto& p : ckpt.params) w.floats(p.value.data());
  if (moments) {
    for (const auto& m : ckpt.adam.m) w.floats(m);
    for (const auto& v : ckpt.adam.v) w.floats(v);
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!os) throw std::runtime_error("write to '" + path.string() + "' failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  Reader r(std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>()));
  if (r.u32() != 0x314B434Du) throw std::runtime_error("'" + path.string() + "' is not a checkpoint (bad magic)");
  Checkpoint c;
  c.config_text = r.str();
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    NamedTensor nt;
    nt.name = r.str();
    const std::uint32_t nd = r.u32();
    Shape s;
    for (std::uint32_t d = 0; d < nd; ++d) s.push_back(r.u32());
    nt.value = Tensor(s);
    c.params.push_back(std::move(nt));
  }
  c.adam.t = static_cast<std::int64_t>(r.u64());
  const bool moments = r.u32() != 0;
  for (auto& p : c.params) r.floats(p.value.data());
  if (moments) {
    for (auto& p : c.params) {
      c.adam.m.emplace_back(p.value.numel());
      r.floats(c.adam.m.back());
    }
    for (auto& p : c.params) {
      c.adam.v.emplace_back(p.value.numel());
      r.floats(c.adam.v.back());
    }
  }
  if (!r.done()) throw std::runtime_error("'" + path.string() + "' has trailing bytes");
  return c;
}

}  // namespace masan
