// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#include "masan/autoencoder.hpp"

#include <stdexcept>

#include "masan/ops.hpp"

namespace masan {

void EncoderConfig::validate() const {
  if (input_channels < 1) throw std::invalid_argument("encoder input_channels must be >= 1");
  if (num_downsamples < 1) throw std::invalid_argument("encoder num_downsamples must be >= 1");
  if (static_cast<int>(channel_schedule.size()) != num_downsamples + 1)
    throw std::invalid_argument("channel_schedule length must equal num_downsamples + 1");
  for (int c : channel_schedule)
    if (c < 1) throw std::invalid_argument("channel widths must be >= 1");
  if (final_channels < 1 || target_extent < 1) throw std::invalid_argument("final_channels and target_extent must be >= 1");
}

EncoderConfig EncoderConfig::fitted_to(const Extents3& patch) const {
  EncoderConfig c = *this;
  int depth = -1;
  for (int i = 0; i < 3; ++i) {
    std::int64_t e = patch[i];
    int d = 0;
    while (e > target_extent && e % 2 == 0) {
      e /= 2;
      ++d;
    }
    if (e != target_extent)
      throw std::invalid_argument("patch extent " + std::to_string(patch[i]) + " cannot be halved down to " +
                                  std::to_string(target_extent));
    if (depth >= 0 && d != depth) throw std::invalid_argument("patch extents need different encoder depths");
    depth = d;
  }
  if (depth < 1) throw std::invalid_argument("patch is already at the target extent; no downsampling possible");
  c.num_downsamples = depth;
  c.channel_schedule.resize(static_cast<std::size_t>(depth) + 1, channel_schedule.back());
  return c;
}

Tensor PatchAutoencoder::Conv::operator()(const Tensor& x) const { return conv3d(x, w, b, stride, padding); }

Tensor PatchAutoencoder::Norm::operator()(const Tensor& x) const {
  return group_norm(x, default_group_count(x.dim(1)), gamma, beta);
}

Tensor PatchAutoencoder::Block::operator()(const Tensor& x) const {
  Tensor y = conv0(relu(gn0(x)));
  y = conv1(relu(gn1(y)));
  return add(y, has_proj ? proj(x) : x);
}

PatchAutoencoder::Conv PatchAutoencoder::make_conv(const std::string& name, int in, int out, int k, int stride,
                                                   ParameterStore& store, Rng& rng) {
  Conv c;
  c.w = store.uniform(name + ".w", Shape{out, in, k, k, k}, std::int64_t{in} * k * k * k, rng);
  c.b = store.constant(name + ".b", Shape{out}, 0.0f);
  c.stride = stride;
  c.padding = k / 2;
  return c;
}

PatchAutoencoder::Norm PatchAutoencoder::make_norm(const std::string& name, int channels, ParameterStore& store) {
  return {store.constant(name + ".gamma", Shape{channels}, 1.0f), store.constant(name + ".beta", Shape{channels}, 0.0f)};
}

PatchAutoencoder::Block PatchAutoencoder::make_block(const std::string& name, int in, int out, ParameterStore& store,
                                                     Rng& rng) {
  Block b;
  b.gn0 = make_norm(name + ".gn0", in, store);
  b.conv0 = make_conv(name + ".conv0", in, out, 3, 1, store, rng);
  b.gn1 = make_norm(name + ".gn1", out, store);
  b.conv1 = make_conv(name + ".conv1", out, out, 3, 1, store, rng);
  if (in != out) {
    b.has_proj = true;
    b.proj = make_conv(name + ".proj", in, out, 1, 1, store, rng);
  }
  return b;
}

PatchAutoencoder::PatchAutoencoder(const std::string& prefix, const EncoderConfig& cfg, ParameterStore& store,
                                   Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  const auto& ch = cfg_.channel_schedule;
  const int nd = cfg_.num_downsamples;
  init_ = make_conv(prefix + ".init", cfg_.input_channels, ch[0], 3, 1, store, rng);
  for (int s = 1; s <= nd; ++s) {
    const std::string stage = prefix + ".enc" + std::to_string(s);
    down_.push_back(make_conv(stage + ".down", ch[s - 1], ch[s], 3, 2, store, rng));
    const int out = s == nd ? cfg_.final_channels : ch[s];
    enc_blocks_.push_back(make_block(stage + ".block", ch[s], out, store, rng));
  }
  dec_reduce_.resize(static_cast<std::size_t>(nd));
  dec_blocks_.resize(static_cast<std::size_t>(nd));
  int width = cfg_.final_channels;
  for (int j = nd; j >= 1; --j) {
    const std::string stage = prefix + ".dec" + std::to_string(j);
    const int skip = j >= 2 ? ch[j - 1] : 0;
    dec_reduce_[j - 1] = make_conv(stage + ".reduce", width + skip, ch[j - 1], 3, 1, store, rng);
    dec_blocks_[j - 1] = make_block(stage + ".block", ch[j - 1], ch[j - 1], store, rng);
    width = ch[j - 1];
  }
  out_ = make_conv(prefix + ".out", ch[0], cfg_.input_channels, 3, 1, store, rng);
}

Embedding PatchAutoencoder::encode(const Tensor& x) const {
  if (x.ndim() != 5 || x.dim(1) != cfg_.input_channels)
    throw std::invalid_argument("encode: expected [N," + std::to_string(cfg_.input_channels) + ",D,H,W], got " +
                                shape_str(x.shape()));
  const std::int64_t f = std::int64_t{1} << cfg_.num_downsamples;
  for (std::size_t d = 2; d < 5; ++d)
    if (x.dim(d) % f != 0)
      throw std::invalid_argument("encode: extents " + shape_str(x.shape()) + " are not reducible by " +
                                  std::to_string(cfg_.num_downsamples) + " stride-2 stages");
  Embedding e;
  e.input_shape = x.shape();
  Tensor y = init_(x);
  for (std::size_t s = 0; s < down_.size(); ++s) {
    y = enc_blocks_[s](down_[s](y));
    e.skips.push_back(y);
  }
  e.h = y;
  return e;
}

Tensor PatchAutoencoder::decode(const Embedding& e) const {
  const int nd = cfg_.num_downsamples;
  if (static_cast<int>(e.skips.size()) != nd)
    throw std::invalid_argument("decode: embedding has " + std::to_string(e.skips.size()) + " skips for " +
                                std::to_string(nd) + " decoder stages");
  Tensor y = e.h;
  for (int j = nd; j >= 1; --j) {
    y = upsample_trilinear2x(y);
    if (j >= 2) {
      const Tensor& skip = e.skips[static_cast<std::size_t>(j - 2)];
      if (skip.dim(2) != y.dim(2)) throw std::invalid_argument("decode: skip/stage resolution mismatch");
      y = concat({y, skip}, 1);
    }
    y = dec_blocks_[j - 1](dec_reduce_[j - 1](y));
  }
  return out_(y);
}

Embedding spm_encode(const Tensor& patch, const PatchAutoencoder& net) {
  if (patch.ndim() == 4) {
    Shape s = patch.shape();
    s.insert(s.begin(), 1);
    Embedding e = net.encode(reshape(patch, s));
    e.input_shape = patch.shape();
    return e;
  }
  return net.encode(patch);
}

Tensor spm_decode(const Embedding& e, const PatchAutoencoder& net) {
  Tensor y = net.decode(e);
  return e.input_shape.size() == 4 ? reshape(y, e.input_shape) : y;
}

Embedding fpm_encode(const Tensor& series_patch, const PatchAutoencoder& net) {
  const Shape& s = series_patch.shape();
  Shape folded;
  if (s.size() == 5)
    folded = {1, s[0] * s[1], s[2], s[3], s[4]};
  else if (s.size() == 6)
    folded = {s[0], s[1] * s[2], s[3], s[4], s[5]};
  else
    throw std::invalid_argument("fpm_encode: expected [T,C,D,H,W] or [N,T,C,D,H,W], got " + shape_str(s));
  Embedding e = net.encode(reshape(series_patch, folded));
  e.input_shape = s;
  return e;
}

Tensor fpm_decode(const Embedding& e, const PatchAutoencoder& net) {
  if (e.input_shape.size() != 5 && e.input_shape.size() != 6)
    throw std::invalid_argument("fpm_decode: embedding was not produced by fpm_encode");
  return reshape(net.decode(e), e.input_shape);
}

Tensor sparsity_penalty(const Tensor& h, float lambda) {
  if (lambda < 0.0f) throw std::invalid_argument("sparsity_penalty: lambda must be >= 0");
  return scale(sum(abs(h)), lambda);
}

Tensor modality_recon_loss(const Tensor& generated, const Tensor& original, const Tensor& h, const LossConfig& cfg) {
  if (generated.shape() != original.shape())
    throw std::invalid_argument("modality_recon_loss: shape mismatch " + shape_str(generated.shape()) + " vs " +
                                shape_str(original.shape()));
  const Tensor d = sub(generated, original);
  const float n = static_cast<float>(generated.dim(0));
  return add(scale(sum(mul(d, d)), 1.0f / n), sparsity_penalty(h, cfg.lambda));
}

}  // namespace masan
