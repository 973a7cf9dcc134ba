// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#include "masan/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace masan {

std::string to_string(FusionMode m) { return m == FusionMode::Attention ? "attention" : "addition"; }

std::string to_string(PipelineOrder o) {
  switch (o) {
    case PipelineOrder::RegionsFirst:
      return "regions_first";
    case PipelineOrder::FusionFirst:
      return "fusion_first";
    case PipelineOrder::FusionOnly:
      return "fusion_only";
  }
  return "?";
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string fmt_float(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

template <typename T>
std::string join(const T& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + std::to_string(xs[i]);
  return out;
}

long long parse_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto s = trim(v);
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty())
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  const auto s = trim(v);
  try {
    std::size_t used = 0;
    const double d = std::stod(s, &used);
    if (used != s.size()) throw ConfigError("");
    return d;
  } catch (...) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  const auto s = trim(v);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<int> parse_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) continue;
    out.push_back(static_cast<int>(parse_int(key, item)));
  }
  return out;
}

}  // namespace

void ExperimentConfig::validate() const {
  try {
    synthetic_spec().validate();
    grid.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
  if (channel_schedule.empty()) throw ConfigError("channel_schedule must not be empty");
  for (int c : channel_schedule)
    if (c < 1) throw ConfigError("channel widths must be positive");
  if (final_channels < 1 || target_extent < 1) throw ConfigError("final_channels and target_extent must be positive");
  for (int w : mlp_hidden)
    if (w < 1) throw ConfigError("mlp_hidden widths must be positive");
  if (num_classes != 2) throw ConfigError("only binary tasks are supported (num_classes = 2)");
  if (reduction_ratio < 1 || final_channels % reduction_ratio != 0)
    throw ConfigError("reduction_ratio must divide final_channels");
  if (lambda < 0 || alpha < 0 || beta < 0) throw ConfigError("lambda, alpha and beta must be non-negative");
  if (!(lr > 0)) throw ConfigError("lr must be > 0");
  if (!(adam_beta1 > 0 && adam_beta1 < 1 && adam_beta2 > 0 && adam_beta2 < 1)) throw ConfigError("adam betas must lie in (0, 1)");
  if (pretrain_steps < 0 || train_steps < 0) throw ConfigError("step counts must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

SyntheticSpec ExperimentConfig::synthetic_spec() const {
  SyntheticSpec s;
  s.seed = seed;
  s.n_per_class = n_per_class;
  s.extents = extents;
  s.frames = frames;
  s.grid = grid;
  s.signal_patches = signal_patches;
  s.signal_strength = signal_strength;
  s.noise_sigma = noise_sigma;
  return s;
}

ModelConfig ExperimentConfig::model_config() const {
  ModelConfig m;
  m.extents = extents;
  m.frames = frames;
  m.grid = grid;
  m.encoder.channel_schedule = channel_schedule;
  m.encoder.final_channels = final_channels;
  m.encoder.target_extent = target_extent;
  m.encoder.num_downsamples = static_cast<int>(channel_schedule.size()) - 1;
  m.mlp.hidden = mlp_hidden;
  m.mlp.num_classes = num_classes;
  m.loss = {lambda, alpha, beta};
  m.fusion_mode = fusion_mode;
  m.pipeline_order = pipeline_order;
  m.share_patch_params = share_patch_params;
  m.scaled_attention = scaled_attention;
  m.reduction_ratio = reduction_ratio;
  return m;
}

std::map<std::string, std::string> ExperimentConfig::to_kv() const {
  std::map<std::string, std::string> kv;
  kv["seed"] = std::to_string(seed);
  kv["n_per_class"] = std::to_string(n_per_class);
  kv["extents"] = join(extents);
  kv["frames"] = std::to_string(frames);
  kv["grid"] = join(grid.grid);
  kv["signal_patches"] = join(signal_patches);
  kv["signal_strength"] = fmt_float(signal_strength);
  kv["noise_sigma"] = fmt_float(noise_sigma);
  kv["train_fraction"] = fmt_float(train_fraction);
  kv["channel_schedule"] = join(channel_schedule);
  kv["final_channels"] = std::to_string(final_channels);
  kv["target_extent"] = std::to_string(target_extent);
  kv["mlp_hidden"] = join(mlp_hidden);
  kv["num_classes"] = std::to_string(num_classes);
  kv["fusion_mode"] = to_string(fusion_mode);
  kv["pipeline_order"] = to_string(pipeline_order);
  kv["share_patch_params"] = share_patch_params ? "true" : "false";
  kv["scaled_attention"] = scaled_attention ? "true" : "false";
  kv["reduction_ratio"] = std::to_string(reduction_ratio);
  kv["lambda"] = fmt_float(lambda);
  kv["alpha"] = fmt_float(alpha);
  kv["beta"] = fmt_float(beta);
  kv["lr"] = fmt_float(lr);
  kv["adam_beta1"] = fmt_float(adam_beta1);
  kv["adam_beta2"] = fmt_float(adam_beta2);
  kv["adam_eps"] = fmt_float(adam_eps);
  kv["pretrain_steps"] = std::to_string(pretrain_steps);
  kv["train_steps"] = std::to_string(train_steps);
  kv["batch_size"] = std::to_string(batch_size);
  return kv;
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : to_kv()) out += k + "=" + v + "\n";
  return out;
}

std::string ExperimentConfig::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : to_text()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void ExperimentConfig::apply(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  auto triple = [&](const std::string& k) {
    const auto xs = parse_list(k, v);
    if (xs.size() != 3) throw ConfigError("config key '" + k + "': expected three comma-separated integers");
    return xs;
  };
  if (key == "seed") {
    const auto s = parse_int(key, v);
    if (s < 0) throw ConfigError("seed must be non-negative");
    seed = static_cast<std::uint64_t>(s);
  } else if (key == "n_per_class")
    n_per_class = static_cast<int>(parse_int(key, v));
  else if (key == "extents") {
    const auto xs = triple(key);
    extents = {xs[0], xs[1], xs[2]};
  } else if (key == "frames")
    frames = static_cast<int>(parse_int(key, v));
  else if (key == "grid") {
    const auto xs = triple(key);
    grid.grid = {xs[0], xs[1], xs[2]};
  } else if (key == "signal_patches")
    signal_patches = parse_list(key, v);
  else if (key == "signal_strength")
    signal_strength = static_cast<float>(parse_double(key, v));
  else if (key == "noise_sigma")
    noise_sigma = static_cast<float>(parse_double(key, v));
  else if (key == "train_fraction")
    train_fraction = parse_double(key, v);
  else if (key == "channel_schedule")
    channel_schedule = parse_list(key, v);
  else if (key == "final_channels")
    final_channels = static_cast<int>(parse_int(key, v));
  else if (key == "target_extent")
    target_extent = static_cast<int>(parse_int(key, v));
  else if (key == "mlp_hidden")
    mlp_hidden = parse_list(key, v);
  else if (key == "num_classes")
    num_classes = static_cast<int>(parse_int(key, v));
  else if (key == "fusion_mode") {
    if (v == "attention")
      fusion_mode = FusionMode::Attention;
    else if (v == "addition")
      fusion_mode = FusionMode::Addition;
    else
      throw ConfigError("fusion_mode must be 'attention' or 'addition', got '" + v + "'");
  } else if (key == "pipeline_order") {
    if (v == "regions_first")
      pipeline_order = PipelineOrder::RegionsFirst;
    else if (v == "fusion_first")
      pipeline_order = PipelineOrder::FusionFirst;
    else if (v == "fusion_only")
      pipeline_order = PipelineOrder::FusionOnly;
    else
      throw ConfigError("pipeline_order must be regions_first, fusion_first or fusion_only");
  } else if (key == "share_patch_params")
    share_patch_params = parse_bool(key, v);
  else if (key == "scaled_attention")
    scaled_attention = parse_bool(key, v);
  else if (key == "reduction_ratio")
    reduction_ratio = static_cast<int>(parse_int(key, v));
  else if (key == "lambda")
    lambda = static_cast<float>(parse_double(key, v));
  else if (key == "alpha")
    alpha = static_cast<float>(parse_double(key, v));
  else if (key == "beta")
    beta = static_cast<float>(parse_double(key, v));
  else if (key == "lr")
    lr = static_cast<float>(parse_double(key, v));
  else if (key == "adam_beta1")
    adam_beta1 = static_cast<float>(parse_double(key, v));
  else if (key == "adam_beta2")
    adam_beta2 = static_cast<float>(parse_double(key, v));
  else if (key == "adam_eps")
    adam_eps = static_cast<float>(parse_double(key, v));
  else if (key == "pretrain_steps")
    pretrain_steps = static_cast<int>(parse_int(key, v));
  else if (key == "train_steps")
    train_steps = static_cast<int>(parse_int(key, v));
  else if (key == "batch_size")
    batch_size = static_cast<int>(parse_int(key, v));
  else
    throw ConfigError("unknown config key '" + key + "'");
}

void ExperimentConfig::apply(const std::map<std::string, std::string>& kv) {
  for (const auto& [k, v] : kv) apply(k, v);
}

std::map<std::string, std::string> parse_kv_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::map<std::string, std::string> read_kv_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_kv_text(ss.str());
}

ExperimentConfig config_from_text(const std::string& text) {
  ExperimentConfig c;
  c.apply(parse_kv_text(text));
  c.validate();
  return c;
}

std::vector<std::string> differing_keys(const ExperimentConfig& a, const ExperimentConfig& b) {
  const auto ka = a.to_kv(), kb = b.to_kv();
  std::vector<std::string> out;
  for (const auto& [k, v] : ka)
    if (kb.at(k) != v) out.push_back(k);
  return out;
}

}  // namespace masan
