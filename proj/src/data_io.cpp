// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#include "masan/data_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>

#include "masan/rng.hpp"

namespace masan {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Unit white noise through a fixed 3x3x3 box (zero padded), rescaled so an
// interior voxel has unit variance.
std::vector<float> smooth_field(Rng& rng, const Extents3& e) {
  const std::int64_t D = e[0], H = e[1], W = e[2];
  std::vector<float> white(static_cast<std::size_t>(D * H * W));
  for (float& v : white) v = rng.normal();
  std::vector<float> out(white.size(), 0.0f);
  const float gain = std::sqrt(27.0f) / 27.0f;
  for (std::int64_t z = 0; z < D; ++z)
    for (std::int64_t y = 0; y < H; ++y)
      for (std::int64_t x = 0; x < W; ++x) {
        float s = 0.0f;
        for (std::int64_t a = std::max<std::int64_t>(z - 1, 0); a <= std::min(z + 1, D - 1); ++a)
          for (std::int64_t b = std::max<std::int64_t>(y - 1, 0); b <= std::min(y + 1, H - 1); ++b)
            for (std::int64_t c = std::max<std::int64_t>(x - 1, 0); c <= std::min(x + 1, W - 1); ++c)
              s += white[(a * H + b) * W + c];
        out[(z * H + y) * W + x] = gain * s;
      }
  return out;
}

// Voxel mask of the signal cells in the unpadded volume.
std::vector<char> signal_mask(const SyntheticSpec& spec) {
  const Extents3& e = spec.extents;
  const Extents3 padded = padded_extents_for(e, spec.grid);
  const Extents3 cell{padded[0] / spec.grid.grid[0], padded[1] / spec.grid.grid[1], padded[2] / spec.grid.grid[2]};
  std::vector<char> mask(static_cast<std::size_t>(e[0] * e[1] * e[2]), 0);
  for (int k : spec.signal_patches) {
    const int gx = k % spec.grid.grid[2];
    const int gy = (k / spec.grid.grid[2]) % spec.grid.grid[1];
    const int gz = k / (spec.grid.grid[2] * spec.grid.grid[1]);
    for (std::int64_t z = gz * cell[0]; z < std::min((gz + 1) * cell[0], e[0]); ++z)
      for (std::int64_t y = gy * cell[1]; y < std::min((gy + 1) * cell[1], e[1]); ++y)
        for (std::int64_t x = gx * cell[2]; x < std::min((gx + 1) * cell[2], e[2]); ++x)
          mask[(z * e[1] + y) * e[2] + x] = 1;
  }
  return mask;
}

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[3]} << 24);
}

}  // namespace

void SyntheticSpec::validate() const {
  grid.validate();
  if (n_per_class < 1) throw std::invalid_argument("n_per_class must be >= 1");
  if (frames < 1) throw std::invalid_argument("frames must be >= 1");
  for (int i = 0; i < 3; ++i)
    if (extents[i] < grid.grid[i]) throw std::invalid_argument("volume extents smaller than grid");
  for (int k : signal_patches)
    if (k < 0 || k >= grid.cell_count())
      throw std::invalid_argument("signal patch " + std::to_string(k) + " outside the grid");
  if (!(signal_strength > 0.0f)) throw std::invalid_argument("signal_strength must be > 0");
  if (noise_sigma < 0.0f) throw std::invalid_argument("noise_sigma must be >= 0");
}

std::vector<SubjectSample> generate_synthetic_cohort(const SyntheticSpec& spec) {
  spec.validate();
  const Extents3& e = spec.extents;
  const std::int64_t vol = e[0] * e[1] * e[2];
  const auto mask = signal_mask(spec);
  const int n = 2 * spec.n_per_class;
  std::vector<SubjectSample> cohort;
  cohort.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng rng(splitmix64(spec.seed ^ splitmix64(static_cast<std::uint64_t>(i) + 1)));
    SubjectSample s;
    s.label = i % 2;
    char id[32];
    std::snprintf(id, sizeof id, "sub-%04d", i);
    s.subject_id = id;

    const float offset = 0.05f * rng.normal();
    const auto field = smooth_field(rng, e);
    s.t1 = Tensor(Shape{1, e[0], e[1], e[2]});
    for (std::int64_t v = 0; v < vol; ++v) {
      float x = 1.0f + offset + spec.noise_sigma * field[v];
      if (s.label == 1 && mask[v]) x -= spec.signal_strength;
      s.t1[v] = x;
    }

    const float phase = rng.uniform(0.0f, 6.2831853f);
    s.fmri = Tensor(Shape{spec.frames, 1, e[0], e[1], e[2]});
    for (int t = 0; t < spec.frames; ++t) {
      const auto frame_noise = smooth_field(rng, e);
      const float wave = 0.5f * std::sin(6.2831853f * static_cast<float>(t) / static_cast<float>(spec.frames) + phase);
      for (std::int64_t v = 0; v < vol; ++v) {
        const float amp = (s.label == 1 && mask[v]) ? 1.0f + spec.signal_strength : 1.0f;
        s.fmri[t * vol + v] = 1.0f + amp * wave + spec.noise_sigma * frame_noise[v];
      }
    }
    cohort.push_back(std::move(s));
  }
  return cohort;
}

void save_volume(const Tensor& t, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw VolumeError(VolumeErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  os.write("MVL1", 4);
  put_u32(os, static_cast<std::uint32_t>(t.ndim()));
  for (auto e : t.shape()) {
    if (e > std::numeric_limits<std::uint32_t>::max())
      throw VolumeError(VolumeErrorKind::ExtentOverflow, "extent does not fit in 32 bits");
    put_u32(os, static_cast<std::uint32_t>(e));
  }
  for (float v : t.data()) put_u32(os, std::bit_cast<std::uint32_t>(v));
  if (!os) throw VolumeError(VolumeErrorKind::Io, "write to '" + path.string() + "' failed");
}

Tensor load_volume(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw VolumeError(VolumeErrorKind::Io, "cannot open '" + path.string() + "'");
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() < 4 || std::string(bytes.begin(), bytes.begin() + 4) != "MVL1")
    throw VolumeError(VolumeErrorKind::BadMagic, "'" + path.string() + "': bad magic");
  if (bytes.size() < 8) throw VolumeError(VolumeErrorKind::TruncatedPayload, "'" + path.string() + "': truncated header");
  const std::uint32_t ndim = get_u32(bytes.data() + 4);
  if (ndim == 0 || ndim > 16)
    throw VolumeError(VolumeErrorKind::ExtentOverflow, "'" + path.string() + "': unsupported rank " + std::to_string(ndim));
  const std::size_t header = 8 + 4 * static_cast<std::size_t>(ndim);
  if (bytes.size() < header)
    throw VolumeError(VolumeErrorKind::TruncatedPayload, "'" + path.string() + "': truncated header");
  Shape shape;
  std::uint64_t count = 1;
  for (std::uint32_t d = 0; d < ndim; ++d) {
    const std::uint32_t e = get_u32(bytes.data() + 8 + 4 * d);
    if (e == 0 || count > (std::uint64_t{1} << 60) / e)
      throw VolumeError(VolumeErrorKind::ExtentOverflow, "'" + path.string() + "': extent overflow");
    count *= e;
    shape.push_back(e);
  }
  const std::uint64_t payload = bytes.size() - header;
  if (payload < count * 4)
    throw VolumeError(VolumeErrorKind::TruncatedPayload, "'" + path.string() + "': truncated payload");
  if (payload > count * 4)
    throw VolumeError(VolumeErrorKind::TrailingBytes, "'" + path.string() + "': trailing bytes after payload");
  std::vector<float> values(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = std::bit_cast<float>(get_u32(bytes.data() + header + 4 * i));
  return Tensor(std::move(shape), std::move(values));
}

TrainTestSplit split_train_test(const std::vector<SubjectSample>& cohort, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("split fraction must lie in (0, 1)");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < cohort.size(); ++i) by_class[cohort[i].label].push_back(i);
  std::vector<char> in_train(cohort.size(), 0);
  Rng rng(seed);
  for (auto& [label, idx] : by_class) {
    if (idx.size() < 2)
      throw std::invalid_argument("class " + std::to_string(label) + " has fewer than 2 samples; cannot stratify");
    rng.shuffle(idx);
    auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
    for (std::size_t j = 0; j < n_train; ++j) in_train[idx[j]] = 1;
  }
  TrainTestSplit s;
  for (std::size_t i = 0; i < cohort.size(); ++i) (in_train[i] ? s.train : s.test).push_back(cohort[i]);
  return s;
}

void export_pgm_slice(const Tensor& volume, int axis, std::int64_t index, const std::filesystem::path& path) {
  const std::size_t off = volume.ndim() == 4 ? 1 : 0;
  if (volume.ndim() != 3 + off || (off && volume.dim(0) != 1))
    throw std::invalid_argument("export_pgm_slice: expected [D,H,W], got " + shape_str(volume.shape()));
  if (axis < 0 || axis > 2) throw std::invalid_argument("export_pgm_slice: axis must be 0, 1 or 2");
  const std::int64_t D = volume.dim(off), H = volume.dim(off + 1), W = volume.dim(off + 2);
  const std::int64_t ext[3] = {D, H, W};
  if (index < 0 || index >= ext[axis])
    throw std::out_of_range("export_pgm_slice: index " + std::to_string(index) + " outside extent " +
                            std::to_string(ext[axis]));
  // Image rows/cols are the two remaining axes in order.
  const int ra = axis == 0 ? 1 : 0;
  const int ca = axis == 2 ? 1 : 2;
  const std::int64_t rows = ext[ra], cols = ext[ca];
  std::vector<float> px(static_cast<std::size_t>(rows * cols));
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c) {
      std::int64_t coord[3];
      coord[axis] = index;
      coord[ra] = r;
      coord[ca] = c;
      px[r * cols + c] = volume[static_cast<std::size_t>((coord[0] * H + coord[1]) * W + coord[2])];
    }
  const auto [lo, hi] = std::minmax_element(px.begin(), px.end());
  const float mn = *lo, mx = *hi;
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os << "P5\n" << cols << ' ' << rows << "\n255\n";
  for (float v : px) {
    const double scaled = mx > mn ? (static_cast<double>(v) - mn) / (static_cast<double>(mx) - mn) * 255.0 : 0.0;
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround(scaled))));
  }
  if (!os) throw std::runtime_error("write to '" + path.string() + "' failed");
}

void export_metrics_csv(const MetricsReport& report, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os << "run,seed,task,accuracy,precision,recall\n";
  char buf[256];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%s,%llu,%s,%.4f,%.4f,%.4f\n", r.run.c_str(),
                  static_cast<unsigned long long>(r.seed), r.task.c_str(), r.accuracy, r.precision, r.recall);
    os << buf;
  }
  if (!os) throw std::runtime_error("write to '" + path.string() + "' failed");
}

}  // namespace masan
