#include "qccnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "qccnn/errors.hpp"
#include "qccnn/io.hpp"
#include "qccnn/rng.hpp"

namespace qccnn::data {

std::int64_t Dataset::item_size() const {
  std::int64_t n = 1;
  for (auto d : item_shape) n *= d;
  return n;
}

std::span<const double> Dataset::item(std::int64_t i) const {
  return std::span<const double>(images).subspan(static_cast<std::size_t>(i * item_size()),
                                                 static_cast<std::size_t>(item_size()));
}

std::span<double> Dataset::item(std::int64_t i) {
  return std::span<double>(images).subspan(static_cast<std::size_t>(i * item_size()),
                                           static_cast<std::size_t>(item_size()));
}

std::vector<std::uint8_t> serialize(const Dataset& ds) {
  io::Writer w;
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u32(0);  // float64 tag
  w.u32(static_cast<std::uint32_t>(ds.item_shape.size()));
  w.u64(static_cast<std::uint64_t>(ds.n_items()));
  w.u32(static_cast<std::uint32_t>(ds.n_classes));
  for (auto d : ds.item_shape) w.u64(static_cast<std::uint64_t>(d));
  for (double v : ds.images) w.f64(v);
  for (auto l : ds.labels) w.u16(l);
  return w.buffer();
}

void save(const Dataset& ds, const std::string& path) {
  const auto bytes = serialize(ds);
  io::atomic_write_file(path, bytes.data(), bytes.size());
}

Dataset load(const std::string& path) {
  io::Reader r(io::read_file(path));
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("bad magic at byte offset 0 in " + path);
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw FormatError("unsupported QTN container version " + std::to_string(version));
  }
  const std::uint32_t tag = r.u32();
  if (tag != 0) throw FormatError("unsupported element type tag " + std::to_string(tag));
  const std::uint32_t rank = r.u32();
  if (rank < 2 || rank > 4) throw FormatError("item rank must be in [2, 4], got " + std::to_string(rank));
  const std::uint64_t n_items = r.u64();
  const std::uint32_t n_classes = r.u32();
  if (n_classes < 2) throw FormatError("class count must be >= 2");

  Dataset ds;
  ds.n_classes = static_cast<int>(n_classes);
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::uint64_t d = r.u64();
    if (d == 0 || d > 1'000'000) throw FormatError("bad item dimension at offset " +
                                                   std::to_string(r.offset() - 8));
    ds.item_shape.push_back(static_cast<std::int64_t>(d));
  }
  // Validate the implied payload size before allocating anything.
  const std::uint64_t total = n_items * static_cast<std::uint64_t>(ds.item_size());
  const std::uint64_t expect_bytes = total * 8 + n_items * 2;
  if (ds.item_size() > 100'000'000 ||
      total / std::max<std::uint64_t>(1, n_items) != static_cast<std::uint64_t>(ds.item_size()) ||
      expect_bytes != r.remaining()) {
    throw FormatError("payload size mismatch at offset " + std::to_string(r.offset()) +
                      ": header implies " + std::to_string(expect_bytes) + " bytes, file has " +
                      std::to_string(r.remaining()));
  }
  ds.images.resize(static_cast<std::size_t>(total));
  for (auto& v : ds.images) v = r.f64();
  ds.labels.resize(static_cast<std::size_t>(n_items));
  for (auto& l : ds.labels) l = r.u16();
  r.expect_end();

  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    if (ds.labels[i] >= n_classes) {
      throw FormatError("label " + std::to_string(ds.labels[i]) + " out of range for " +
                        std::to_string(n_classes) + " classes (item " + std::to_string(i) + ")");
    }
  }
  for (double v : ds.images) {
    if (!std::isfinite(v)) throw FormatError("non-finite image value in " + path);
  }
  return ds;
}

SplitSpec default_split(std::int64_t n_items) {
  SplitSpec s;
  s.train_count = n_items * 8 / 10;
  s.val_count = n_items - s.train_count;
  return s;
}

void validate_split(const Dataset& ds, const SplitSpec& split) {
  if (split.train_count < 1 || split.val_count < 0 ||
      split.train_count + split.val_count > ds.n_items()) {
    throw ConfigError("split " + std::to_string(split.train_count) + "/" +
                      std::to_string(split.val_count) + " does not fit " +
                      std::to_string(ds.n_items()) + " items");
  }
}

NormStats compute_stats(const Dataset& ds, std::int64_t first_n) {
  if (first_n < 1 || first_n > ds.n_items()) {
    throw ConfigError("normalization needs at least one training item");
  }
  const std::int64_t count = first_n * ds.item_size();
  double sum = 0.0;
  for (std::int64_t i = 0; i < count; ++i) sum += ds.images[static_cast<std::size_t>(i)];
  const double mean = sum / static_cast<double>(count);
  double sq = 0.0;
  for (std::int64_t i = 0; i < count; ++i) {
    const double d = ds.images[static_cast<std::size_t>(i)] - mean;
    sq += d * d;
  }
  const double var = sq / static_cast<double>(count);
  if (var <= 0.0) throw ConfigError("training split has zero variance, cannot normalize");
  return {mean, std::sqrt(var)};
}

void apply_stats(Dataset& ds, const NormStats& stats) {
  if (stats.stddev <= 0.0) throw ConfigError("normalization stddev must be positive");
  for (auto& v : ds.images) v = (v - stats.mean) / stats.stddev;
}

NormStats normalize(Dataset& ds, std::int64_t train_count) {
  const NormStats stats = compute_stats(ds, train_count);
  apply_stats(ds, stats);
  return stats;
}

Dataset synth_stripes(std::int64_t n_items, std::uint64_t seed) {
  if (n_items < 1) throw UsageError("synth: item count must be >= 1");
  constexpr std::int64_t side = 28;
  Dataset ds;
  ds.item_shape = {1, side, side};
  ds.n_classes = 2;
  ds.images.resize(static_cast<std::size_t>(n_items * side * side));
  ds.labels.resize(static_cast<std::size_t>(n_items));

  RunRng rng(seed);
  // Fixed-phase period-2 bars keep the classes linearly separable as images,
  // which the conv -> flatten -> linear networks (affine end to end) need.
  constexpr double amplitude = 1.0, noise_sigma = 0.2;
  for (std::int64_t i = 0; i < n_items; ++i) {
    const int label = static_cast<int>(i % 2);  // 0 horizontal, 1 vertical
    ds.labels[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(label);
    auto img = ds.item(i);
    for (std::int64_t r = 0; r < side; ++r) {
      for (std::int64_t c = 0; c < side; ++c) {
        const bool bar = (label == 0 ? r : c) % 2 == 0;
        img[static_cast<std::size_t>(r * side + c)] =
            (bar ? amplitude : 0.0) + normal(rng, 0.0, noise_sigma);
      }
    }
  }
  return ds;
}

Dataset synth_blobs(std::int64_t n_items, std::uint64_t seed) {
  if (n_items < 1) throw UsageError("synth: item count must be >= 1");
  constexpr std::int64_t side = 16;
  Dataset ds;
  ds.item_shape = {1, side, side, side};
  ds.n_classes = 2;
  ds.images.resize(static_cast<std::size_t>(n_items * side * side * side));
  ds.labels.resize(static_cast<std::size_t>(n_items));

  RunRng rng(seed);
  constexpr double amplitude = 5.0;
  for (std::int64_t i = 0; i < n_items; ++i) {
    const int label = static_cast<int>(i % 2);  // 1 carries the blob
    ds.labels[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(label);
    auto img = ds.item(i);
    for (auto& v : img) v = normal(rng, 0.0, 1.0);
    if (label == 1) {
      const double radius = uniform(rng, 2.0, 4.0);
      // Keep the blob fully interior so its mass never clips at a face.
      const std::int64_t margin = static_cast<std::int64_t>(std::ceil(radius));
      const double cd = static_cast<double>(uniform_int(rng, margin, side - 1 - margin));
      const double ch = static_cast<double>(uniform_int(rng, margin, side - 1 - margin));
      const double cw = static_cast<double>(uniform_int(rng, margin, side - 1 - margin));
      for (std::int64_t d = 0; d < side; ++d) {
        for (std::int64_t h = 0; h < side; ++h) {
          for (std::int64_t w = 0; w < side; ++w) {
            const double dd = static_cast<double>(d) - cd;
            const double dh = static_cast<double>(h) - ch;
            const double dw = static_cast<double>(w) - cw;
            const double r2 = dd * dd + dh * dh + dw * dw;
            img[static_cast<std::size_t>((d * side + h) * side + w)] +=
                amplitude * std::exp(-r2 / (2.0 * radius * radius));
          }
        }
      }
    }
  }
  return ds;
}

}  // namespace qccnn::data
