#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace qccnn::data {

// QTN1 container: a flat binary file of labelled real tensors.
//
//   offset  field
//   0       magic "QTN1"
//   4       u32 version (currently 1)
//   8       u32 element type tag (0 = little-endian float64)
//   12      u32 rank of one item (channel axis included)
//   16      u64 item count
//   24      u32 class count
//   28      u64 item_shape[rank]
//   ...     f64 images[item count * prod(item_shape)]
//   ...     u16 labels[item count]
//
// All integers and reals little-endian. No padding, no trailing bytes.
struct Dataset {
  std::vector<std::int64_t> item_shape;  // (C, spatial...)
  int n_classes = 0;
  std::vector<double> images;            // [n_items][prod(item_shape)]
  std::vector<std::uint16_t> labels;

  std::int64_t n_items() const { return static_cast<std::int64_t>(labels.size()); }
  std::int64_t item_size() const;
  std::span<const double> item(std::int64_t i) const;
  std::span<double> item(std::int64_t i);
};

inline constexpr char kMagic[4] = {'Q', 'T', 'N', '1'};
inline constexpr std::uint32_t kVersion = 1;

Dataset load(const std::string& path);
void save(const Dataset& ds, const std::string& path);
std::vector<std::uint8_t> serialize(const Dataset& ds);

struct SplitSpec {
  std::int64_t train_count = 0;
  std::int64_t val_count = 0;
};

// First train_count items train, the next val_count validate.
SplitSpec default_split(std::int64_t n_items);  // 80/20, train floor
void validate_split(const Dataset& ds, const SplitSpec& split);

struct NormStats {
  double mean = 0.0;
  double stddev = 1.0;
};

// Global statistics over the first `first_n` items (the training split).
NormStats compute_stats(const Dataset& ds, std::int64_t first_n);
void apply_stats(Dataset& ds, const NormStats& stats);

// Standardizes every item with training-split statistics; errors on zero
// variance. Returns the stats so they can go into the run manifest.
NormStats normalize(Dataset& ds, std::int64_t train_count);

// 1x28x28 images: class 0 horizontal bright bars on even rows, class 1
// vertical bars on even columns, additive Gaussian noise sigma = 0.2.
// Item i has label i % 2. Separable by a 2x2 edge filter by construction.
Dataset synth_stripes(std::int64_t n_items, std::uint64_t seed);

// 1x16x16x16 volumes on unit Gaussian noise; class 1 adds a bright Gaussian
// blob of radius r in [2, 4] at a random interior position. The amplitude is
// set so a global mean-intensity threshold reaches >= 95%.
Dataset synth_blobs(std::int64_t n_items, std::uint64_t seed);

}  // namespace qccnn::data
