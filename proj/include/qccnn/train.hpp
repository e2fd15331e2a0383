#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "qccnn/data.hpp"
#include "qccnn/model.hpp"
#include "qccnn/nn.hpp"

namespace qccnn::train {

struct TrainConfig {
  ArchSpec arch;
  std::string data_path;
  std::string out_dir;
  int epochs = 20;
  int batch = 0;  // 0 -> 8 for 2D datasets, 64 for 3D
  double lr = 1e-3;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  int workers = 1;
  std::int64_t train_count = 0;  // 0 -> 80/20 split
  std::int64_t val_count = 0;
  bool check_ranges = false;
};

int default_batch(std::size_t item_rank);  // 8 for (C,H,W), 64 for (C,D,H,W)

enum class Split { Train, Val };
const char* split_name(Split s);

struct MetricsRow {
  std::uint64_t seed = 0;
  int epoch = 0;  // 1-based
  Split split = Split::Train;
  double loss = 0.0;
  double accuracy = 0.0;
};

struct Metrics {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Eval-mode pass over items [begin, begin + count); deterministic.
Metrics evaluate_split(Model& model, const data::Dataset& ds, std::int64_t begin,
                       std::int64_t count, int batch, RunContext& ctx);

// Adam over all parameter blocks with one shared step counter.
struct Optimizer {
  nn::AdamConfig cfg;
  std::vector<nn::AdamState> states;
  std::int64_t step_count = 0;

  void step(std::vector<ParamBlock>& blocks);
};

struct SeedResult {
  std::vector<MetricsRow> rows;  // train + val per completed epoch
  bool diverged = false;
  int completed_epochs = 0;
  qconv::RangeStats range;
};

// One full training run: per epoch, a seeded shuffled pass over the training
// split (last partial batch kept), then eval-mode metrics on both splits.
// `rng` must be the generator the model was built from so the draw order
// stays reproducible. A non-finite batch loss stops the run and flags
// divergence; rows for completed epochs are kept and `after_epoch` (used for
// checkpointing) is not called again, so the last good checkpoint survives.
SeedResult train_one(Model& model, const data::Dataset& normalized, const data::SplitSpec& split,
                     const TrainConfig& cfg, std::uint64_t seed, Optimizer& opt, RunRng& rng,
                     const std::function<void(int epoch)>& after_epoch = {});

// ------------------------------------------------------------------ formats

std::string format_double(double v);  // round-trip exact, "%.17g"

// header: seed,epoch,split,loss,accuracy
std::string metrics_csv(const std::vector<MetricsRow>& rows);

struct AggregateRow {
  int epoch = 0;
  Split split = Split::Train;
  std::string metric;  // "loss" | "accuracy"
  double mean = 0.0;
  double stddev = 0.0;  // population
};

// Mean and population standard deviation across seeds, per epoch/split/metric.
std::vector<AggregateRow> aggregate(const std::vector<MetricsRow>& rows);
// header: epoch,split,metric,mean,std
std::string aggregate_csv(const std::vector<AggregateRow>& rows);

// ---------------------------------------------------------------- checkpoint

inline constexpr char kCheckpointMagic[4] = {'Q', 'C', 'K', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Versioned little-endian binary: config echo (key=value lines), named
// parameter blocks, per-layer state, optimizer moments. A loaded model
// reproduces the saved model's eval metrics bit-exactly.
void save_checkpoint(const std::string& path, Model& model, const Optimizer* opt,
                     const std::map<std::string, std::string>& config_echo);

struct LoadedCheckpoint {
  Model model;
  Optimizer opt;
  std::map<std::string, std::string> config;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// Rebuilds an ArchSpec from a config echo (arch/encoding/ansatz/... keys).
ArchSpec arch_from_config(const std::map<std::string, std::string>& config);
std::map<std::string, std::string> config_echo(const TrainConfig& cfg,
                                               std::span<const std::int64_t> item_shape,
                                               int n_classes, const data::SplitSpec& split,
                                               const data::NormStats& stats, std::uint64_t seed);

// ---------------------------------------------------------------- experiment

struct ExperimentResult {
  std::vector<MetricsRow> rows;
  std::vector<AggregateRow> aggregate_rows;
  std::string metrics_csv_path;
  std::string aggregate_csv_path;
  std::string manifest_path;
  std::vector<std::string> checkpoint_paths;  // per seed
  bool any_diverged = false;
  qconv::RangeStats range;
};

// Loads the dataset, normalizes with training-split statistics, trains every
// seed, and writes metrics.csv, aggregate.csv, per-seed checkpoints and a
// manifest into cfg.out_dir (all atomically).
ExperimentResult run_experiment(const TrainConfig& cfg);

}  // namespace qccnn::train
