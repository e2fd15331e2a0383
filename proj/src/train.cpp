#include "qccnn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <numeric>
#include <sstream>

#include "qccnn/errors.hpp"
#include "qccnn/io.hpp"

namespace qccnn::train {

int default_batch(std::size_t item_rank) { return item_rank == 4 ? 64 : 8; }

const char* split_name(Split s) { return s == Split::Train ? "train" : "val"; }

namespace {

// Copies items [indices] into a batch tensor (N, item shape...).
nn::Tensor make_batch(const data::Dataset& ds, std::span<const std::int64_t> indices) {
  std::vector<std::int64_t> shape{static_cast<std::int64_t>(indices.size())};
  shape.insert(shape.end(), ds.item_shape.begin(), ds.item_shape.end());
  nn::Tensor batch(shape);
  const std::int64_t isz = ds.item_size();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    auto src = ds.item(indices[b]);
    std::copy(src.begin(), src.end(), batch.data() + static_cast<std::int64_t>(b) * isz);
  }
  return batch;
}

std::vector<std::uint16_t> gather_labels(const data::Dataset& ds,
                                         std::span<const std::int64_t> indices) {
  std::vector<std::uint16_t> labels(indices.size());
  for (std::size_t b = 0; b < indices.size(); ++b) {
    labels[b] = ds.labels[static_cast<std::size_t>(indices[b])];
  }
  return labels;
}

}  // namespace

Metrics evaluate_split(Model& model, const data::Dataset& ds, std::int64_t begin,
                       std::int64_t count, int batch, RunContext& ctx) {
  if (count < 1) throw UsageError("evaluate_split: empty split");
  if (begin < 0 || begin + count > ds.n_items()) throw UsageError("evaluate_split: out of range");
  ctx.mode = Mode::Eval;
  double loss_sum = 0.0;
  std::int64_t correct = 0;
  for (std::int64_t at = 0; at < count; at += batch) {
    const std::int64_t n = std::min<std::int64_t>(batch, count - at);
    std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), begin + at);
    const nn::Tensor x = make_batch(ds, idx);
    const auto labels = gather_labels(ds, idx);
    const nn::Tensor logits = model.forward(x, ctx);
    const auto ce = nn::softmax_cross_entropy(logits, labels);
    loss_sum += ce.loss * static_cast<double>(n);
    correct += ce.correct;
  }
  return {loss_sum / static_cast<double>(count),
          static_cast<double>(correct) / static_cast<double>(count)};
}

void Optimizer::step(std::vector<ParamBlock>& blocks) {
  if (states.empty()) states.resize(blocks.size());
  if (states.size() != blocks.size()) throw UsageError("optimizer block count mismatch");
  ++step_count;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    nn::adam_step(*blocks[i].values, *blocks[i].grads, states[i], step_count, cfg);
  }
}

SeedResult train_one(Model& model, const data::Dataset& ds, const data::SplitSpec& split,
                     const TrainConfig& cfg, std::uint64_t seed, Optimizer& opt, RunRng& rng,
                     const std::function<void(int)>& after_epoch) {
  data::validate_split(ds, split);
  if (split.val_count < 1) throw ConfigError("training needs a non-empty validation split");
  const int batch = cfg.batch > 0 ? cfg.batch : default_batch(ds.item_shape.size());
  if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");

  SeedResult result;
  auto blocks = model.param_blocks();

  std::vector<std::int64_t> order(static_cast<std::size_t>(split.train_count));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::int64_t at = 0; at < split.train_count; at += batch) {
      const std::int64_t n = std::min<std::int64_t>(batch, split.train_count - at);
      const std::span<const std::int64_t> idx(order.data() + at, static_cast<std::size_t>(n));
      const nn::Tensor x = make_batch(ds, idx);
      const auto labels = gather_labels(ds, idx);

      RunContext ctx{Mode::Train, &rng, cfg.workers,
                     cfg.check_ranges ? &result.range : nullptr};
      const nn::Tensor logits = model.forward(x, ctx);
      const auto ce = nn::softmax_cross_entropy(logits, labels);
      if (!std::isfinite(ce.loss)) {
        result.diverged = true;
        return result;
      }
      model.backward(ce.grad_logits, ctx);
      opt.step(blocks);
    }

    RunContext eval_ctx{Mode::Eval, nullptr, cfg.workers,
                        cfg.check_ranges ? &result.range : nullptr};
    const Metrics train_m = evaluate_split(model, ds, 0, split.train_count, batch, eval_ctx);
    const Metrics val_m =
        evaluate_split(model, ds, split.train_count, split.val_count, batch, eval_ctx);
    result.rows.push_back({seed, epoch, Split::Train, train_m.loss, train_m.accuracy});
    result.rows.push_back({seed, epoch, Split::Val, val_m.loss, val_m.accuracy});
    result.completed_epochs = epoch;
    if (after_epoch) after_epoch(epoch);
  }
  return result;
}

// -------------------------------------------------------------------- formats

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = "seed,epoch,split,loss,accuracy\n";
  for (const auto& r : rows) {
    out += std::to_string(r.seed) + "," + std::to_string(r.epoch) + "," + split_name(r.split) +
           "," + format_double(r.loss) + "," + format_double(r.accuracy) + "\n";
  }
  return out;
}

std::vector<AggregateRow> aggregate(const std::vector<MetricsRow>& rows) {
  int max_epoch = 0;
  for (const auto& r : rows) max_epoch = std::max(max_epoch, r.epoch);

  std::vector<AggregateRow> out;
  for (int epoch = 1; epoch <= max_epoch; ++epoch) {
    for (Split split : {Split::Train, Split::Val}) {
      for (int metric = 0; metric < 2; ++metric) {
        std::vector<double> vals;
        for (const auto& r : rows) {
          if (r.epoch == epoch && r.split == split) {
            vals.push_back(metric == 0 ? r.loss : r.accuracy);
          }
        }
        if (vals.empty()) continue;
        double sum = 0.0;
        for (double v : vals) sum += v;
        const double mean = sum / static_cast<double>(vals.size());
        double sq = 0.0;
        for (double v : vals) sq += (v - mean) * (v - mean);
        const double stddev = std::sqrt(sq / static_cast<double>(vals.size()));
        out.push_back({epoch, split, metric == 0 ? "loss" : "accuracy", mean, stddev});
      }
    }
  }
  return out;
}

std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::string out = "epoch,split,metric,mean,std\n";
  for (const auto& r : rows) {
    out += std::to_string(r.epoch) + "," + split_name(r.split) + "," + r.metric + "," +
           format_double(r.mean) + "," + format_double(r.stddev) + "\n";
  }
  return out;
}

// ----------------------------------------------------------------- checkpoint

namespace {

std::string echo_to_text(const std::map<std::string, std::string>& config) {
  std::string text;
  for (const auto& [k, v] : config) text += k + " = " + v + "\n";
  return text;
}

std::map<std::string, std::string> text_to_echo(const std::string& text) {
  std::map<std::string, std::string> config;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(s.begin());
      while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.pop_back();
    };
    trim(key);
    trim(val);
    config[key] = val;
  }
  return config;
}

std::string require_key(const std::map<std::string, std::string>& config, const std::string& key) {
  auto it = config.find(key);
  if (it == config.end()) throw FormatError("checkpoint config missing key '" + key + "'");
  return it->second;
}

std::vector<std::int64_t> parse_shape(const std::string& s) {
  std::vector<std::int64_t> shape;
  std::string cur;
  for (char ch : s + "x") {
    if (ch == 'x' || ch == 'X') {
      if (cur.empty()) throw ConfigError("bad shape string '" + s + "'");
      shape.push_back(std::stoll(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  return shape;
}

}  // namespace

ArchSpec arch_from_config(const std::map<std::string, std::string>& config) {
  ArchSpec arch;
  arch.kind = arch_kind_from_name(require_key(config, "arch"));
  const double t = std::stod(require_key(config, "threshold_t"));
  arch.encoding = encoding_from_name(require_key(config, "encoding"), t);
  arch.ansatz.kind = ansatz_kind_from_name(require_key(config, "ansatz"));
  arch.ansatz.n_layers = std::stoi(require_key(config, "layers"));
  arch.conv4_stride = std::stoi(require_key(config, "conv4_stride"));
  return arch;
}

std::map<std::string, std::string> config_echo(const TrainConfig& cfg,
                                               std::span<const std::int64_t> item_shape,
                                               int n_classes, const data::SplitSpec& split,
                                               const data::NormStats& stats, std::uint64_t seed) {
  std::map<std::string, std::string> echo;
  echo["arch"] = arch_kind_name(cfg.arch.kind);
  echo["encoding"] = encoding_name(cfg.arch.encoding);
  echo["threshold_t"] = format_double(cfg.arch.encoding.threshold);
  echo["ansatz"] = ansatz_kind_name(cfg.arch.ansatz.kind);
  echo["layers"] = std::to_string(cfg.arch.ansatz.n_layers);
  echo["conv4_stride"] = std::to_string(cfg.arch.conv4_stride);
  echo["item_shape"] = nn::shape_str(item_shape);
  echo["n_classes"] = std::to_string(n_classes);
  echo["epochs"] = std::to_string(cfg.epochs);
  echo["batch"] = std::to_string(cfg.batch > 0 ? cfg.batch : default_batch(item_shape.size()));
  echo["lr"] = format_double(cfg.lr);
  echo["train_count"] = std::to_string(split.train_count);
  echo["val_count"] = std::to_string(split.val_count);
  echo["norm_mean"] = format_double(stats.mean);
  echo["norm_std"] = format_double(stats.stddev);
  echo["seed"] = std::to_string(seed);
  return echo;
}

void save_checkpoint(const std::string& path, Model& model, const Optimizer* opt,
                     const std::map<std::string, std::string>& config_echo) {
  io::Writer w;
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.str(echo_to_text(config_echo));

  auto blocks = model.param_blocks();
  w.u32(static_cast<std::uint32_t>(blocks.size()));
  for (const auto& b : blocks) {
    w.str(b.name);
    w.u64(b.values->size());
    for (double v : *b.values) w.f64(v);
  }

  w.u32(static_cast<std::uint32_t>(model.n_layers()));
  for (std::size_t i = 0; i < model.n_layers(); ++i) model.layer(i).save_state(w);

  w.u32(opt ? 1 : 0);
  if (opt) {
    w.u64(static_cast<std::uint64_t>(opt->step_count));
    w.f64(opt->cfg.lr);
    w.u32(static_cast<std::uint32_t>(opt->states.size()));
    for (const auto& st : opt->states) {
      w.u64(st.m.size());
      for (double v : st.m) w.f64(v);
      for (double v : st.v) w.f64(v);
    }
  }
  io::atomic_write_file(path, w.buffer().data(), w.buffer().size());
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  io::Reader r(io::read_file(path));
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw FormatError("bad checkpoint magic at byte offset 0 in " + path);
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) +
                      " (expected " + std::to_string(kCheckpointVersion) + ")");
  }

  LoadedCheckpoint loaded;
  loaded.config = text_to_echo(r.str());

  const ArchSpec arch = arch_from_config(loaded.config);
  const auto item_shape = parse_shape(require_key(loaded.config, "item_shape"));
  const int n_classes = std::stoi(require_key(loaded.config, "n_classes"));
  RunRng scratch(0);  // weights are overwritten below
  loaded.model = build_model(arch, item_shape, n_classes, scratch);

  auto blocks = loaded.model.param_blocks();
  const std::uint32_t n_blocks = r.u32();
  if (n_blocks != blocks.size()) {
    throw FormatError("checkpoint has " + std::to_string(n_blocks) + " parameter blocks, model needs " +
                      std::to_string(blocks.size()));
  }
  for (auto& b : blocks) {
    const std::string name = r.str();
    if (name != b.name) {
      throw FormatError("checkpoint block '" + name + "' does not match model block '" + b.name + "'");
    }
    const std::uint64_t count = r.u64();
    if (count != b.values->size()) {
      throw FormatError("checkpoint block '" + name + "' has " + std::to_string(count) +
                        " values, model needs " + std::to_string(b.values->size()));
    }
    for (auto& v : *b.values) v = r.f64();
  }

  const std::uint32_t n_layers = r.u32();
  if (n_layers != loaded.model.n_layers()) {
    throw FormatError("checkpoint layer count mismatch");
  }
  for (std::size_t i = 0; i < loaded.model.n_layers(); ++i) loaded.model.layer(i).load_state(r);

  const std::uint32_t has_opt = r.u32();
  if (has_opt) {
    loaded.opt.step_count = static_cast<std::int64_t>(r.u64());
    loaded.opt.cfg.lr = r.f64();
    const std::uint32_t n_states = r.u32();
    loaded.opt.states.resize(n_states);
    for (auto& st : loaded.opt.states) {
      const std::uint64_t n = r.u64();
      st.m.resize(static_cast<std::size_t>(n));
      st.v.resize(static_cast<std::size_t>(n));
      for (auto& v : st.m) v = r.f64();
      for (auto& v : st.v) v = r.f64();
    }
  }
  r.expect_end();
  return loaded;
}

// ---------------------------------------------------------------- experiment

ExperimentResult run_experiment(const TrainConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  if (cfg.seeds.empty()) throw ConfigError("need at least one seed");
  if (cfg.out_dir.empty()) throw ConfigError("need an output directory");
  if (cfg.data_path.empty()) throw ConfigError("need a dataset path");

  data::Dataset ds = data::load(cfg.data_path);
  data::SplitSpec split{cfg.train_count, cfg.val_count};
  if (split.train_count == 0 && split.val_count == 0) split = data::default_split(ds.n_items());
  if (split.val_count == 0) split.val_count = ds.n_items() - split.train_count;
  data::validate_split(ds, split);
  const data::NormStats stats = data::normalize(ds, split.train_count);

  std::filesystem::create_directories(cfg.out_dir);
  const std::string dir = cfg.out_dir + "/";

  ExperimentResult result;
  std::vector<std::string> seed_status;
  for (std::uint64_t seed : cfg.seeds) {
    RunRng rng(seed);
    Model model = build_model(cfg.arch, ds.item_shape, ds.n_classes, rng);
    Optimizer opt;
    opt.cfg.lr = cfg.lr;

    const std::string ckpt = dir + "checkpoint_seed" + std::to_string(seed) + ".qck";
    const auto echo = config_echo(cfg, ds.item_shape, ds.n_classes, split, stats, seed);
    SeedResult sr = train_one(model, ds, split, cfg, seed, opt, rng,
                              [&](int) { save_checkpoint(ckpt, model, &opt, echo); });
    result.rows.insert(result.rows.end(), sr.rows.begin(), sr.rows.end());
    result.range.merge(sr.range);
    if (sr.diverged) {
      result.any_diverged = true;
      seed_status.push_back("seed_" + std::to_string(seed) + "_status = diverged_after_epoch_" +
                            std::to_string(sr.completed_epochs));
    } else {
      seed_status.push_back("seed_" + std::to_string(seed) + "_status = ok");
    }
    result.checkpoint_paths.push_back(ckpt);
  }

  result.aggregate_rows = aggregate(result.rows);
  result.metrics_csv_path = dir + "metrics.csv";
  result.aggregate_csv_path = dir + "aggregate.csv";
  result.manifest_path = dir + "manifest.txt";
  io::atomic_write_file(result.metrics_csv_path, metrics_csv(result.rows));
  io::atomic_write_file(result.aggregate_csv_path, aggregate_csv(result.aggregate_rows));

  const auto t1 = std::chrono::steady_clock::now();
  const double wall = std::chrono::duration<double>(t1 - t0).count();
  std::string manifest;
  manifest += "engine = qccnn 0.1.0\n";
  auto echo = config_echo(cfg, ds.item_shape, ds.n_classes, split, stats, cfg.seeds.front());
  echo.erase("seed");
  for (const auto& [k, v] : echo) manifest += k + " = " + v + "\n";
  manifest += "data_path = " + cfg.data_path + "\n";
  std::string seed_list;
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    if (i) seed_list += ",";
    seed_list += std::to_string(cfg.seeds[i]);
  }
  manifest += "seeds = " + seed_list + "\n";
  manifest += "workers = " + std::to_string(cfg.workers) + "\n";
  for (const auto& line : seed_status) manifest += line + "\n";
  if (cfg.check_ranges) {
    manifest += "range_checked = " + std::to_string(result.range.checked) + "\n";
    manifest += "range_violations = " + std::to_string(result.range.violations) + "\n";
    manifest += "range_min = " + format_double(result.range.min_seen) + "\n";
    manifest += "range_max = " + format_double(result.range.max_seen) + "\n";
  }
  manifest += "wall_seconds = " + format_double(wall) + "\n";
  io::atomic_write_file(result.manifest_path, manifest);
  return result;
}

}  // namespace qccnn::train
