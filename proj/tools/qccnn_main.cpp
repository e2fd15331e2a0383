#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qccnn/data.hpp"
#include "qccnn/errors.hpp"
#include "qccnn/gradcheck.hpp"
#include "qccnn/model.hpp"
#include "qccnn/train.hpp"

namespace {

using namespace qccnn;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitCheck = 4;

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> seeds;
  std::string cur;
  for (char ch : s + ",") {
    if (ch == ',') {
      if (cur.empty()) continue;
      seeds.push_back(std::stoull(cur));
      cur.clear();
    } else if (ch == ' ') {
      continue;
    } else {
      cur += ch;
    }
  }
  if (seeds.empty()) throw UsageError("no seeds in '" + s + "'");
  return seeds;
}

std::vector<std::int64_t> parse_shape(const std::string& s) {
  std::vector<std::int64_t> shape;
  std::string cur;
  for (char ch : s + "x") {
    if (ch == 'x' || ch == 'X') {
      if (cur.empty()) throw UsageError("bad shape '" + s + "' (expected e.g. 1x28x28)");
      shape.push_back(std::stoll(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (shape.size() < 3 || shape.size() > 4) {
    throw UsageError("item shape must be CxHxW or CxDxHxW, got '" + s + "'");
  }
  return shape;
}

struct ArchFlags {
  std::string arch = "classical2d";
  std::string encoding = "higher-order";
  std::string ansatz = "basic";
  int layers = 1;
  double threshold_t = 0.0;
  int conv4_stride = 1;
  bool encoding_explicit = false;
  bool ansatz_explicit = false;

  train::ArchSpec resolve() const {
    train::ArchSpec spec;
    spec.kind = train::arch_kind_from_name(arch);
    std::string enc = encoding;
    std::string ans = ansatz;
    if (spec.kind == train::ArchKind::QCCNN3D) {
      // The 3D quantum network uses angle encoding and strongly entangling
      // layers unless told otherwise.
      if (!encoding_explicit) enc = "angle";
      if (!ansatz_explicit) {
        ans = "strong";
      } else if (ansatz == "basic") {
        throw UsageError("qccnn3d uses strongly entangling layers (--ansatz strong)");
      }
    }
    spec.encoding = train::encoding_from_name(enc, threshold_t);
    spec.ansatz.kind = train::ansatz_kind_from_name(ans);
    spec.ansatz.n_layers = layers;
    spec.conv4_stride = conv4_stride;
    return spec;
  }

  void attach(CLI::App* cmd) {
    cmd->add_option("--arch", arch, "classical2d|qccnn2d|classical3d|qccnn3d");
    cmd->add_option("--encoding", encoding, "threshold|angle|higher-order");
    cmd->add_option("--ansatz", ansatz, "basic|strong");
    cmd->add_option("--layers", layers, "ansatz layer count");
    cmd->add_option("--threshold-t", threshold_t, "threshold encoding cutoff");
    cmd->add_option("--conv4-stride", conv4_stride, "stride of the fourth 3D layer");
  }

  void note_explicit(const CLI::App* cmd) {
    encoding_explicit = encoding_explicit || cmd->count("--encoding") > 0;
    ansatz_explicit = ansatz_explicit || cmd->count("--ansatz") > 0;
  }
};

int cmd_synth(const std::string& kind, std::int64_t n, std::uint64_t seed,
              const std::string& out) {
  data::Dataset ds;
  if (kind == "stripes") {
    ds = data::synth_stripes(n, seed);
  } else if (kind == "blobs") {
    ds = data::synth_blobs(n, seed);
  } else {
    throw UsageError("unknown synthetic kind '" + kind + "' (expected stripes|blobs)");
  }
  data::save(ds, out);
  std::printf("wrote %lld items of shape %s (%d classes) to %s\n",
              static_cast<long long>(ds.n_items()), nn::shape_str(ds.item_shape).c_str(),
              ds.n_classes, out.c_str());
  return 0;
}

int cmd_inspect(const std::string& path) {
  const data::Dataset ds = data::load(path);
  std::printf("items: %lld\n", static_cast<long long>(ds.n_items()));
  std::printf("item_shape: %s\n", nn::shape_str(ds.item_shape).c_str());
  std::printf("classes: %d\n", ds.n_classes);
  std::vector<std::int64_t> hist(static_cast<std::size_t>(ds.n_classes), 0);
  for (auto l : ds.labels) ++hist[l];
  for (int c = 0; c < ds.n_classes; ++c) {
    std::printf("class_%d: %lld\n", c, static_cast<long long>(hist[static_cast<std::size_t>(c)]));
  }
  double lo = ds.images.empty() ? 0.0 : ds.images[0], hi = lo, sum = 0.0;
  for (double v : ds.images) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    sum += v;
  }
  std::printf("value_min: %g\nvalue_max: %g\nvalue_mean: %g\n", lo, hi,
              sum / static_cast<double>(ds.images.empty() ? 1 : ds.images.size()));
  return 0;
}

int cmd_params(const ArchFlags& flags, const std::string& input, int classes, bool csv) {
  const auto shape = parse_shape(input);
  const auto arch = flags.resolve();
  RunRng rng(0);
  train::Model model = train::build_model(arch, shape, classes, rng);
  const auto rows = model.audit();
  if (csv) {
    std::printf("layer,params,description\n");
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::printf("%zu,%lld,%s\n", i, static_cast<long long>(rows[i].params),
                  rows[i].description.c_str());
    }
    std::printf("total,%lld,\n", static_cast<long long>(model.total_params()));
  } else {
    std::printf("%-6s %-10s %s\n", "layer", "params", "description");
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::printf("%-6zu %-10lld %s\n", i, static_cast<long long>(rows[i].params),
                  rows[i].description.c_str());
    }
    std::printf("%-6s %-10lld\n", "total", static_cast<long long>(model.total_params()));
  }
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, int trials, double shift) {
  const auto reports = gradcheck::run_all(seed, trials, shift);
  std::printf("%-32s %-8s %-12s %-12s %s\n", "component", "cases", "worst_rel", "worst_abs",
              "status");
  for (const auto& r : reports) {
    std::printf("%-32s %-8lld %-12.3e %-12.3e %s\n", r.component.c_str(),
                static_cast<long long>(r.cases), r.worst_rel, r.worst_abs,
                r.pass ? "pass" : "FAIL");
  }
  if (!gradcheck::all_pass(reports)) {
    std::fprintf(stderr, "gradient check failed\n");
    return kExitCheck;
  }
  return 0;
}

std::map<std::string, std::string> read_flat_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string stripped;
    for (char ch : line) {
      if (ch == '#') break;
      stripped += ch;
    }
    auto trim = [](std::string s) {
      while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(s.begin());
      while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.pop_back();
      return s;
    };
    stripped = trim(stripped);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) throw UsageError("config line is not 'key = value': " + line);
    kv[trim(stripped.substr(0, eq))] = trim(stripped.substr(eq + 1));
  }
  return kv;
}

// Flags given on the command line take precedence over config-file values.
void merge_config(const CLI::App* cmd, const std::string& path, ArchFlags& flags,
                  train::TrainConfig& cfg, std::string& seeds) {
  const auto kv = read_flat_config(path);
  for (const auto& [key, value] : kv) {
    const std::string flag = "--" + [&] {
      std::string f = key;
      for (auto& ch : f) {
        if (ch == '_') ch = '-';
      }
      return f;
    }();
    if (key == "arch") { if (!cmd->count(flag)) flags.arch = value; }
    else if (key == "encoding") {
      if (!cmd->count(flag)) flags.encoding = value;
      flags.encoding_explicit = true;
    }
    else if (key == "ansatz") {
      if (!cmd->count(flag)) flags.ansatz = value;
      flags.ansatz_explicit = true;
    }
    else if (key == "layers") { if (!cmd->count(flag)) flags.layers = std::stoi(value); }
    else if (key == "threshold_t") { if (!cmd->count(flag)) flags.threshold_t = std::stod(value); }
    else if (key == "conv4_stride") { if (!cmd->count(flag)) flags.conv4_stride = std::stoi(value); }
    else if (key == "epochs") { if (!cmd->count(flag)) cfg.epochs = std::stoi(value); }
    else if (key == "batch") { if (!cmd->count(flag)) cfg.batch = std::stoi(value); }
    else if (key == "lr") { if (!cmd->count(flag)) cfg.lr = std::stod(value); }
    else if (key == "workers") { if (!cmd->count(flag)) cfg.workers = std::stoi(value); }
    else if (key == "train_count") { if (!cmd->count(flag)) cfg.train_count = std::stoll(value); }
    else if (key == "val_count") { if (!cmd->count(flag)) cfg.val_count = std::stoll(value); }
    else if (key == "check_ranges") {
      if (!cmd->count(flag)) cfg.check_ranges = value == "true" || value == "1";
    }
    else if (key == "data") { if (!cmd->count(flag)) cfg.data_path = value; }
    else if (key == "out") { if (!cmd->count(flag)) cfg.out_dir = value; }
    else if (key == "seeds") { if (!cmd->count(flag)) seeds = value; }
    else throw UsageError("unknown config key '" + key + "' in " + path);
  }
}

int cmd_train(const CLI::App* cmd, ArchFlags flags, train::TrainConfig cfg, std::string seeds,
              const std::string& config_path) {
  flags.note_explicit(cmd);
  if (!config_path.empty()) merge_config(cmd, config_path, flags, cfg, seeds);
  if (cfg.data_path.empty()) throw UsageError("missing dataset path (--data or config 'data')");
  if (cfg.out_dir.empty()) throw UsageError("missing output directory (--out or config 'out')");
  cfg.arch = flags.resolve();
  cfg.seeds = parse_seeds(seeds);
  const auto result = train::run_experiment(cfg);
  std::printf("metrics: %s\n", result.metrics_csv_path.c_str());
  std::printf("aggregate: %s\n", result.aggregate_csv_path.c_str());
  std::printf("manifest: %s\n", result.manifest_path.c_str());
  if (cfg.check_ranges) {
    std::printf("range: checked=%lld violations=%lld min=%.17g max=%.17g\n",
                static_cast<long long>(result.range.checked),
                static_cast<long long>(result.range.violations), result.range.min_seen,
                result.range.max_seen);
  }
  if (result.any_diverged) {
    std::fprintf(stderr, "training diverged; see manifest\n");
    return kExitCheck;
  }
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_path,
             const std::string& split_name, int workers) {
  auto loaded = train::load_checkpoint(checkpoint);
  data::Dataset ds = data::load(data_path);

  const auto want_shape = loaded.config.at("item_shape");
  if (nn::shape_str(ds.item_shape) != want_shape) {
    throw ConfigError("dataset items are " + nn::shape_str(ds.item_shape) +
                      " but the checkpoint was trained on " + want_shape);
  }
  const data::NormStats stats{std::stod(loaded.config.at("norm_mean")),
                              std::stod(loaded.config.at("norm_std"))};
  data::apply_stats(ds, stats);

  const std::int64_t train_count = std::stoll(loaded.config.at("train_count"));
  const std::int64_t val_count = std::stoll(loaded.config.at("val_count"));
  const int batch = std::stoi(loaded.config.at("batch"));

  std::int64_t begin = 0, count = 0;
  if (split_name == "train") {
    begin = 0;
    count = std::min(train_count, ds.n_items());
  } else if (split_name == "val") {
    begin = train_count;
    count = std::min(val_count, ds.n_items() - train_count);
  } else {
    throw UsageError("unknown split '" + split_name + "' (expected train|val)");
  }
  if (count < 1) throw UsageError("split '" + split_name + "' is empty for this dataset");

  train::RunContext ctx{train::Mode::Eval, nullptr, workers, nullptr};
  const auto m = train::evaluate_split(loaded.model, ds, begin, count, batch, ctx);
  std::printf("split: %s\nitems: %lld\nloss: %s\naccuracy: %s\n", split_name.c_str(),
              static_cast<long long>(count), train::format_double(m.loss).c_str(),
              train::format_double(m.accuracy).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hybrid quantum-classical CNN engine"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic QTN1 dataset");
  std::string synth_kind;
  std::int64_t synth_n = 0;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  synth->add_option("--kind", synth_kind, "stripes|blobs")->required();
  synth->add_option("--n", synth_n, "item count")->required();
  synth->add_option("--seed", synth_seed, "generator seed")->required();
  synth->add_option("--out", synth_out, "output path")->required();

  // inspect
  auto* inspect = app.add_subcommand("inspect", "print QTN1 container header and stats");
  std::string inspect_path;
  inspect->add_option("--data", inspect_path, "container path")->required();

  // params
  auto* params = app.add_subcommand("params", "audit per-layer parameter counts");
  ArchFlags params_flags;
  params_flags.attach(params);
  std::string params_input = "1x28x28";
  int params_classes = 2;
  bool params_csv = false;
  params->add_option("--input", params_input, "item shape, e.g. 1x28x28 or 1x16x16x16");
  params->add_option("--classes", params_classes, "class count");
  params->add_flag("--csv", params_csv, "machine-readable output");

  // gradcheck
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference gradient self-check");
  std::uint64_t gc_seed = 1;
  int gc_trials = 25;
  double gc_shift = qccnn::qfilter::kParamShift;
  gradcheck_cmd->add_option("--seed", gc_seed, "random seed");
  gradcheck_cmd->add_option("--trials", gc_trials, "random configurations per filter combination");
  gradcheck_cmd->add_option("--perturb-shift", gc_shift, "override the parameter-shift constant")
      ->group("");  // negative-control hook for self-tests

  // train
  auto* train_cmd = app.add_subcommand("train", "run the training protocol");
  ArchFlags train_flags;
  train_flags.attach(train_cmd);
  qccnn::train::TrainConfig cfg;
  std::string train_seeds = "1,2,3,4,5";
  std::string train_config_path;
  train_cmd->add_option("--data", cfg.data_path, "QTN1 dataset path");
  train_cmd->add_option("--out", cfg.out_dir, "output directory");
  train_cmd->add_option("--epochs", cfg.epochs, "training epochs");
  train_cmd->add_option("--batch", cfg.batch, "batch size (default 8 for 2D, 64 for 3D)");
  train_cmd->add_option("--lr", cfg.lr, "Adam learning rate");
  train_cmd->add_option("--seeds", train_seeds, "comma-separated seeds");
  train_cmd->add_option("--workers", cfg.workers, "parallel workers (default 1, reproducible)");
  train_cmd->add_option("--train-count", cfg.train_count, "training items (default 80%)");
  train_cmd->add_option("--val-count", cfg.val_count, "validation items (default rest)");
  train_cmd->add_flag("--check-ranges", cfg.check_ranges,
                      "assert quantum outputs stay within [-1, 1]");
  train_cmd->add_option("--config", train_config_path,
                        "flat key = value file; flags take precedence");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  std::string eval_ckpt, eval_data, eval_split = "val";
  int eval_workers = 1;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
  eval_cmd->add_option("--data", eval_data, "QTN1 dataset path")->required();
  eval_cmd->add_option("--split", eval_split, "train|val (default val)");
  eval_cmd->add_option("--workers", eval_workers, "parallel workers");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_kind, synth_n, synth_seed, synth_out);
    if (inspect->parsed()) return cmd_inspect(inspect_path);
    if (params->parsed()) {
      params_flags.note_explicit(params);
      return cmd_params(params_flags, params_input, params_classes, params_csv);
    }
    if (gradcheck_cmd->parsed()) return cmd_gradcheck(gc_seed, gc_trials, gc_shift);
    if (train_cmd->parsed()) {
      return cmd_train(train_cmd, train_flags, cfg, train_seeds, train_config_path);
    }
    if (eval_cmd->parsed()) return cmd_eval(eval_ckpt, eval_data, eval_split, eval_workers);
  } catch (const qccnn::UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const qccnn::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const qccnn::FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const qccnn::DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitCheck;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return 0;
}
