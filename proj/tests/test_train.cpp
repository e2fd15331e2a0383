#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "qccnn/data.hpp"
#include "qccnn/errors.hpp"
#include "qccnn/io.hpp"
#include "qccnn/model.hpp"
#include "qccnn/train.hpp"
#include "support.hpp"

using namespace qccnn;
using namespace qccnn::train;

namespace {

// Tiny separable 2D dataset: class = sign of the top-left quadrant mean.
data::Dataset tiny2d(std::int64_t n, std::uint64_t seed) {
  RunRng rng(seed);
  data::Dataset ds;
  ds.item_shape = {1, 4, 4};
  ds.n_classes = 2;
  ds.images.resize(static_cast<std::size_t>(n * 16));
  ds.labels.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    ds.labels[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(label);
    auto img = ds.item(i);
    for (auto& v : img) v = normal(rng, 0.0, 0.3);
    const double bump = label == 0 ? 1.0 : -1.0;
    img[0] += bump;
    img[1] += bump;
    img[4] += bump;
    img[5] += bump;
  }
  return ds;
}

ArchSpec classical2d() {
  ArchSpec arch;
  arch.kind = ArchKind::Classical2D;
  return arch;
}

ArchSpec qccnn2d(qfilter::EncodingKind enc, qfilter::AnsatzKind ans, int layers) {
  ArchSpec arch;
  arch.kind = ArchKind::QCCNN2D;
  arch.encoding.kind = enc;
  arch.ansatz = {ans, layers};
  return arch;
}

}  // namespace

TEST_CASE("build: per-layer parameter counts") {
  RunRng rng(0);
  const std::vector<std::int64_t> shape2d{1, 28, 28};

  Model classical = build_model(classical2d(), shape2d, 11, rng);
  auto rows = classical.audit();
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].params == 20);
  CHECK(rows[2].params == 8635);

  Model basic = build_model(
      qccnn2d(qfilter::EncodingKind::HigherOrder, qfilter::AnsatzKind::BasicEntangling, 1),
      shape2d, 11, rng);
  CHECK(basic.audit()[0].params == 4);

  Model strong = build_model(
      qccnn2d(qfilter::EncodingKind::HigherOrder, qfilter::AnsatzKind::StronglyEntangling, 1),
      shape2d, 11, rng);
  CHECK(strong.audit()[0].params == 12);

  ArchSpec c3d;
  c3d.kind = ArchKind::Classical3D;
  Model classical3d = build_model(c3d, std::vector<std::int64_t>{1, 64, 64, 64}, 2, rng);
  bool found576 = false;
  for (const auto& row : classical3d.audit()) {
    if (row.description.find("g=8") != std::string::npos) {
      CHECK(row.params == 576);
      found576 = true;
    }
  }
  CHECK(found576);

  for (int layers : {1, 2}) {
    ArchSpec q3d;
    q3d.kind = ArchKind::QCCNN3D;
    q3d.encoding = qfilter::Encoding::angle();
    q3d.ansatz = {qfilter::AnsatzKind::StronglyEntangling, layers};
    Model m = build_model(q3d, std::vector<std::int64_t>{1, 16, 16, 16}, 2, rng);
    bool found = false;
    for (const auto& row : m.audit()) {
      if (row.description.find("quantum_conv") != std::string::npos) {
        CHECK(row.params == 192 * layers);
        found = true;
      }
    }
    CHECK(found);
  }
}

TEST_CASE("build: 3D pool planning keeps the full stack when feasible") {
  const auto full = plan_3d_pools(std::vector<std::int64_t>{1, 64, 64, 64}, 1);
  CHECK(full[0]);
  CHECK(full[1]);
  CHECK(full[2]);
  const auto paper = plan_3d_pools(std::vector<std::int64_t>{1, 64, 128, 128}, 1);
  CHECK((paper[0] && paper[1] && paper[2]));
  // 16^3 cannot carry all pools; the planner keeps the deepest one.
  const auto small = plan_3d_pools(std::vector<std::int64_t>{1, 16, 16, 16}, 1);
  CHECK_FALSE(small[0]);
  CHECK_FALSE(small[1]);
  CHECK(small[2]);
}

TEST_CASE("build: infeasible shapes raise a configuration error naming the layer") {
  RunRng rng(0);
  CHECK_THROWS_WITH_AS(
      build_model(classical2d(), std::vector<std::int64_t>{1, 1, 1}, 2, rng),
      doctest::Contains("conv2d"), ConfigError);
  ArchSpec c3d;
  c3d.kind = ArchKind::Classical3D;
  CHECK_THROWS_AS(build_model(c3d, std::vector<std::int64_t>{1, 6, 6, 6}, 2, rng), ConfigError);
  CHECK_THROWS_AS(build_model(c3d, std::vector<std::int64_t>{1, 4, 4, 4}, 2, rng), ConfigError);
}

TEST_CASE("train_one: zero learning rate leaves parameters bit-identical") {
  data::Dataset ds = tiny2d(8, 3);
  data::normalize(ds, 6);
  RunRng rng(1);
  Model model = build_model(classical2d(), ds.item_shape, 2, rng);

  auto blocks = model.param_blocks();
  std::vector<std::vector<double>> before;
  for (const auto& b : blocks) before.push_back(*b.values);

  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch = 4;
  cfg.lr = 0.0;
  Optimizer opt;
  opt.cfg.lr = 0.0;
  train_one(model, ds, {6, 2}, cfg, 1, opt, rng);

  for (std::size_t i = 0; i < blocks.size(); ++i) {
    REQUIRE(blocks[i].values->size() == before[i].size());
    for (std::size_t j = 0; j < before[i].size(); ++j) {
      CHECK((*blocks[i].values)[j] == before[i][j]);
    }
  }
}

TEST_CASE("train_one: a single item is overfit with strictly decreasing loss") {
  data::Dataset ds = tiny2d(2, 4);
  data::normalize(ds, 1);
  RunRng rng(2);
  Model model = build_model(classical2d(), ds.item_shape, 2, rng);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch = 1;
  cfg.lr = 0.01;
  Optimizer opt;
  opt.cfg.lr = 0.01;
  const auto result = train_one(model, ds, {1, 1}, cfg, 1, opt, rng);
  REQUIRE(result.rows.size() == 10);
  double prev = 1e300;
  for (const auto& row : result.rows) {
    if (row.split != Split::Train) continue;
    CHECK(row.loss < prev);
    prev = row.loss;
  }
}

TEST_CASE("train_one: fixed seed reruns are bit-identical, including quantum layers") {
  data::Dataset ds = tiny2d(10, 5);
  data::normalize(ds, 8);
  const auto arch =
      qccnn2d(qfilter::EncodingKind::HigherOrder, qfilter::AnsatzKind::BasicEntangling, 1);

  auto run_once = [&]() {
    RunRng rng(7);
    Model model = build_model(arch, ds.item_shape, 2, rng);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch = 4;
    Optimizer opt;
    auto r = train_one(model, ds, {8, 2}, cfg, 7, opt, rng);
    return r.rows;
  };
  const auto a = run_once();
  const auto b = run_once();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].loss == b[i].loss);
    CHECK(a[i].accuracy == b[i].accuracy);
  }
}

TEST_CASE("aggregate: hand-computed mean and population std") {
  std::vector<MetricsRow> rows{
      {1, 1, Split::Train, 1.0, 0.5},
      {2, 1, Split::Train, 3.0, 0.7},
      {1, 1, Split::Val, 2.0, 0.4},
      {2, 1, Split::Val, 2.0, 0.8},
  };
  const auto agg = aggregate(rows);
  REQUIRE(agg.size() == 4);
  CHECK(agg[0].metric == "loss");
  CHECK(agg[0].mean == doctest::Approx(2.0));
  CHECK(agg[0].stddev == doctest::Approx(1.0));  // population: sqrt(((1-2)^2+(3-2)^2)/2)
  CHECK(agg[1].metric == "accuracy");
  CHECK(agg[1].mean == doctest::Approx(0.6));
  CHECK(agg[1].stddev == doctest::Approx(0.1));
  CHECK(agg[2].split == Split::Val);
  CHECK(agg[2].stddev == doctest::Approx(0.0));

  // Single seed: std exactly 0.
  std::vector<MetricsRow> single{{5, 1, Split::Train, 1.25, 0.5}};
  CHECK(aggregate(single)[0].stddev == 0.0);

  // Permuting seeds leaves aggregates identical.
  std::vector<MetricsRow> swapped{rows[1], rows[0], rows[3], rows[2]};
  const auto agg2 = aggregate(swapped);
  REQUIRE(agg2.size() == agg.size());
  for (std::size_t i = 0; i < agg.size(); ++i) {
    CHECK(agg2[i].mean == agg[i].mean);
    CHECK(agg2[i].stddev == agg[i].stddev);
  }
}

TEST_CASE("run_experiment: files, aggregation, and bit-identical reruns") {
  testsupport::TempDir tmp;
  const data::Dataset ds = tiny2d(12, 6);
  const std::string data_path = tmp.file("tiny.qtn");
  data::save(ds, data_path);

  TrainConfig cfg;
  cfg.arch = classical2d();
  cfg.data_path = data_path;
  cfg.out_dir = tmp.file("run1");
  cfg.epochs = 2;
  cfg.batch = 4;
  cfg.seeds = {1, 2};
  const auto result = run_experiment(cfg);
  CHECK_FALSE(result.any_diverged);
  REQUIRE(result.rows.size() == 2 * 2 * 2);  // seeds x epochs x splits

  const std::string csv = testsupport::read_text(result.metrics_csv_path);
  CHECK(csv.rfind("seed,epoch,split,loss,accuracy\n", 0) == 0);
  const std::string agg_text = testsupport::read_text(result.aggregate_csv_path);
  CHECK(agg_text.rfind("epoch,split,metric,mean,std\n", 0) == 0);
  CHECK(testsupport::read_text(result.manifest_path).find("wall_seconds") != std::string::npos);

  // Aggregate rows match a direct aggregation of the per-seed rows.
  const auto direct = aggregate(result.rows);
  REQUIRE(direct.size() == result.aggregate_rows.size());
  for (std::size_t i = 0; i < direct.size(); ++i) {
    CHECK(direct[i].mean == result.aggregate_rows[i].mean);
    CHECK(direct[i].stddev == result.aggregate_rows[i].stddev);
  }

  // Rerun writes byte-identical CSVs.
  cfg.out_dir = tmp.file("run2");
  const auto again = run_experiment(cfg);
  CHECK(testsupport::read_text(again.metrics_csv_path) == csv);
  CHECK(testsupport::read_text(again.aggregate_csv_path) == agg_text);

  // No leftover temp files from atomic writes.
  for (const auto& entry : std::filesystem::directory_iterator(tmp.file("run1"))) {
    CHECK(entry.path().string().find(".tmp") == std::string::npos);
  }
}

TEST_CASE("checkpoint: save, load, and bit-exact evaluation") {
  testsupport::TempDir tmp;
  data::Dataset ds = tiny2d(10, 8);
  const data::NormStats stats = data::normalize(ds, 8);

  RunRng rng(3);
  const auto arch =
      qccnn2d(qfilter::EncodingKind::Angle, qfilter::AnsatzKind::StronglyEntangling, 1);
  Model model = build_model(arch, ds.item_shape, 2, rng);
  TrainConfig cfg;
  cfg.arch = arch;
  cfg.epochs = 1;
  cfg.batch = 4;
  Optimizer opt;
  train_one(model, ds, {8, 2}, cfg, 3, opt, rng);

  RunContext ctx{Mode::Eval, nullptr, 1, nullptr};
  const auto before = evaluate_split(model, ds, 8, 2, 4, ctx);

  const std::string path = tmp.file("model.qck");
  save_checkpoint(path, model, &opt,
                  config_echo(cfg, ds.item_shape, 2, {8, 2}, stats, 3));

  auto loaded = load_checkpoint(path);
  CHECK(loaded.config.at("arch") == "qccnn2d");
  CHECK(loaded.opt.step_count == opt.step_count);
  const auto after = evaluate_split(loaded.model, ds, 8, 2, 4, ctx);
  CHECK(after.loss == before.loss);
  CHECK(after.accuracy == before.accuracy);

  // Corrupted file: flip a payload byte -> block name/count mismatch or bad
  // values; truncation must throw.
  auto bytes = io::read_file(path);
  auto truncated = bytes;
  truncated.resize(truncated.size() / 2);
  const std::string bad_path = tmp.file("trunc.qck");
  io::atomic_write_file(bad_path, truncated.data(), truncated.size());
  CHECK_THROWS_AS(load_checkpoint(bad_path), FormatError);

  // Version mismatch is called out explicitly.
  auto versioned = bytes;
  versioned[4] = 7;
  const std::string ver_path = tmp.file("ver.qck");
  io::atomic_write_file(ver_path, versioned.data(), versioned.size());
  CHECK_THROWS_WITH_AS(load_checkpoint(ver_path), doctest::Contains("version"), FormatError);

  auto bad_magic = bytes;
  bad_magic[0] = 'x';
  const std::string magic_path = tmp.file("magic.qck");
  io::atomic_write_file(magic_path, bad_magic.data(), bad_magic.size());
  CHECK_THROWS_AS(load_checkpoint(magic_path), FormatError);
}

TEST_CASE("divergence aborts with rows kept and diverged flag set") {
  data::Dataset ds = tiny2d(8, 9);
  data::normalize(ds, 6);
  RunRng rng(4);
  Model model = build_model(classical2d(), ds.item_shape, 2, rng);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch = 2;
  cfg.lr = 1e300;  // overflow the logits into non-finite loss
  Optimizer opt;
  opt.cfg.lr = 1e300;
  const auto result = train_one(model, ds, {6, 2}, cfg, 1, opt, rng);
  CHECK(result.diverged);
  CHECK(result.completed_epochs < 4);
}

TEST_CASE("evaluate_split validates ranges") {
  data::Dataset ds = tiny2d(6, 10);
  data::normalize(ds, 4);
  RunRng rng(5);
  Model model = build_model(classical2d(), ds.item_shape, 2, rng);
  RunContext ctx{Mode::Eval, nullptr, 1, nullptr};
  CHECK_THROWS_AS(evaluate_split(model, ds, 0, 0, 2, ctx), UsageError);
  CHECK_THROWS_AS(evaluate_split(model, ds, 4, 5, 2, ctx), UsageError);
}
