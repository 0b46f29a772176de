#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fisheyehdk/checkpoint.hpp"
#include "fisheyehdk/config.hpp"
#include "fisheyehdk/dataset.hpp"
#include "fisheyehdk/experiment.hpp"

namespace fs = std::filesystem;

namespace {

using namespace fhdk;

ExperimentConfig tiny_config(OffsetMode mode = OffsetMode::Hdk) {
  ExperimentConfig cfg;
  cfg.dataset.train_size = 4;
  cfg.dataset.val_size = 2;
  cfg.dataset.height = 24;
  cfg.dataset.width = 24;
  cfg.dataset.num_classes = 3;
  cfg.dataset.f = 20.0;
  cfg.model.channels = {6, 6};
  cfg.model.mode = mode;
  cfg.model.downsample = 1;
  cfg.optim.epochs = 2;
  cfg.optim.batch_size = 2;
  return cfg;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fisheyehdk_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(Config, ParsesSectionsArraysAndComments) {
  const KeyValues kv = parse_key_values(
      "seed = 3 # trailing\n"
      "[dataset]\n"
      "f = 50.5\n"
      "[model]\n"
      "mode = \"rdc\"\n"
      "channels = [8, 16, 8]\n"
      "name = \"has # hash\"\n");
  EXPECT_EQ(kv.at("seed"), "3");
  EXPECT_EQ(kv.at("dataset.f"), "50.5");
  EXPECT_EQ(kv.at("model.mode"), "rdc");
  EXPECT_EQ(kv.at("model.name"), "has # hash");
  ExperimentConfig cfg;
  KeyValues usable = kv;
  usable.erase("model.name");
  cfg.apply(usable);
  EXPECT_EQ(cfg.seed, 3u);
  EXPECT_EQ(cfg.model.mode, OffsetMode::Rdc);
  EXPECT_EQ(cfg.model.channels, (std::vector<int>{8, 16, 8}));
}

TEST(Config, ReportsLineNumbers) {
  try {
    parse_key_values("seed = 1\n[dataset\n");
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  ExperimentConfig cfg;
  EXPECT_THROW(cfg.apply({{"model.nonsense", "1"}}), std::invalid_argument);
  EXPECT_THROW(cfg.apply({{"model.mode", "fancy"}}), std::invalid_argument);
}

TEST(Config, Validation) {
  ExperimentConfig cfg = tiny_config();
  EXPECT_NO_THROW(cfg.validate());
  cfg.model.deformable_layers = {5};
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = tiny_config();
  cfg.model.kernel = 4;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = tiny_config(OffsetMode::Rdc);
  cfg.model.freeze_hyperbolic = true;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = tiny_config();
  cfg.optim.momentum = 1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Config, PlacementPresets) {
  ModelSpec m;
  m.channels = {8, 8, 8, 8};
  m.placement = "last";
  m.placement_count = 3;
  EXPECT_EQ(m.resolved_deformable_layers(), (std::vector<int>{1, 2, 3}));
  m.placement = "first";
  m.placement_count = 1;
  EXPECT_EQ(m.resolved_deformable_layers(), (std::vector<int>{0}));
  m.mode = OffsetMode::None;
  EXPECT_TRUE(m.resolved_deformable_layers().empty());
}

TEST(Config, JsonRoundTripAndHash) {
  ExperimentConfig cfg = tiny_config(OffsetMode::Rdc);
  cfg.compare_seeds = {4, 9};
  const ExperimentConfig back = ExperimentConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.to_json(), cfg.to_json());
  EXPECT_EQ(back.hash(), cfg.hash());
  cfg.seed += 1;
  EXPECT_NE(back.hash(), cfg.hash());
}

TEST(Dataset, DeterministicPerSeed) {
  const FisheyeProfile p = FisheyeProfile::centered(30.0, 32, 32);
  const auto a = generate_toy_dataset(3, 32, 32, 4, p, 11);
  const auto b = generate_toy_dataset(3, 32, 32, 4, p, 11);
  const auto c = generate_toy_dataset(3, 32, 32, 4, p, 12);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(a[i].fisheye.image.pixels.storage(), b[i].fisheye.image.pixels.storage());
    EXPECT_EQ(a[i].fisheye.image.labels, b[i].fisheye.image.labels);
  }
  EXPECT_NE(a[0].perspective.pixels.storage(), c[0].perspective.pixels.storage());
}

TEST(Dataset, TwoClassLabelsAndHistogram) {
  const FisheyeProfile p = FisheyeProfile::centered(25.0, 32, 32);
  const auto s = generate_toy_dataset(4, 32, 32, 2, p, 5);
  std::vector<const std::vector<std::uint8_t>*> maps;
  std::size_t non_void = 0;
  for (const auto& x : s) {
    maps.push_back(&x.fisheye.image.labels);
    for (auto l : x.fisheye.image.labels) {
      EXPECT_TRUE(l == 0 || l == 1 || l == kVoidLabel);
      non_void += l != kVoidLabel;
    }
  }
  const auto h = class_histogram(maps, 2);
  EXPECT_EQ(std::accumulate(h.begin(), h.end(), std::uint64_t{0}), non_void);
  EXPECT_EQ(h, class_histogram(maps, 2));
  EXPECT_GT(h[1], 0u);
}

TEST(Dataset, PaddingIsVoid) {
  const auto s = generate_toy_dataset(2, 18, 22, 3, FisheyeProfile::centered(30.0, 18, 22), 5);
  const SegmentationSet set = to_segmentation_set(s, 3, 4);
  EXPECT_EQ(set.images.shape(), (std::vector<int>{2, 3, 20, 24}));
  EXPECT_EQ(set.labels.at(1, 19, 5), kVoidLabel);
  EXPECT_EQ(set.labels.at(0, 3, 23), kVoidLabel);
  EXPECT_EQ(set.images.at(0, 0, 19, 23), 0.0);
}

TEST(Dataset, SaveLoadRoundTrip) {
  const fs::path dir = scratch_dir("dataset");
  const auto s = generate_toy_dataset(2, 16, 16, 3, FisheyeProfile::centered(30.0, 16, 16), 8);
  save_dataset(dir.string(), s, 3);
  const SegmentationSet loaded = load_dataset(dir.string());
  const SegmentationSet direct = to_segmentation_set(s, 3);
  EXPECT_EQ(loaded.labels.labels, direct.labels.labels);
  EXPECT_EQ(loaded.valid, direct.valid);
  // PNG stores 8 bits per channel.
  EXPECT_LT(max_abs_diff(loaded.images.values(), direct.images.values()), 0.5 / 255 + 1e-12);
}

TEST(Training, EpochZeroLossIsLogK) {
  ExperimentConfig cfg = tiny_config();
  const DataSplits d = make_datasets(cfg, 2);
  TrainOptions o;
  o.eval_each_epoch = false;
  cfg.optim.epochs = 1;
  const TrainResult r = train_model(cfg, d.train, nullptr, o);
  ASSERT_EQ(r.curve.size(), 2u);
  // Zero head gives uniform softmax; weights are normalised per batch so
  // the loss is ln K up to the weighting of the batch.
  const double w_mean_bound = *std::max_element(r.class_weights.begin(), r.class_weights.end());
  EXPECT_GT(r.curve[0].train_loss, 0.0);
  EXPECT_LE(r.curve[0].train_loss, w_mean_bound * std::log(3.0) + 1e-12);
  std::vector<double> ones(3, 1.0);
  EXPECT_NEAR(evaluate_loss(ToyModel(cfg.model, 3, 3, cfg.seed), d.train, ones, 2), std::log(3.0), 1e-12);
}

TEST(Training, FrozenHdkMatchesRegularCnn) {
  ExperimentConfig none = tiny_config(OffsetMode::None);
  ExperimentConfig frozen = tiny_config(OffsetMode::Hdk);
  frozen.model.freeze_hyperbolic = true;
  none.optim.epochs = frozen.optim.epochs = 3;
  const DataSplits d = make_datasets(none, 2);
  const TrainResult a = train_model(none, d.train, &d.val);
  const TrainResult b = train_model(frozen, d.train, &d.val);
  ASSERT_EQ(a.curve.size(), b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    EXPECT_EQ(a.curve[i].train_loss, b.curve[i].train_loss) << "epoch " << i;
    EXPECT_EQ(a.curve[i].val_miou, b.curve[i].val_miou) << "epoch " << i;
  }
}

TEST(Training, OverfitsSingleSample) {
  ExperimentConfig cfg = tiny_config();
  cfg.dataset.train_size = 1;
  cfg.dataset.height = cfg.dataset.width = 32;
  cfg.model.channels = {16, 16, 16};
  cfg.optim.epochs = 300;
  cfg.optim.batch_size = 1;
  cfg.optim.encoder_lr = cfg.optim.decoder_lr = cfg.optim.hyperbolic_lr = 0.05;
  cfg.optim.weight_decay = 0.0;
  const DataSplits d = make_datasets(cfg, 2);
  TrainOptions o;
  o.eval_each_epoch = false;
  const TrainResult r = train_model(cfg, d.train, nullptr, o);
  EXPECT_LT(r.curve.back().train_loss, 0.05);
  EXPECT_GT(miou(evaluate(r.model, d.train)), 0.9);
}

TEST(Evaluation, UntrainedModelIsNearChance) {
  ExperimentConfig cfg = tiny_config();
  cfg.dataset.num_classes = 4;
  const DataSplits d = make_datasets(cfg, 2);
  // Perturb the zero head so predictions are not a single constant class.
  ToyModel m(cfg.model, 3, 4, 3);
  for (auto& p : m.parameters()) {
    if (p.name == "head.weight") {
      for (std::size_t i = 0; i < p.tensor->size(); ++i) (*p.tensor)[i] = std::sin(1.7 * i);
    }
  }
  EXPECT_LT(miou(evaluate(m, d.val)), 0.5);
  EXPECT_LT(miou(evaluate(ToyModel(cfg.model, 3, 4, 3), d.val)), 0.5);
}

TEST(Evaluation, Errors) {
  ExperimentConfig cfg = tiny_config();
  const DataSplits d = make_datasets(cfg, 2);
  const ToyModel m(cfg.model, 3, 3, 1);
  EXPECT_THROW(evaluate(m, SegmentationSet{}), std::invalid_argument);
  const ToyModel wrong(cfg.model, 3, 5, 1);
  EXPECT_THROW(evaluate(wrong, d.val), std::invalid_argument);
}

TEST(Checkpoint, RoundTripGivesIdenticalMetrics) {
  const fs::path dir = scratch_dir("ckpt");
  ExperimentConfig cfg = tiny_config();
  cfg.out_dir = dir.string();
  const TrainResult r = train(cfg);
  const Checkpoint ck = load_checkpoint((dir / "checkpoint.fhdk").string());
  EXPECT_EQ(ck.config.hash(), cfg.hash());
  EXPECT_EQ(ck.class_weights, r.class_weights);
  const DataSplits d = make_datasets(cfg, ck.model.required_multiple());
  const ConfusionMatrix a = evaluate(r.model, d.val), b = evaluate(ck.model, d.val);
  for (int t = 0; t < 3; ++t) {
    for (int p = 0; p < 3; ++p) EXPECT_EQ(a.count(t, p), b.count(t, p));
  }
  EXPECT_TRUE(fs::exists(dir / "loss_curve.csv"));
  EXPECT_TRUE(fs::exists(dir / "metrics.csv"));
  const std::string curve = slurp(dir / "loss_curve.csv");
  EXPECT_EQ(curve.substr(0, curve.find('\n')), "epoch,train_loss,val_miou");

  std::string bytes = slurp(dir / "checkpoint.fhdk");
  bytes[0] = 'X';
  std::ofstream(dir / "bad.fhdk", std::ios::binary) << bytes;
  EXPECT_THROW(load_checkpoint((dir / "bad.fhdk").string()), std::runtime_error);
  std::ofstream(dir / "short.fhdk", std::ios::binary) << slurp(dir / "checkpoint.fhdk").substr(0, 200);
  EXPECT_THROW(load_checkpoint((dir / "short.fhdk").string()), std::runtime_error);
}

TEST(Training, DeterministicOutputs) {
  const fs::path a = scratch_dir("det_a"), b = scratch_dir("det_b");
  ExperimentConfig cfg = tiny_config(OffsetMode::Rdc);
  cfg.out_dir = a.string();
  train(cfg);
  cfg.out_dir = b.string();
  train(cfg);
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
  EXPECT_EQ(slurp(a / "loss_curve.csv"), slurp(b / "loss_curve.csv"));
}

TEST(Training, NanLossNamesTensor) {
  ExperimentConfig cfg = tiny_config(OffsetMode::None);
  cfg.optim.encoder_lr = cfg.optim.decoder_lr = 1e200;
  cfg.optim.epochs = 4;
  const DataSplits d = make_datasets(cfg, 1);
  TrainOptions o;
  o.eval_each_epoch = false;
  try {
    train_model(cfg, d.train, nullptr, o);
    FAIL() << "expected a numerical failure";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("block"), std::string::npos) << e.what();
  }
}

TEST(DumpKernels, UntrainedModelGivesRegularGrid) {
  const fs::path dir = scratch_dir("dump");
  ExperimentConfig cfg = tiny_config();
  const DataSplits d = make_datasets(cfg, 2);
  const ToyModel m(cfg.model, 3, 3, 1);
  ToyModel zeroed = m;
  for (auto& p : zeroed.parameters()) {
    if (p.group == ParamGroup::HyperbolicWeight) p.tensor->fill(0.0);
  }
  Tensor image({3, 24, 24});
  std::copy_n(d.val.images.data(), image.size(), image.data());
  const std::vector<std::pair<int, int>> px{{12, 12}, {0, 0}, {23, 5}};
  const auto rows = dump_kernels(zeroed, image, px, 0, (dir / "k.csv").string(), (dir / "k.png").string());
  ASSERT_EQ(rows.size(), px.size() * 9);
  for (const auto& r : rows) {
    EXPECT_EQ(r.dy, 0.0);
    EXPECT_EQ(r.dx, 0.0);
    EXPECT_EQ(r.y, r.pixel_y + r.tap / 3 - 1);
    EXPECT_EQ(r.x, r.pixel_x + r.tap % 3 - 1);
  }
  const std::string csv = slurp(dir / "k.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 27);
  EXPECT_TRUE(fs::exists(dir / "k.png"));
  EXPECT_THROW(dump_kernels(m, image, {{24, 0}}, 0, "", ""), std::out_of_range);
}

TEST(Compare, RowCountAndDeterminism) {
  ExperimentConfig cfg = tiny_config();
  cfg.optim.epochs = 1;
  cfg.compare_modes = {OffsetMode::None, OffsetMode::Hdk, OffsetMode::Hdk};
  cfg.compare_seeds = {1, 2};
  TrainOptions o;
  o.eval_each_epoch = false;
  const auto rows = compare_modes(cfg, o);
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[2].miou, rows[4].miou);
  EXPECT_EQ(rows[3].miou, rows[5].miou);
  const auto summary = summarize(rows);
  ASSERT_EQ(summary.size(), 2u);
  EXPECT_EQ(summary[1].runs, 4);
  const fs::path dir = scratch_dir("compare");
  write_compare_csv((dir / "c.csv").string(), rows);
  const std::string csv = slurp(dir / "c.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "mode,seed,miou");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FISHEYEHDK_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch_dir("cli");
  const std::string small =
      " --set dataset.train_size=2 --set dataset.val_size=1 --set dataset.height=16 --set dataset.width=16"
      " --set model.channels=[4,4] --set model.downsample=1 --set optim.batch_size=1";
  EXPECT_EQ(run_cli("train --out " + (dir / "run").string() + " --epochs 1" + small), 0);
  EXPECT_TRUE(fs::exists(dir / "run" / "checkpoint.fhdk"));
  EXPECT_EQ(run_cli("eval --checkpoint " + (dir / "run" / "checkpoint.fhdk").string() + " --out " +
                    (dir / "eval").string()),
            0);
  EXPECT_EQ(run_cli("dump-kernels --checkpoint " + (dir / "run" / "checkpoint.fhdk").string() + " --out " +
                    (dir / "dump").string() + " --pixel 3,4"),
            0);
  EXPECT_EQ(run_cli("gen-data --out " + (dir / "data").string() + small + " --f 40"), 0);
  EXPECT_EQ(run_cli("warp --input " + (dir / "data" / "train" / "0000_persp.png").string() + " --out " +
                    (dir / "warp").string() + " --f 30"),
            0);
  EXPECT_EQ(run_cli("train --out " + (dir / "bad").string() + " --epochs 0"), 1);
  EXPECT_EQ(run_cli("train --out " + (dir / "bad").string() + " --mode fancy"), 1);
  EXPECT_EQ(run_cli("train --out " + (dir / "bad").string() + " --set model.kernel=4"), 1);
  EXPECT_EQ(run_cli("dump-kernels --checkpoint " + (dir / "run" / "checkpoint.fhdk").string() + " --out " +
                    (dir / "dump2").string() + " --pixel 99,0"),
            1);
  EXPECT_EQ(run_cli("train --out " + (dir / "nan").string() + " --epochs 3 --mode none" + small +
                    " --set optim.encoder_lr=1e200 --set optim.decoder_lr=1e200"),
            2);
  EXPECT_EQ(run_cli("gradcheck --seed 3"), 0);
}

}  // namespace
