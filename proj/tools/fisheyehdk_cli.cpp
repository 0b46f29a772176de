// fisheyehdk: data generation, fisheye warping, training and analysis.
//
// Exit status: 0 success, 1 invalid input or configuration, 2 numerical
// failure (non-finite training values or a failed gradient check).

#include <cmath>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fisheyehdk/checkpoint.hpp"
#include "fisheyehdk/config.hpp"
#include "fisheyehdk/dataset.hpp"
#include "fisheyehdk/experiment.hpp"
#include "fisheyehdk/fisheye.hpp"
#include "fisheyehdk/gradcheck.hpp"
#include "fisheyehdk/image_io.hpp"

namespace fs = std::filesystem;
using namespace fhdk;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitNumerical = 2;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::string> mode;
  std::optional<double> f;
  std::optional<int> epochs;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* app, CommonFlags& fl, bool with_training) {
  app->add_option("--config", fl.config, "Experiment config file")->check(CLI::ExistingFile);
  app->add_option("--seed", fl.seed, "Seed (model seed for training, dataset seed for gen-data)");
  app->add_option("--out", fl.out, "Output directory");
  app->add_option("--f", fl.f, "Fisheye focal length in pixels");
  app->add_option("--set", fl.overrides, "Config override section.key=value (repeatable)");
  if (with_training) {
    app->add_option("--mode", fl.mode, "Offset predictor")->check(CLI::IsMember({"none", "rdc", "hdk"}));
    app->add_option("--epochs", fl.epochs, "Training epochs");
  }
}

ExperimentConfig resolve_config(const CommonFlags& fl) {
  ExperimentConfig cfg;
  if (!fl.config.empty()) cfg.apply(load_key_values(fl.config));
  KeyValues kv;
  for (const std::string& o : fl.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects section.key=value, got '" + o + "'");
    std::string value = o.substr(eq + 1);
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    kv[o.substr(0, eq)] = value;
  }
  cfg.apply(kv);
  if (fl.seed) cfg.seed = *fl.seed;
  if (!fl.out.empty()) cfg.out_dir = fl.out;
  if (fl.mode) cfg.model.mode = parse_mode(*fl.mode);
  if (fl.f) cfg.dataset.f = *fl.f;
  if (fl.epochs) cfg.optim.epochs = *fl.epochs;
  cfg.validate();
  return cfg;
}

LabeledImage load_labeled(const std::string& image, const std::string& labels) {
  LabeledImage img;
  img.pixels = read_png_image(image);
  if (labels.empty()) {
    img.labels.assign(static_cast<std::size_t>(img.height()) * img.width(), 0);
  } else {
    int h = 0, w = 0;
    img.labels = read_png_labels(labels, h, w);
    if (h != img.height() || w != img.width()) throw std::invalid_argument("label map size does not match the image");
  }
  return img;
}

void write_warp(const fs::path& dir, const WarpResult& r) {
  fs::create_directories(dir);
  write_png_image((dir / "image.png").string(), r.image.pixels);
  write_png_labels((dir / "labels.png").string(), r.image.labels, r.image.height(), r.image.width());
  write_png_mask((dir / "valid.png").string(), r.valid, r.image.height(), r.image.width());
}

std::pair<int, int> parse_pixel(const std::string& s) {
  const auto comma = s.find(',');
  if (comma == std::string::npos) throw std::invalid_argument("--pixel expects y,x, got '" + s + "'");
  return {std::stoi(s.substr(0, comma)), std::stoi(s.substr(comma + 1))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hyperbolic deformable kernels for fisheye segmentation (toy scale)"};
  app.require_subcommand(1);

  CommonFlags gen_fl, train_fl, compare_fl, warp_fl, rect_fl, eval_fl, dump_fl;

  auto* gen = app.add_subcommand("gen-data", "Render the synthetic fisheye dataset to PNG files");
  add_common(gen, gen_fl, false);

  std::string warp_input, warp_labels;
  auto* warp = app.add_subcommand("warp", "Warp a perspective PNG into the fisheye frame");
  add_common(warp, warp_fl, false);
  warp->add_option("--input", warp_input, "Perspective image")->required()->check(CLI::ExistingFile);
  warp->add_option("--labels", warp_labels, "Label map")->check(CLI::ExistingFile);

  std::string rect_input, rect_labels, rect_valid;
  auto* rect = app.add_subcommand("rectify", "Map a fisheye PNG back to the perspective frame");
  add_common(rect, rect_fl, false);
  rect->add_option("--input", rect_input, "Fisheye image")->required()->check(CLI::ExistingFile);
  rect->add_option("--labels", rect_labels, "Label map")->check(CLI::ExistingFile);
  rect->add_option("--valid", rect_valid, "Validity mask of the fisheye image")->check(CLI::ExistingFile);

  auto* train_cmd = app.add_subcommand("train", "Train a toy model; writes checkpoint and CSV logs");
  add_common(train_cmd, train_fl, true);

  std::string eval_ckpt, eval_data;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint; writes metrics.csv");
  add_common(eval, eval_fl, false);
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", eval_data, "Dataset directory from gen-data (default: regenerate the validation split)");

  std::string dump_ckpt, dump_image;
  std::vector<std::string> dump_pixels;
  int dump_layer = 0;
  auto* dump = app.add_subcommand("dump-kernels", "Write tap positions and an overlay for selected pixels");
  add_common(dump, dump_fl, false);
  dump->add_option("--checkpoint", dump_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  dump->add_option("--image", dump_image, "Fisheye image (default: first validation sample)")->check(CLI::ExistingFile);
  dump->add_option("--pixel", dump_pixels, "Pixel as y,x (repeatable; default centre and top-left)");
  dump->add_option("--layer", dump_layer, "Index among the deformable blocks");

  auto* compare = app.add_subcommand("compare", "Train every configured mode and seed; writes compare.csv");
  add_common(compare, compare_fl, true);

  std::uint64_t gc_seed = 1;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
  gradcheck->add_option("--seed", gc_seed, "Seed for the random instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (gen->parsed()) {
      CommonFlags fl = gen_fl;
      const std::optional<std::uint64_t> data_seed = fl.seed;
      fl.seed.reset();
      ExperimentConfig cfg = resolve_config(fl);
      if (data_seed) cfg.dataset.seed = *data_seed;
      const DataSplits d = make_datasets(cfg, 1);
      save_dataset((fs::path(cfg.out_dir) / "train").string(), d.train_samples, cfg.dataset.num_classes);
      if (!d.val_samples.empty()) {
        save_dataset((fs::path(cfg.out_dir) / "val").string(), d.val_samples, cfg.dataset.num_classes);
      }
      const auto hist = d.train.histogram();
      std::cout << "wrote " << d.train_samples.size() << " train and " << d.val_samples.size()
                << " val samples to " << cfg.out_dir << "\nclass histogram (train):";
      for (auto c : hist) std::cout << ' ' << c;
      std::cout << '\n';
    } else if (warp->parsed() || rect->parsed()) {
      const bool forward = warp->parsed();
      const CommonFlags& fl = forward ? warp_fl : rect_fl;
      LabeledImage img = load_labeled(forward ? warp_input : rect_input, forward ? warp_labels : rect_labels);
      FisheyeProfile profile = FisheyeProfile::centered(fl.f.value_or(200.0), img.height(), img.width());
      std::vector<std::uint8_t> valid;
      if (!forward && !rect_valid.empty()) {
        int h = 0, w = 0;
        valid = read_png_mask(rect_valid, h, w);
        if (h != img.height() || w != img.width()) throw std::invalid_argument("validity mask size does not match the image");
      }
      const WarpResult r = forward ? warp_to_fisheye(img, profile) : rectify(img, profile, valid.empty() ? nullptr : &valid);
      write_warp(fl.out.empty() ? fs::path(forward ? "warp_out" : "rectify_out") : fs::path(fl.out), r);
      std::cout << r.valid_count() << " of " << r.valid.size() << " pixels valid\n";
    } else if (train_cmd->parsed()) {
      const ExperimentConfig cfg = resolve_config(train_fl);
      TrainOptions opts;
      opts.log = &std::cout;
      const TrainResult res = train(cfg, opts);
      std::cout << "final val mIoU " << res.final_val_miou << "\nwrote " << cfg.out_dir << '\n';
    } else if (eval->parsed()) {
      Checkpoint ck = load_checkpoint(eval_ckpt);
      const int multiple = 1 << ck.config.model.downsample;
      SegmentationSet data;
      if (!eval_data.empty()) {
        data = load_dataset(eval_data, multiple);
      } else {
        ExperimentConfig cfg = ck.config;
        if (eval_fl.f) cfg.dataset.f = *eval_fl.f;
        data = make_datasets(cfg, multiple).val;
        if (data.size() == 0) throw std::invalid_argument("eval: checkpoint config has no validation split; pass --data");
      }
      const ConfusionMatrix cm = evaluate(ck.model, data);
      const fs::path out = eval_fl.out.empty() ? fs::path(".") : fs::path(eval_fl.out);
      write_metrics_file((out / "metrics.csv").string(), cm);
      std::cout << "mIoU " << miou(cm) << "  mean acc " << mean_acc(cm) << '\n';
    } else if (dump->parsed()) {
      Checkpoint ck = load_checkpoint(dump_ckpt);
      const int multiple = 1 << ck.config.model.downsample;
      Tensor image;
      if (!dump_image.empty()) {
        image = read_png_image(dump_image);
      } else {
        ExperimentConfig cfg = ck.config;
        cfg.dataset.val_size = std::max(1, cfg.dataset.val_size);
        image = make_datasets(cfg, 1).val_samples.front().fisheye.image.pixels;
      }
      const int h = image.dim(1), w = image.dim(2);
      if (h % multiple != 0 || w % multiple != 0) {
        const SegmentationSet padded = to_segmentation_set({LabeledImage{image, std::vector<std::uint8_t>(h * w, 0)}},
                                                           {}, ck.num_classes, multiple);
        image = Tensor({padded.images.dim(1), padded.images.dim(2), padded.images.dim(3)}, padded.images.storage());
      }
      std::vector<std::pair<int, int>> pixels;
      for (const auto& s : dump_pixels) pixels.push_back(parse_pixel(s));
      if (pixels.empty()) pixels = {{h / 2, w / 2}, {h / 8, w / 8}};
      const fs::path out = dump_fl.out.empty() ? fs::path("kernels") : fs::path(dump_fl.out);
      const auto rows = dump_kernels(ck.model, image, pixels, dump_layer, (out / "kernels.csv").string(),
                                     (out / "kernels.png").string());
      std::cout << "wrote " << rows.size() << " tap rows to " << out.string() << '\n';
    } else if (compare->parsed()) {
      const ExperimentConfig cfg = resolve_config(compare_fl);
      TrainOptions opts;
      opts.log = &std::cout;
      const auto rows = compare_modes(cfg, opts);
      write_compare_csv((fs::path(cfg.out_dir) / "compare.csv").string(), rows);
      write_compare_summary_csv((fs::path(cfg.out_dir) / "compare_summary.csv").string(), rows);
      for (const auto& s : summarize(rows)) {
        std::cout << std::setw(5) << mode_name(s.mode) << "  mIoU " << std::fixed << std::setprecision(4) << s.mean
                  << " +- " << s.stddev << "  (" << s.runs << " runs)\n";
      }
    } else if (gradcheck->parsed()) {
      bool ok = true;
      for (const auto& c : run_gradcheck_suite(gc_seed)) {
        std::cout << (c.passed ? "ok    " : "FAIL  ") << std::left << std::setw(34) << c.name << " max rel err "
                  << std::scientific << std::setprecision(2) << c.result.max_rel_error << "  (" << c.coords
                  << " coords)\n";
        ok = ok && c.passed;
      }
      return ok ? kExitOk : kExitNumerical;
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
  return kExitOk;
}
