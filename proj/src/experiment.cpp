#include "fisheyehdk/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <utility>

#include "fisheyehdk/checkpoint.hpp"
#include "fisheyehdk/image_io.hpp"
#include "fisheyehdk/optim.hpp"

namespace fhdk {

namespace {

constexpr std::uint64_t kValSeedOffset = 0x5bd1e995ULL;
constexpr std::uint64_t kShuffleStream = 0x2545f4914f6cdd1dULL;

std::vector<std::vector<int>> make_batches(const std::vector<int>& order, int batch_size) {
  std::vector<std::vector<int>> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    out.emplace_back(order.begin() + i, order.begin() + std::min(order.size(), i + batch_size));
  }
  return out;
}

std::string first_non_finite(const Tape& tape, const ToyModel::Forward& fw, const std::vector<ConstNamedParam>& params) {
  if (!tape.value(fw.logits).all_finite()) return "logits";
  for (std::size_t i = 0; i < fw.fields.size(); ++i) {
    if (!tape.value(fw.fields[i]).all_finite()) return "offset field of deformable block " + std::to_string(i);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].tensor->all_finite()) return params[i].name;
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!tape.grad(fw.params[i]).all_finite()) return "grad(" + params[i].name + ")";
  }
  return "loss";
}

struct Optimizers {
  SgdState encoder, decoder, offset, hyperbolic_weight;
  RsgdState rsgd;
  double hyperbolic_lr0;
  double power;
  int max_iter;
};

Optimizers make_optimizers(const ExperimentConfig& cfg, int max_iter) {
  const OptimSpec& o = cfg.optim;
  auto sgd = [&](double lr) {
    SgdState s;
    s.lr0 = lr;
    s.momentum = o.momentum;
    s.weight_decay = o.weight_decay;
    s.power = o.power;
    s.max_iter = max_iter;
    s.validate();
    return s;
  };
  Optimizers opt{sgd(o.encoder_lr), sgd(o.decoder_lr), sgd(o.hyperbolic_lr), sgd(o.hyperbolic_lr), RsgdState{},
                 o.hyperbolic_lr, o.power, max_iter};
  opt.rsgd.lr = o.hyperbolic_lr;
  opt.rsgd.curvature = gyro::Curvature(cfg.model.curvature);
  return opt;
}

void optimizer_step(const ExperimentConfig& cfg, std::vector<NamedParam>& params, const Tape& tape,
                    const ToyModel::Forward& fw, Optimizers& opt, int iter) {
  std::map<ParamGroup, std::pair<std::vector<Tensor*>, std::vector<const Tensor*>>> sgd_groups;
  const double hyp_lr = poly_lr(opt.hyperbolic_lr0, iter, opt.max_iter, opt.power);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& g = tape.grad(fw.params[i]);
    NamedParam& p = params[i];
    const bool hyperbolic = p.group == ParamGroup::HyperbolicWeight || p.group == ParamGroup::HyperbolicBias;
    if (hyperbolic && cfg.model.freeze_hyperbolic) continue;
    if (p.group == ParamGroup::HyperbolicBias) {
      rsgd_update(p.tensor->values(), g.values(), opt.rsgd, hyp_lr);
    } else if (p.group == ParamGroup::HyperbolicWeight && cfg.model.rsgd_on_weight) {
      const int rows = p.tensor->dim(0), cols = p.tensor->dim(1);
      for (int r = 0; r < rows; ++r) {
        rsgd_update(p.tensor->values().subspan(static_cast<std::size_t>(r) * cols, cols),
                    g.values().subspan(static_cast<std::size_t>(r) * cols, cols), opt.rsgd, hyp_lr);
      }
    } else {
      auto& grp = sgd_groups[p.group];
      grp.first.push_back(p.tensor);
      grp.second.push_back(&g);
    }
  }
  for (auto& [group, lists] : sgd_groups) {
    SgdState* s = nullptr;
    switch (group) {
      case ParamGroup::Encoder: s = &opt.encoder; break;
      case ParamGroup::Decoder: s = &opt.decoder; break;
      case ParamGroup::Offset: s = &opt.offset; break;
      case ParamGroup::HyperbolicWeight: s = &opt.hyperbolic_weight; break;
      case ParamGroup::HyperbolicBias: continue;
    }
    sgd_step(lists.first, lists.second, *s, s->lr(iter));
  }
}

}  // namespace

DataSplits make_datasets(const ExperimentConfig& config, int multiple) {
  const DatasetSpec& d = config.dataset;
  const FisheyeProfile profile = d.profile();
  DataSplits s;
  s.train_samples = generate_toy_dataset(d.train_size, d.height, d.width, d.num_classes, profile, d.seed);
  s.train = to_segmentation_set(s.train_samples, d.num_classes, multiple);
  if (d.val_size > 0) {
    s.val_samples = generate_toy_dataset(d.val_size, d.height, d.width, d.num_classes, profile, d.seed ^ kValSeedOffset);
    s.val = to_segmentation_set(s.val_samples, d.num_classes, multiple);
  }
  return s;
}

ConfusionMatrix evaluate(const ToyModel& model, const SegmentationSet& data, int batch_size) {
  if (data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  if (data.num_classes != model.num_classes()) {
    throw std::invalid_argument("evaluate: dataset has " + std::to_string(data.num_classes) +
                                " classes but the model predicts " + std::to_string(model.num_classes()));
  }
  ConfusionMatrix cm(model.num_classes());
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (const auto& batch : make_batches(order, std::max(1, batch_size))) {
    const LabelMap pred = argmax_labels(model.predict(data.image_batch(batch)));
    cm.accumulate(pred.labels, data.label_batch(batch).labels);
  }
  return cm;
}

double evaluate_loss(const ToyModel& model, const SegmentationSet& data, const std::vector<double>& class_weights,
                     int batch_size) {
  if (data.size() == 0) throw std::invalid_argument("evaluate_loss: empty dataset");
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  double total = 0.0;
  int count = 0;
  for (const auto& batch : make_batches(order, std::max(1, batch_size))) {
    const Tensor logits = model.predict(data.image_batch(batch));
    total += weighted_cross_entropy(logits, data.label_batch(batch), class_weights).loss;
    ++count;
  }
  return total / count;
}

TrainResult train_model(const ExperimentConfig& config, const SegmentationSet& train, const SegmentationSet* val,
                        const TrainOptions& options) {
  config.validate();
  if (train.size() == 0) throw std::invalid_argument("train: empty training set");
  TrainResult res{ToyModel(config.model, train.images.dim(1), train.num_classes, config.seed),
                  inverse_frequency_weights(train.histogram()),
                  {},
                  std::numeric_limits<double>::quiet_NaN()};
  ToyModel& model = res.model;
  const int n = train.size();
  const int bs = std::min(config.optim.batch_size, n);
  const int iters_per_epoch = (n + bs - 1) / bs;
  const int max_iter = config.optim.epochs * iters_per_epoch;
  Optimizers opt = make_optimizers(config, max_iter);
  const bool have_val = val != nullptr && val->size() > 0;

  auto log_epoch = [&](const EpochLog& e) {
    if (!options.log) return;
    *options.log << "epoch " << e.epoch << "  loss " << std::setprecision(6) << e.train_loss;
    if (!std::isnan(e.val_miou)) *options.log << "  val_miou " << e.val_miou;
    *options.log << '\n';
  };

  EpochLog e0;
  e0.train_loss = evaluate_loss(model, train, res.class_weights, bs);
  if (have_val && options.eval_each_epoch) e0.val_miou = miou(evaluate(model, *val, bs));
  res.curve.push_back(e0);
  log_epoch(e0);

  std::mt19937_64 shuffle_rng(config.seed ^ kShuffleStream);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  int iter = 0;
  for (int epoch = 1; epoch <= config.optim.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (const auto& batch : make_batches(order, bs)) {
      Tape tape;
      const ToyModel::Forward fw = model.forward(tape, train.image_batch(batch));
      const Tape::Id loss = tape.cross_entropy(fw.logits, train.label_batch(batch), res.class_weights);
      const double loss_value = tape.value(loss)[0];
      tape.backward(loss);
      auto params = model.parameters();
      if (!std::isfinite(loss_value)) {
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", iteration " +
                             std::to_string(iter) + "; first non-finite tensor: " +
                             first_non_finite(tape, fw, std::as_const(model).parameters()));
      }
      optimizer_step(config, params, tape, fw, opt, iter);
      for (const auto& p : params) {
        if (!p.tensor->all_finite()) {
          throw NumericalError("parameter " + p.name + " became non-finite at epoch " + std::to_string(epoch) +
                               ", iteration " + std::to_string(iter));
        }
      }
      loss_sum += loss_value;
      ++batches;
      ++iter;
    }
    EpochLog e;
    e.epoch = epoch;
    e.train_loss = loss_sum / batches;
    if (have_val && (options.eval_each_epoch || epoch == config.optim.epochs)) e.val_miou = miou(evaluate(model, *val, bs));
    res.curve.push_back(e);
    log_epoch(e);
  }
  if (have_val) res.final_val_miou = res.curve.back().val_miou;
  return res;
}

void write_loss_curve_csv(const std::string& path, const std::vector<EpochLog>& curve) {
  std::ostringstream os;
  os << std::setprecision(17) << "epoch,train_loss,val_miou\n";
  for (const auto& e : curve) {
    os << e.epoch << ',' << e.train_loss << ',';
    if (!std::isnan(e.val_miou)) os << e.val_miou;
    os << '\n';
  }
  write_file_atomic(path, os.str());
}

void write_metrics_file(const std::string& path, const ConfusionMatrix& cm) {
  std::ostringstream os;
  write_metrics_csv(os, cm);
  write_file_atomic(path, os.str());
}

TrainResult train(const ExperimentConfig& config, const TrainOptions& options) {
  config.validate();
  const int multiple = 1 << config.model.downsample;
  const DataSplits data = make_datasets(config, multiple);
  TrainResult res = train_model(config, data.train, data.val.size() > 0 ? &data.val : nullptr, options);
  const std::filesystem::path dir(config.out_dir);
  std::filesystem::create_directories(dir);
  save_checkpoint((dir / "checkpoint.fhdk").string(), res.model, config, res.class_weights);
  write_loss_curve_csv((dir / "loss_curve.csv").string(), res.curve);
  const SegmentationSet& eval_set = data.val.size() > 0 ? data.val : data.train;
  write_metrics_file((dir / "metrics.csv").string(), evaluate(res.model, eval_set));
  return res;
}

OffsetStats offset_magnitude_by_radius(const ToyModel& model, const SegmentationSet& data, double cy, double cx,
                                       int layer, double inner_frac, double outer_frac) {
  if (data.size() == 0) throw std::invalid_argument("offset statistics: empty dataset");
  OffsetStats st;
  double center_sum = 0.0, outer_sum = 0.0;
  const int h = data.images.dim(2), w = data.images.dim(3);
  for (int i = 0; i < data.size(); ++i) {
    const auto fields = model.kernel_fields(data.image_batch({i}));
    if (layer < 0 || layer >= static_cast<int>(fields.size())) {
      throw std::out_of_range("offset statistics: model has no deformable block " + std::to_string(layer));
    }
    const KernelField& kf = fields[layer];
    const auto& valid = data.valid[i];
    double r_max = 0.0;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (valid[static_cast<std::size_t>(y) * w + x]) r_max = std::max(r_max, std::hypot(y - cy, x - cx));
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!valid[static_cast<std::size_t>(y) * w + x]) continue;
        const double r = std::hypot(y - cy, x - cx);
        const bool inner = r <= inner_frac * r_max;
        const bool outer = r >= outer_frac * r_max;
        if (!inner && !outer) continue;
        double mag = 0.0;
        for (int t = 0; t < kf.taps(); ++t) mag += std::hypot(kf.dy(0, t, y, x), kf.dx(0, t, y, x));
        mag /= kf.taps();
        if (inner) {
          center_sum += mag;
          ++st.center_pixels;
        } else {
          outer_sum += mag;
          ++st.outer_pixels;
        }
      }
    }
  }
  if (st.center_pixels == 0 || st.outer_pixels == 0) throw std::invalid_argument("offset statistics: empty radial region");
  st.center_mean = center_sum / st.center_pixels;
  st.outer_mean = outer_sum / st.outer_pixels;
  return st;
}

std::vector<KernelDumpRow> dump_kernels(const ToyModel& model, const Tensor& image,
                                        const std::vector<std::pair<int, int>>& pixels, int layer,
                                        const std::string& csv_path, const std::string& png_path) {
  if (image.rank() != 3) throw std::invalid_argument("dump_kernels: image must be [C, H, W]");
  const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
  for (const auto& [y, x] : pixels) {
    if (y < 0 || y >= h || x < 0 || x >= w) {
      throw std::out_of_range("dump_kernels: pixel (" + std::to_string(y) + ", " + std::to_string(x) +
                              ") outside " + std::to_string(h) + "x" + std::to_string(w) + " image");
    }
  }
  const Tensor batch({1, c, h, w}, image.storage());
  KernelField field = zero_kernel_field(1, h, w, model.spec().kernel, model.spec().kernel);
  if (model.spec().mode != OffsetMode::None) {
    auto fields = model.kernel_fields(batch);
    if (layer < 0 || layer >= static_cast<int>(fields.size())) {
      throw std::out_of_range("dump_kernels: model has no deformable block " + std::to_string(layer));
    }
    field = std::move(fields[layer]);
  }
  std::vector<KernelDumpRow> rows;
  for (const auto& [py, px] : pixels) {
    for (const TapPosition& tp : kernel_positions(field, 0, py, px)) {
      rows.push_back({py, px, tp.tap, tp.y, tp.x, field.dy(0, tp.tap, py, px), field.dx(0, tp.tap, py, px)});
    }
  }
  if (!csv_path.empty()) {
    std::ostringstream os;
    os << std::setprecision(10) << "pixel_y,pixel_x,tap,y,x,dy,dx\n";
    for (const auto& r : rows) {
      os << r.pixel_y << ',' << r.pixel_x << ',' << r.tap << ',' << r.y << ',' << r.x << ',' << r.dy << ',' << r.dx
         << '\n';
    }
    write_file_atomic(csv_path, os.str());
  }
  if (!png_path.empty()) {
    constexpr int kScale = 8;
    Tensor canvas({3, h * kScale, w * kScale});
    const int oh = h * kScale, ow = w * kScale;
    for (int ch = 0; ch < 3; ++ch) {
      const int src = c == 3 ? ch : 0;
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
          // Dimmed so the markers stand out.
          canvas[(static_cast<std::size_t>(ch) * oh + y) * ow + x] =
              0.6 * image[(static_cast<std::size_t>(src) * h + y / kScale) * w + x / kScale];
        }
      }
    }
    auto dot = [&](double y, double x, double r, double g, double b, int radius) {
      const int cy = static_cast<int>(std::lround((y + 0.5) * kScale));
      const int cx = static_cast<int>(std::lround((x + 0.5) * kScale));
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          const int yy = cy + dy, xx = cx + dx;
          if (yy < 0 || yy >= oh || xx < 0 || xx >= ow) continue;
          const std::size_t at = static_cast<std::size_t>(yy) * ow + xx;
          canvas[at] = r;
          canvas[static_cast<std::size_t>(oh) * ow + at] = g;
          canvas[2 * static_cast<std::size_t>(oh) * ow + at] = b;
        }
      }
    };
    for (const auto& r : rows) dot(r.y, r.x, 1.0, 0.1, 0.1, 2);
    for (const auto& [py, px] : pixels) dot(py, px, 0.1, 1.0, 0.1, 1);
    std::filesystem::path p(png_path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    write_png_image(png_path, canvas);
  }
  return rows;
}

std::vector<CompareRow> compare_modes(const ExperimentConfig& config, const TrainOptions& options) {
  config.validate();
  const DataSplits data = make_datasets(config, 1 << config.model.downsample);
  const SegmentationSet& eval_set = data.val.size() > 0 ? data.val : data.train;
  std::vector<CompareRow> rows;
  for (OffsetMode mode : config.compare_modes) {
    for (std::uint64_t seed : config.compare_seeds) {
      ExperimentConfig run = config;
      run.model.mode = mode;
      run.seed = seed;
      if (mode != OffsetMode::Hdk) run.model.freeze_hyperbolic = false;
      run.validate();
      TrainOptions quiet = options;
      quiet.eval_each_epoch = false;
      const TrainResult res = train_model(run, data.train, nullptr, quiet);
      const double m = miou(evaluate(res.model, eval_set));
      if (options.log) *options.log << mode_name(mode) << " seed " << seed << " miou " << m << '\n';
      rows.push_back({mode, seed, m});
    }
  }
  return rows;
}

std::vector<ModeSummary> summarize(const std::vector<CompareRow>& rows) {
  std::vector<ModeSummary> out;
  for (const CompareRow& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const ModeSummary& s) { return s.mode == r.mode; });
    if (it == out.end()) {
      out.push_back({r.mode, 0.0, 0.0, 0});
      it = out.end() - 1;
    }
    it->mean += r.miou;
    ++it->runs;
  }
  for (ModeSummary& s : out) {
    s.mean /= s.runs;
    double ss = 0.0;
    for (const CompareRow& r : rows) {
      if (r.mode == s.mode) ss += (r.miou - s.mean) * (r.miou - s.mean);
    }
    s.stddev = s.runs > 1 ? std::sqrt(ss / (s.runs - 1)) : 0.0;
  }
  return out;
}

void write_compare_csv(const std::string& path, const std::vector<CompareRow>& rows) {
  std::ostringstream os;
  os << std::setprecision(17) << "mode,seed,miou\n";
  for (const auto& r : rows) os << mode_name(r.mode) << ',' << r.seed << ',' << r.miou << '\n';
  write_file_atomic(path, os.str());
}

void write_compare_summary_csv(const std::string& path, const std::vector<CompareRow>& rows) {
  std::ostringstream os;
  os << std::setprecision(17) << "mode,mean,stddev,runs\n";
  for (const auto& s : summarize(rows)) os << mode_name(s.mode) << ',' << s.mean << ',' << s.stddev << ',' << s.runs << '\n';
  write_file_atomic(path, os.str());
}

}  // namespace fhdk
