#pragma once

// Training, evaluation and analysis entry points used by the CLI.

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "fisheyehdk/config.hpp"
#include "fisheyehdk/dataset.hpp"
#include "fisheyehdk/metrics.hpp"
#include "fisheyehdk/model.hpp"

namespace fhdk {

/// Raised when training produces a non-finite value.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataSplits {
  std::vector<ToySample> train_samples;
  std::vector<ToySample> val_samples;
  SegmentationSet train;
  SegmentationSet val;  // empty when val_size == 0
};

/// Train and validation scenes from the dataset spec; the validation split
/// uses a seed derived from the training one.
DataSplits make_datasets(const ExperimentConfig& config, int multiple);

struct EpochLog {
  int epoch = 0;  // 0 is the untrained model
  double train_loss = 0.0;
  double val_miou = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  ToyModel model;
  std::vector<double> class_weights;
  std::vector<EpochLog> curve;
  double final_val_miou = std::numeric_limits<double>::quiet_NaN();
};

struct TrainOptions {
  bool eval_each_epoch = true;
  std::ostream* log = nullptr;
};

/// Runs the optimisation loop. Euclidean parameters use momentum SGD and
/// the HDK parameters RSGD; every group follows the poly schedule.
TrainResult train_model(const ExperimentConfig& config, const SegmentationSet& train,
                        const SegmentationSet* val, const TrainOptions& options = {});

/// Generates data, trains and writes checkpoint.fhdk, loss_curve.csv and
/// metrics.csv under config.out_dir.
TrainResult train(const ExperimentConfig& config, const TrainOptions& options = {});

/// Confusion matrix of argmax predictions; void pixels are ignored.
ConfusionMatrix evaluate(const ToyModel& model, const SegmentationSet& data, int batch_size = 4);
/// Mean per-batch weighted cross-entropy.
double evaluate_loss(const ToyModel& model, const SegmentationSet& data, const std::vector<double>& class_weights,
                     int batch_size);

void write_loss_curve_csv(const std::string& path, const std::vector<EpochLog>& curve);
void write_metrics_file(const std::string& path, const ConfusionMatrix& cm);

struct OffsetStats {
  double center_mean = 0.0;
  double outer_mean = 0.0;
  std::size_t center_pixels = 0;
  std::size_t outer_pixels = 0;
};

/// Mean per-pixel offset magnitude (average over taps of |(dy, dx)|) of
/// deformable block `layer`, for valid pixels within inner_frac * R_max of
/// the image centre and beyond outer_frac * R_max. R_max is the largest
/// valid radius of each image.
OffsetStats offset_magnitude_by_radius(const ToyModel& model, const SegmentationSet& data, double cy, double cx,
                                       int layer = 0, double inner_frac = 0.2, double outer_frac = 0.8);

struct KernelDumpRow {
  int pixel_y = 0;
  int pixel_x = 0;
  int tap = 0;
  double y = 0.0;
  double x = 0.0;
  double dy = 0.0;
  double dx = 0.0;
};

/// Tap positions of deformable block `layer` at the requested pixels of
/// `image` ([C, H, W], already padded as the model requires). Writes a CSV
/// and a PNG overlay when the paths are non-empty. Throws
/// std::out_of_range for pixels outside the image.
std::vector<KernelDumpRow> dump_kernels(const ToyModel& model, const Tensor& image,
                                        const std::vector<std::pair<int, int>>& pixels, int layer,
                                        const std::string& csv_path, const std::string& png_path);

struct CompareRow {
  OffsetMode mode = OffsetMode::None;
  std::uint64_t seed = 0;
  double miou = 0.0;
};

struct ModeSummary {
  OffsetMode mode = OffsetMode::None;
  double mean = 0.0;
  double stddev = 0.0;
  int runs = 0;
};

/// Trains every (mode, seed) pair of the config on one shared dataset.
std::vector<CompareRow> compare_modes(const ExperimentConfig& config, const TrainOptions& options = {});
/// Sample standard deviation (n - 1); zero for a single run.
std::vector<ModeSummary> summarize(const std::vector<CompareRow>& rows);
void write_compare_csv(const std::string& path, const std::vector<CompareRow>& rows);
void write_compare_summary_csv(const std::string& path, const std::vector<CompareRow>& rows);

}  // namespace fhdk
