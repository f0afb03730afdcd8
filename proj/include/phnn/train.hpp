#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "phnn/checkpoint.hpp"
#include "phnn/ctdata.hpp"
#include "phnn/model.hpp"
#include "phnn/postproc.hpp"
#include "phnn/volume.hpp"

namespace phnn {

struct TrainConfig {
  ModelConfig model;
  double lr = 1e-3;
  double momentum = 0.9;
  int batch_size = 4;
  double epochs = 13.5;  // fractional: the final pass is partial
  uint64_t seed = 0;
  // Slice stride per dataset_id; large_dataset_id defaults to 10 unless
  // overridden, everything else to 1.
  std::map<std::string, int> slice_stride;
  std::string large_dataset_id;
  int folds = 5;
  double val_fraction = 0.1;
  std::vector<double> threshold_grid;      // default 0.05 .. 0.95 step 0.05
  std::optional<uint64_t> max_steps;       // caps the epoch-derived budget

  void validate() const;
  int stride_for(const std::string& dataset_id) const;
  std::vector<double> grid_or_default() const;
};

// v <- momentum * v - lr * g;  p <- p + v
class Sgd {
 public:
  Sgd(double lr, double momentum, std::span<Parameter> params);
  void step();
  std::vector<std::vector<double>>& velocities() { return velocity_; }
  const std::vector<std::vector<double>>& velocities() const { return velocity_; }

 private:
  double lr_;
  double momentum_;
  std::span<Parameter> params_;
  std::vector<std::vector<double>> velocity_;
};

struct LossRow {
  uint64_t epoch = 0;
  uint64_t step = 0;  // within epoch
  double total = 0.0;
  std::vector<double> per_side;
  std::optional<double> fused;
};

struct TrainResult {
  Checkpoint checkpoint;  // final or last-finite state
  double beta = 0.0;
  std::vector<LossRow> loss_rows;
  uint64_t steps_run = 0;
  bool diverged = false;
  std::string diagnostic;
};

// SGD-with-momentum loop over the given slices. beta is estimated once
// from exactly these slices before the loop; sample order per epoch is a
// pure function of (seed, epoch), so identical inputs give bit-identical
// results for any PHNN_THREADS. Optionally resumes from a checkpoint.
TrainResult train(Model& model, const std::vector<SliceSample>& train_slices,
                  const TrainConfig& cfg, const Checkpoint* resume = nullptr);

// CSV: epoch,step,total_loss,loss_s1..loss_sM[,loss_fused]
void write_loss_log(const std::filesystem::path& path, const std::vector<LossRow>& rows,
                    int num_stages, bool include_fused);

Tensor batch_images(std::span<const SliceSample* const> samples);
Tensor batch_labels(std::span<const SliceSample* const> samples);

// Eval-mode forward over every axial slice, cropped back to the volume
// extent. Requires populated batch-norm statistics.
ProbabilityVolume predict_probabilities(Model& model, const VolumeCT& vol);

// predict -> threshold -> keep_lungs.
MaskVolume segment_volume(Model& model, const VolumeCT& vol, double threshold_value);

// Per-stage analogue of segment_volume for side-output comparisons
// (stage is 1-based; 0 selects the designated final output).
MaskVolume segment_volume_stage(Model& model, const VolumeCT& vol, double threshold_value,
                                int stage);

// Grid threshold maximising mean post-processed dice; ties take the
// lower threshold.
double calibrate_threshold_on_probabilities(
    const std::vector<std::pair<ProbabilityVolume, MaskVolume>>& validation,
    const std::vector<double>& grid);
double calibrate_threshold(Model& model,
                           const std::vector<std::pair<VolumeCT, MaskVolume>>& validation,
                           const std::vector<double>& grid);

}  // namespace phnn
