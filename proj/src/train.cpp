#include "phnn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "phnn/error.hpp"
#include "phnn/loss.hpp"
#include "phnn/metrics.hpp"
#include "phnn/rng.hpp"

namespace phnn {

void TrainConfig::validate() const {
  model.validate();
  if (!(lr > 0.0)) throw ConfigError("TrainConfig: lr must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("TrainConfig: momentum must lie in [0, 1)");
  if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
  if (!(epochs > 0.0)) throw ConfigError("TrainConfig: epochs must be > 0");
  if (folds < 2) throw ConfigError("TrainConfig: folds must be >= 2");
  if (val_fraction < 0.0 || val_fraction >= 1.0) {
    throw ConfigError("TrainConfig: val_fraction must lie in [0, 1)");
  }
  for (const auto& [id, s] : slice_stride) {
    if (s < 1) throw ConfigError("TrainConfig: slice_stride." + id + " must be >= 1");
  }
  for (double t : threshold_grid) {
    if (!(t > 0.0 && t < 1.0)) {
      throw ConfigError("TrainConfig: threshold grid values must lie inside (0, 1)");
    }
  }
}

int TrainConfig::stride_for(const std::string& dataset_id) const {
  auto it = slice_stride.find(dataset_id);
  if (it != slice_stride.end()) return it->second;
  if (!large_dataset_id.empty() && dataset_id == large_dataset_id) return 10;
  return 1;
}

std::vector<double> TrainConfig::grid_or_default() const {
  if (!threshold_grid.empty()) return threshold_grid;
  std::vector<double> grid;
  for (int i = 1; i <= 19; ++i) grid.push_back(static_cast<double>(i) * 0.05);
  return grid;
}

Sgd::Sgd(double lr, double momentum, std::span<Parameter> params)
    : lr_(lr), momentum_(momentum), params_(params) {
  velocity_.reserve(params.size());
  for (const auto& p : params_) {
    velocity_.emplace_back(static_cast<size_t>(p.tensor.numel()), 0.0);
  }
}

void Sgd::step() {
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& t = params_[i].tensor;
    auto& v = velocity_[i];
    auto data = t.data_mut();
    if (!t.has_grad()) {
      for (size_t j = 0; j < v.size(); ++j) {
        v[j] = momentum_ * v[j];
        data[j] += v[j];
      }
      continue;
    }
    auto g = t.grad();
    for (size_t j = 0; j < v.size(); ++j) {
      v[j] = momentum_ * v[j] - lr_ * g[j];
      data[j] += v[j];
    }
  }
}

Tensor batch_images(std::span<const SliceSample* const> samples) {
  const int b = static_cast<int>(samples.size());
  const int h = samples[0]->height, w = samples[0]->width;
  Tensor t({b, 3, h, w});
  auto out = t.data_mut();
  for (int bi = 0; bi < b; ++bi) {
    const auto& img = samples[static_cast<size_t>(bi)]->image;
    const size_t base = static_cast<size_t>(bi) * 3 * h * w;
    for (size_t i = 0; i < img.size(); ++i) {
      out[base + i] = static_cast<double>(img[i]) / 255.0;
    }
  }
  return t;
}

Tensor batch_labels(std::span<const SliceSample* const> samples) {
  const int b = static_cast<int>(samples.size());
  const int h = samples[0]->height, w = samples[0]->width;
  Tensor t({b, 1, h, w});
  auto out = t.data_mut();
  for (int bi = 0; bi < b; ++bi) {
    const auto& lab = samples[static_cast<size_t>(bi)]->label;
    const size_t base = static_cast<size_t>(bi) * static_cast<size_t>(h) * w;
    for (size_t i = 0; i < lab.size(); ++i) out[base + i] = lab[i] ? 1.0 : 0.0;
  }
  return t;
}

namespace {

// Batches are runs of equally-shaped samples from the shuffled order.
std::vector<std::vector<size_t>> assemble_batches(const std::vector<SliceSample>& slices,
                                                  const std::vector<size_t>& order,
                                                  int batch_size) {
  std::vector<std::vector<size_t>> batches;
  std::vector<size_t> cur;
  int cur_h = -1, cur_w = -1;
  for (size_t i : order) {
    const auto& s = slices[i];
    const bool shape_break = s.height != cur_h || s.width != cur_w;
    if (shape_break || static_cast<int>(cur.size()) == batch_size) {
      if (!cur.empty()) batches.push_back(std::move(cur));
      cur.clear();
      cur_h = s.height;
      cur_w = s.width;
    }
    cur.push_back(i);
  }
  if (!cur.empty()) batches.push_back(std::move(cur));
  return batches;
}

struct Snapshot {
  std::vector<std::vector<double>> params;
  std::vector<BatchNormState> bn;
  std::vector<std::vector<double>> velocity;
  uint64_t iteration = 0;
  uint64_t epoch = 0;
  uint64_t epoch_step = 0;
  uint64_t epoch_seed = 0;
};

Snapshot take_snapshot(const Model& model, const Sgd& opt, uint64_t iteration, uint64_t epoch,
                       uint64_t epoch_step, uint64_t epoch_seed) {
  Snapshot s;
  for (const auto& p : model.parameters()) {
    s.params.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  }
  for (int m = 0; m < model.config().num_stages; ++m) s.bn.push_back(model.bn_state(m));
  s.velocity = opt.velocities();
  s.iteration = iteration;
  s.epoch = epoch;
  s.epoch_step = epoch_step;
  s.epoch_seed = epoch_seed;
  return s;
}

void restore_snapshot(const Snapshot& s, Model& model, Sgd& opt) {
  auto params = model.parameters();
  for (size_t i = 0; i < params.size(); ++i) {
    std::copy(s.params[i].begin(), s.params[i].end(), params[i].tensor.data_mut().begin());
  }
  for (int m = 0; m < model.config().num_stages; ++m) model.bn_state(m) = s.bn[static_cast<size_t>(m)];
  opt.velocities() = s.velocity;
}

Checkpoint build_checkpoint(const Model& model, const Sgd& opt, const TrainConfig& cfg,
                            uint64_t iteration, uint64_t epoch, uint64_t epoch_step,
                            uint64_t epoch_seed, double beta) {
  Checkpoint ckpt;
  ckpt.config = model.config();
  model_to_entries(model, ckpt);
  auto params = model.parameters();
  for (size_t i = 0; i < params.size(); ++i) {
    ckpt.entries.push_back(
        {"velocity." + params[i].name, params[i].tensor.shape(), opt.velocities()[i]});
  }
  ckpt.iteration = iteration;
  ckpt.epoch = epoch;
  ckpt.epoch_step = epoch_step;
  ckpt.epoch_seed = epoch_seed;
  Rng rng(epoch_seed);
  ckpt.rng_state = rng.serialize();
  ckpt.beta = beta;
  return ckpt;
}

}  // namespace

TrainResult train(Model& model, const std::vector<SliceSample>& train_slices,
                  const TrainConfig& cfg, const Checkpoint* resume) {
  cfg.validate();
  if (train_slices.empty()) throw DataError("train: empty training set");
  const bool include_fused = model.config().fusion_mode == FusionMode::hnn;

  LossSpec spec;
  spec.include_fused = include_fused;
  spec.beta = estimate_beta(train_slices);

  Sgd opt(cfg.lr, cfg.momentum, model.parameters());

  uint64_t iteration = 0;
  uint64_t start_epoch = 0;
  uint64_t start_step = 0;
  if (resume != nullptr) {
    if (resume->config != model.config()) {
      throw ConfigError("train: resume checkpoint config does not match the model");
    }
    entries_to_model(*resume, model);
    auto params = model.parameters();
    for (size_t i = 0; i < params.size(); ++i) {
      const auto* e = resume->find("velocity." + params[i].name);
      if (e == nullptr) {
        throw ConfigError("train: resume checkpoint has no velocity for '" + params[i].name + "'");
      }
      opt.velocities()[i] = e->values;
    }
    if (resume->beta) spec.beta = *resume->beta;
    iteration = resume->iteration;
    start_epoch = resume->epoch;
    start_step = resume->epoch_step;
  }

  const uint64_t nominal_steps_per_epoch =
      (train_slices.size() + static_cast<size_t>(cfg.batch_size) - 1) /
      static_cast<size_t>(cfg.batch_size);
  uint64_t total_steps =
      static_cast<uint64_t>(std::floor(cfg.epochs * static_cast<double>(nominal_steps_per_epoch)));
  total_steps = std::max<uint64_t>(total_steps, 1);
  if (cfg.max_steps) total_steps = std::min(total_steps, *cfg.max_steps);

  TrainResult result;
  result.beta = spec.beta;

  std::vector<size_t> indices(train_slices.size());
  std::iota(indices.begin(), indices.end(), 0);

  uint64_t epoch = start_epoch;
  uint64_t epoch_seed = mix_seed(cfg.seed, epoch);
  Snapshot last_good = take_snapshot(model, opt, iteration, epoch, start_step, epoch_seed);

  while (iteration < total_steps) {
    epoch_seed = mix_seed(cfg.seed, epoch);
    std::vector<size_t> order = indices;
    Rng shuffle_rng(epoch_seed);
    shuffle_rng.shuffle(order);
    const auto batches = assemble_batches(train_slices, order, cfg.batch_size);

    uint64_t step = epoch == start_epoch ? start_step : 0;
    for (; step < batches.size() && iteration < total_steps; ++step) {
      std::vector<const SliceSample*> batch;
      for (size_t i : batches[step]) batch.push_back(&train_slices[i]);

      Tensor images = batch_images(batch);
      Tensor labels = batch_labels(batch);
      ForwardResult fwd = model.forward(images, Phase::train);
      TotalLoss loss = total_loss(fwd, labels, spec);

      if (!std::isfinite(loss.value.item())) {
        restore_snapshot(last_good, model, opt);
        result.diverged = true;
        result.diagnostic = "non-finite loss at iteration " + std::to_string(iteration) +
                            " (epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                            "); restored the last finite state at iteration " +
                            std::to_string(last_good.iteration);
        result.checkpoint =
            build_checkpoint(model, opt, cfg, last_good.iteration, last_good.epoch,
                             last_good.epoch_step, last_good.epoch_seed, spec.beta);
        result.steps_run = last_good.iteration;
        return result;
      }

      last_good = take_snapshot(model, opt, iteration, epoch, step, epoch_seed);

      model.zero_grad();
      loss.value.backward();
      opt.step();
      ++iteration;

      LossRow row;
      row.epoch = epoch;
      row.step = step;
      row.total = loss.value.item();
      row.per_side = loss.per_side;
      row.fused = loss.fused;
      result.loss_rows.push_back(std::move(row));
    }
    if (iteration < total_steps) ++epoch;
  }

  // Next-batch position for resume.
  uint64_t final_epoch = epoch;
  uint64_t final_step = result.loss_rows.empty() ? start_step : result.loss_rows.back().step + 1;
  result.checkpoint = build_checkpoint(model, opt, cfg, iteration, final_epoch, final_step,
                                       mix_seed(cfg.seed, final_epoch), spec.beta);
  result.steps_run = iteration;
  return result;
}

void write_loss_log(const std::filesystem::path& path, const std::vector<LossRow>& rows,
                    int num_stages, bool include_fused) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write loss log " + path.string());
  out << "epoch,step,total_loss";
  for (int m = 1; m <= num_stages; ++m) out << ",loss_s" << m;
  if (include_fused) out << ",loss_fused";
  out << '\n';
  char buf[64];
  for (const auto& r : rows) {
    out << r.epoch << ',' << r.step;
    std::snprintf(buf, sizeof(buf), "%.17g", r.total);
    out << ',' << buf;
    for (double v : r.per_side) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << ',' << buf;
    }
    if (include_fused) {
      std::snprintf(buf, sizeof(buf), "%.17g", r.fused.value_or(0.0));
      out << ',' << buf;
    }
    out << '\n';
  }
}

namespace {
constexpr int kInferenceBatch = 8;
}

ProbabilityVolume predict_probabilities(Model& model, const VolumeCT& vol) {
  if (!model.bn_initialized()) {
    throw StateError("predict: model has no batch-norm running statistics (untrained checkpoint?)");
  }
  NoGradGuard no_grad;

  ProbabilityVolume pv;
  pv.nx = vol.nx;
  pv.ny = vol.ny;
  pv.nz = vol.nz;
  pv.sx = vol.sx;
  pv.sy = vol.sy;
  pv.sz = vol.sz;
  pv.voxels.assign(static_cast<size_t>(vol.size()), 0.0);

  const int mult = model.config().pad_multiple();
  std::vector<SliceSample> slices;
  for (int z = 0; z < vol.nz; z += kInferenceBatch) {
    slices.clear();
    const int zn = std::min(vol.nz - z, kInferenceBatch);
    for (int dz = 0; dz < zn; ++dz) slices.push_back(make_slice(vol, nullptr, z + dz, mult));
    std::vector<const SliceSample*> ptrs;
    for (const auto& s : slices) ptrs.push_back(&s);

    Tensor images = batch_images(ptrs);
    ForwardResult fwd = model.forward(images, Phase::eval);
    const Tensor& prob = fwd.final().probability;
    const int h = slices[0].height, w = slices[0].width;
    for (int dz = 0; dz < zn; ++dz) {
      const auto& s = slices[static_cast<size_t>(dz)];
      const double* p = prob.data().data() + static_cast<size_t>(dz) * h * w;
      for (int y = 0; y < vol.ny; ++y) {
        for (int x = 0; x < vol.nx; ++x) {
          pv.voxels[static_cast<size_t>(x) +
                    static_cast<size_t>(vol.nx) * (y + static_cast<size_t>(vol.ny) * (z + dz))] =
              p[static_cast<size_t>(y + s.pad_top) * w + (x + s.pad_left)];
        }
      }
    }
  }
  return pv;
}

namespace {

ProbabilityVolume predict_stage(Model& model, const VolumeCT& vol, int stage) {
  // Same path as predict_probabilities but reading one side output.
  if (!model.bn_initialized()) {
    throw StateError("predict: model has no batch-norm running statistics (untrained checkpoint?)");
  }
  NoGradGuard no_grad;
  ProbabilityVolume pv;
  pv.nx = vol.nx;
  pv.ny = vol.ny;
  pv.nz = vol.nz;
  pv.sx = vol.sx;
  pv.sy = vol.sy;
  pv.sz = vol.sz;
  pv.voxels.assign(static_cast<size_t>(vol.size()), 0.0);
  const int mult = model.config().pad_multiple();
  std::vector<SliceSample> slices;
  for (int z = 0; z < vol.nz; z += kInferenceBatch) {
    slices.clear();
    const int zn = std::min(vol.nz - z, kInferenceBatch);
    for (int dz = 0; dz < zn; ++dz) slices.push_back(make_slice(vol, nullptr, z + dz, mult));
    std::vector<const SliceSample*> ptrs;
    for (const auto& s : slices) ptrs.push_back(&s);
    Tensor images = batch_images(ptrs);
    ForwardResult fwd = model.forward(images, Phase::eval);
    const Tensor& prob = stage == 0
                             ? fwd.final().probability
                             : fwd.side_outputs[static_cast<size_t>(stage - 1)].probability;
    const int h = slices[0].height, w = slices[0].width;
    for (int dz = 0; dz < zn; ++dz) {
      const auto& s = slices[static_cast<size_t>(dz)];
      const double* p = prob.data().data() + static_cast<size_t>(dz) * h * w;
      for (int y = 0; y < vol.ny; ++y) {
        for (int x = 0; x < vol.nx; ++x) {
          pv.voxels[static_cast<size_t>(x) +
                    static_cast<size_t>(vol.nx) * (y + static_cast<size_t>(vol.ny) * (z + dz))] =
              p[static_cast<size_t>(y + s.pad_top) * w + (x + s.pad_left)];
        }
      }
    }
  }
  return pv;
}

}  // namespace

MaskVolume segment_volume(Model& model, const VolumeCT& vol, double threshold_value) {
  return keep_lungs(threshold(predict_probabilities(model, vol), threshold_value));
}

MaskVolume segment_volume_stage(Model& model, const VolumeCT& vol, double threshold_value,
                                int stage) {
  if (stage < 0 || stage > model.config().num_stages) {
    throw ConfigError("segment_volume_stage: stage out of range");
  }
  return keep_lungs(threshold(predict_stage(model, vol, stage), threshold_value));
}

double calibrate_threshold_on_probabilities(
    const std::vector<std::pair<ProbabilityVolume, MaskVolume>>& validation,
    const std::vector<double>& grid) {
  if (validation.empty()) throw DataError("calibrate_threshold: empty validation set");
  if (grid.empty()) throw ConfigError("calibrate_threshold: empty threshold grid");
  std::vector<double> sorted_grid = grid;
  std::sort(sorted_grid.begin(), sorted_grid.end());

  double best_t = sorted_grid.front();
  double best_score = -1.0;
  for (double t : sorted_grid) {
    double mean = 0.0;
    for (const auto& [pv, gt] : validation) {
      mean += dice(keep_lungs(threshold(pv, t)), gt);
    }
    mean /= static_cast<double>(validation.size());
    if (mean > best_score) {  // strict >: ties keep the lower threshold
      best_score = mean;
      best_t = t;
    }
  }
  return best_t;
}

double calibrate_threshold(Model& model,
                           const std::vector<std::pair<VolumeCT, MaskVolume>>& validation,
                           const std::vector<double>& grid) {
  if (validation.empty()) throw DataError("calibrate_threshold: empty validation set");
  std::vector<std::pair<ProbabilityVolume, MaskVolume>> probs;
  probs.reserve(validation.size());
  for (const auto& [vol, gt] : validation) {
    probs.emplace_back(predict_probabilities(model, vol), gt);
  }
  return calibrate_threshold_on_probabilities(probs, grid);
}

}  // namespace phnn
