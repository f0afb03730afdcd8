#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "phnn/checkpoint.hpp"
#include "phnn/error.hpp"
#include "phnn/loss.hpp"
#include "phnn/synth.hpp"
#include "phnn/threads.hpp"
#include "phnn/train.hpp"

using namespace phnn;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_model(FusionMode mode = FusionMode::phnn_cumulative, uint64_t seed = 5) {
  ModelConfig cfg;
  cfg.num_stages = 3;
  cfg.convs_per_stage = {1, 1, 1};
  cfg.base_channels = {32, 32, 64};
  cfg.width_num = 1;
  cfg.width_den = 8;
  cfg.fusion_mode = mode;
  cfg.seed = seed;
  return cfg;
}

TrainConfig tiny_train(uint64_t seed = 5) {
  TrainConfig cfg;
  cfg.model = tiny_model(FusionMode::phnn_cumulative, seed);
  cfg.seed = seed;
  cfg.batch_size = 2;
  cfg.epochs = 2.0;
  cfg.lr = 1e-2;
  return cfg;
}

// Small synthetic training set from one phantom case.
std::vector<SliceSample> tiny_slices(int max_slices = 8) {
  SynthSpec spec;
  spec.nx = 32;
  spec.ny = 32;
  spec.nz = 16;
  SynthCase sc = make_synth_case(123, 0, spec);
  sc.volume.patient_id = "p0";
  auto slices = make_slices(sc.volume, sc.mask, 1, 4);
  slices.resize(static_cast<size_t>(max_slices));
  return slices;
}

std::vector<double> flat_params(const Model& model) {
  std::vector<double> out;
  for (const auto& p : model.parameters()) {
    out.insert(out.end(), p.tensor.data().begin(), p.tensor.data().end());
  }
  return out;
}

std::vector<char> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("two identical runs give bit-identical checkpoints and logs") {
  auto slices = tiny_slices();
  const auto dir = fs::temp_directory_path() / "phnn_test_train";
  fs::create_directories(dir);

  for (int run = 0; run < 2; ++run) {
    Model model(tiny_model());
    TrainResult r = train(model, slices, tiny_train());
    save_checkpoint(dir / ("ckpt" + std::to_string(run) + ".phn1"), r.checkpoint);
    write_loss_log(dir / ("loss" + std::to_string(run) + ".csv"), r.loss_rows, 3, false);
  }
  CHECK(file_bytes(dir / "ckpt0.phn1") == file_bytes(dir / "ckpt1.phn1"));
  CHECK(file_bytes(dir / "loss0.csv") == file_bytes(dir / "loss1.csv"));
}

TEST_CASE("lr = 0 leaves parameters unchanged and the loss constant") {
  auto slices = tiny_slices(4);
  TrainConfig cfg = tiny_train();
  cfg.lr = 1e-300;    // effectively zero; lr must be positive by contract
  cfg.batch_size = 4; // one batch per epoch: batch statistics are then
                      // permutation-invariant across epoch shuffles
  Model model(cfg.model);
  const auto before = flat_params(model);
  TrainResult r = train(model, slices, cfg);
  const auto after = flat_params(model);
  for (size_t i = 0; i < before.size(); ++i) {
    CHECK(std::abs(after[i] - before[i]) < 1e-250);
  }
  // Per-epoch mean loss is flat when nothing moves (individual rows are
  // different batches; the epoch mean covers every sample once).
  std::map<uint64_t, std::pair<double, int>> per_epoch;
  for (const auto& row : r.loss_rows) {
    per_epoch[row.epoch].first += row.total;
    per_epoch[row.epoch].second += 1;
  }
  REQUIRE(per_epoch.size() >= 2);
  const auto first_epoch = per_epoch.begin()->second;
  const auto last_epoch = per_epoch.rbegin()->second;
  CHECK(std::abs(first_epoch.first / first_epoch.second - last_epoch.first / last_epoch.second) <
        1e-9);
  CHECK_THROWS_AS([&] {
    TrainConfig bad = tiny_train();
    bad.lr = 0.0;
    bad.validate();
  }(), ConfigError);
}

TEST_CASE("beta used in training equals estimate_beta of exactly the training slices") {
  auto slices = tiny_slices();
  Model model(tiny_model());
  TrainResult r = train(model, slices, tiny_train());
  CHECK(r.beta == estimate_beta(slices));
  CHECK(r.checkpoint.beta.has_value());
  CHECK(*r.checkpoint.beta == r.beta);
}

TEST_CASE("training loss decreases on the tiny corpus") {
  auto slices = tiny_slices();
  TrainConfig cfg = tiny_train();
  cfg.epochs = 4.0;
  Model model(cfg.model);
  TrainResult r = train(model, slices, cfg);
  double first = 0.0, last = 0.0;
  int n_first = 0, n_last = 0;
  for (const auto& row : r.loss_rows) {
    if (row.epoch == 0) {
      first += row.total;
      ++n_first;
    }
    if (row.epoch == r.loss_rows.back().epoch) {
      last += row.total;
      ++n_last;
    }
  }
  CHECK(first / n_first > last / n_last);
}

TEST_CASE("empty training set is a data error") {
  Model model(tiny_model());
  CHECK_THROWS_AS(train(model, {}, tiny_train()), DataError);
}

TEST_CASE("checkpoint round trip: load(save(ckpt)) resumes bit-identically") {
  auto slices = tiny_slices();
  const auto dir = fs::temp_directory_path() / "phnn_test_resume";
  fs::create_directories(dir);

  // Reference: N+3 steps from scratch. epochs is oversized so max_steps
  // is the binding budget.
  TrainConfig cfg = tiny_train();
  cfg.epochs = 5.0;
  cfg.max_steps = 10;
  Model full(cfg.model);
  TrainResult full_run = train(full, slices, cfg);
  const auto expected = flat_params(full);

  // Stop at 7, save, reload, resume to 10.
  TrainConfig part = tiny_train();
  part.epochs = 5.0;
  part.max_steps = 7;
  Model m1(part.model);
  TrainResult first = train(m1, slices, part);
  save_checkpoint(dir / "mid.phn1", first.checkpoint);

  Checkpoint mid = load_checkpoint(dir / "mid.phn1");
  TrainConfig rest = tiny_train();
  rest.epochs = 5.0;
  rest.max_steps = 10;
  Model m2(rest.model);
  TrainResult second = train(m2, slices, rest, &mid);
  const auto resumed = flat_params(m2);

  REQUIRE(expected.size() == resumed.size());
  for (size_t i = 0; i < expected.size(); ++i) CHECK(expected[i] == resumed[i]);
  CHECK(second.steps_run == 10);

  // save -> load -> save is byte-identical.
  save_checkpoint(dir / "a.phn1", first.checkpoint);
  Checkpoint loaded = load_checkpoint(dir / "a.phn1");
  save_checkpoint(dir / "b.phn1", loaded);
  CHECK(file_bytes(dir / "a.phn1") == file_bytes(dir / "b.phn1"));
}

TEST_CASE("divergence aborts with the last finite checkpoint") {
  auto slices = tiny_slices(4);
  TrainConfig cfg = tiny_train();
  cfg.lr = 1e280;  // guaranteed blow-up
  cfg.epochs = 4.0;
  Model model(cfg.model);
  TrainResult r = train(model, slices, cfg);
  CHECK(r.diverged);
  CHECK(!r.diagnostic.empty());
  // The checkpoint reflects a state whose loss was finite.
  Model restored(cfg.model);
  entries_to_model(r.checkpoint, restored);
  for (const auto& p : restored.parameters()) CHECK(p.tensor.all_finite());
}

TEST_CASE("calibrate_threshold sweeps the grid with ties to the lower value") {
  // Probability volume: 0.6 exactly on the mask voxels, ~0 elsewhere.
  ProbabilityVolume pv;
  pv.nx = pv.ny = pv.nz = 8;
  pv.voxels.assign(512, 1e-6);
  MaskVolume gt;
  gt.nx = gt.ny = gt.nz = 8;
  gt.voxels.assign(512, 0);
  for (int z = 2; z < 6; ++z) {
    for (int y = 2; y < 6; ++y) {
      for (int x = 2; x < 6; ++x) {
        gt.voxels[static_cast<size_t>(x) + 8 * (y + 8 * static_cast<size_t>(z))] = 1;
        pv.voxels[static_cast<size_t>(x) + 8 * (y + 8 * static_cast<size_t>(z))] = 0.6;
      }
    }
  }
  std::vector<double> grid;
  for (int i = 1; i <= 19; ++i) grid.push_back(i * 0.05);

  // Any t <= 0.6 is perfect; the tie rule picks 0.05.
  CHECK(calibrate_threshold_on_probabilities({{pv, gt}}, grid) == doctest::Approx(0.05));

  // Single-point grid returns that value.
  CHECK(calibrate_threshold_on_probabilities({{pv, gt}}, {0.4}) == doctest::Approx(0.4));

  CHECK_THROWS_AS(calibrate_threshold_on_probabilities({}, grid), DataError);
}

TEST_CASE("segment_volume crops to the input extent for awkward dims") {
  // 30x26x6 volume: not a multiple of the model's padding unit.
  SynthSpec spec;
  spec.nx = 30;
  spec.ny = 26;
  spec.nz = 6;
  SynthCase sc = make_synth_case(9, 0, spec);

  TrainConfig cfg = tiny_train();
  cfg.max_steps = 3;
  Model model(cfg.model);
  auto slices = make_slices(sc.volume, sc.mask, 1, cfg.model.pad_multiple());
  train(model, slices, cfg);

  MaskVolume mask = segment_volume(model, sc.volume, 0.5);
  CHECK(mask.nx == 30);
  CHECK(mask.ny == 26);
  CHECK(mask.nz == 6);

  // Untrained model (no bn statistics) is a state error.
  Model untrained(tiny_model());
  CHECK_THROWS_AS(segment_volume(untrained, sc.volume, 0.5), StateError);
}

TEST_CASE("uniform 0.5 probabilities with threshold 0.6 give an empty mask") {
  // Zero collapse weights force probability 0.5 everywhere.
  TrainConfig cfg = tiny_train();
  cfg.max_steps = 1;
  Model model(cfg.model);
  auto slices = tiny_slices(2);
  train(model, slices, cfg);
  for (int m = 1; m <= 3; ++m) {
    auto& w = model.param("stage" + std::to_string(m) + ".collapse.w").tensor;
    for (double& v : w.data_mut()) v = 0.0;
    auto& b = model.param("stage" + std::to_string(m) + ".collapse.b").tensor;
    for (double& v : b.data_mut()) v = 0.0;
  }
  SynthSpec spec;
  spec.nx = 32;
  spec.ny = 32;
  spec.nz = 8;
  SynthCase sc = make_synth_case(3, 0, spec);
  MaskVolume mask = segment_volume(model, sc.volume, 0.6);
  CHECK(mask.foreground_count() == 0);
}

TEST_CASE("threads variation does not change training results") {
  auto slices = tiny_slices(6);
  TrainConfig cfg = tiny_train();
  cfg.max_steps = 4;

  set_thread_count(1);
  Model m1(cfg.model);
  train(m1, slices, cfg);
  const auto p1 = flat_params(m1);

  set_thread_count(4);
  Model m4(cfg.model);
  train(m4, slices, cfg);
  const auto p4 = flat_params(m4);
  set_thread_count(1);

  CHECK(p1 == p4);  // bitwise
}
