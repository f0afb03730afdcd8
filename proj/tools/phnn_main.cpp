// Command-line surface: train, segment, eval, synth, gradcheck.
// Exit codes: 0 success, 1 failed check, 2 config error, 3 data error,
// 4 divergence. Logs go to stderr; stdout carries only machine-readable
// output (the gradcheck report).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "phnn/checkpoint.hpp"
#include "phnn/config.hpp"
#include "phnn/ctdata.hpp"
#include "phnn/error.hpp"
#include "phnn/gradcheck.hpp"
#include "phnn/loss.hpp"
#include "phnn/metrics.hpp"
#include "phnn/model.hpp"
#include "phnn/synth.hpp"
#include "phnn/train.hpp"
#include "phnn/version.hpp"
#include "phnn/volume.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void write_run_manifest(const fs::path& dir, const std::string& command, const json& details) {
  json m = details;
  m["command"] = command;
  m["timestamp"] = utc_timestamp();
  m["tool_version"] = phnn::kVersion;
  std::ofstream out(dir / "run_manifest.json", std::ios::trunc);
  out << m.dump(2) << '\n';
}

struct PatientData {
  std::vector<std::pair<phnn::VolumeCT, phnn::MaskVolume>> scans;
};

// Loads every volume/mask pair for the listed patients, with manifest row
// numbers in error messages (row 1 is the header).
std::map<std::string, PatientData> load_patients(const std::vector<phnn::ManifestRow>& rows,
                                                 const std::vector<std::string>& patients) {
  std::map<std::string, PatientData> out;
  for (const auto& id : patients) out[id];
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    auto it = out.find(row.patient_id);
    if (it == out.end()) continue;
    const std::string where = " (manifest row " + std::to_string(i + 2) + ")";
    if (!fs::exists(row.volume_path)) {
      throw phnn::DataError("missing volume file " + row.volume_path.string() + where);
    }
    if (!fs::exists(row.mask_path)) {
      throw phnn::DataError("missing mask file " + row.mask_path.string() + where);
    }
    phnn::VolumeCT vol;
    phnn::MaskVolume mask;
    try {
      vol = phnn::load_volume(row.volume_path);
      mask = phnn::load_mask(row.mask_path);
    } catch (const phnn::Error& e) {
      throw phnn::DataError(std::string(e.what()) + where);
    }
    vol.patient_id = row.patient_id;
    vol.dataset_id = row.dataset_id;
    if (vol.nx != mask.nx || vol.ny != mask.ny || vol.nz != mask.nz) {
      throw phnn::DataError("volume/mask dims mismatch for patient " + row.patient_id + where);
    }
    it->second.scans.emplace_back(std::move(vol), std::move(mask));
  }
  for (const auto& [id, data] : out) {
    if (data.scans.empty()) {
      throw phnn::DataError("patient " + id + " has no manifest rows");
    }
  }
  return out;
}

int cmd_train(const fs::path& manifest_path, int fold_index, const fs::path& config_path,
              const fs::path& out_dir) {
  phnn::TrainConfig cfg = phnn::parse_train_config(config_path);
  if (fold_index < 0 || fold_index >= cfg.folds) {
    throw phnn::ConfigError("--fold " + std::to_string(fold_index) + " out of range for k=" +
                            std::to_string(cfg.folds));
  }
  auto rows = phnn::load_manifest(manifest_path);
  auto split = phnn::split_folds(rows, cfg.folds, cfg.seed, cfg.val_fraction);
  const auto& fold = split.folds[static_cast<size_t>(fold_index)];

  auto train_data = load_patients(rows, fold.train);
  std::vector<phnn::SliceSample> train_slices;
  const int mult = cfg.model.pad_multiple();
  for (const auto& [id, data] : train_data) {
    for (const auto& [vol, mask] : data.scans) {
      auto slices = phnn::make_slices(vol, mask, cfg.stride_for(vol.dataset_id), mult);
      for (auto& s : slices) train_slices.push_back(std::move(s));
    }
  }
  std::cerr << "fold " << fold_index << ": " << fold.train.size() << " train / "
            << fold.val.size() << " val / " << fold.test.size() << " test patients, "
            << train_slices.size() << " training slices\n";

  phnn::Model model(cfg.model);
  phnn::TrainResult result = phnn::train(model, train_slices, cfg);
  std::cerr << "beta = " << result.beta << ", ran " << result.steps_run << " steps\n";

  fs::create_directories(out_dir);
  phnn::write_loss_log(out_dir / "loss_log.csv", result.loss_rows, cfg.model.num_stages,
                       cfg.model.fusion_mode == phnn::FusionMode::hnn);

  if (result.diverged) {
    phnn::save_checkpoint(out_dir / "checkpoint.phn1", result.checkpoint);
    std::cerr << "divergence: " << result.diagnostic << '\n';
    write_run_manifest(out_dir, "train",
                       json{{"config", config_path.string()},
                            {"manifest", manifest_path.string()},
                            {"fold", fold_index},
                            {"seed", cfg.seed},
                            {"beta", result.beta},
                            {"diverged", true},
                            {"outputs", {"checkpoint.phn1", "loss_log.csv"}}});
    return 4;
  }

  auto val_data = load_patients(rows, fold.val);
  std::vector<std::pair<phnn::VolumeCT, phnn::MaskVolume>> validation;
  for (auto& [id, data] : val_data) {
    for (auto& scan : data.scans) validation.push_back(std::move(scan));
  }
  const double t = phnn::calibrate_threshold(model, validation, cfg.grid_or_default());
  std::cerr << "calibrated threshold = " << t << '\n';
  result.checkpoint.calibrated_threshold = t;
  phnn::save_checkpoint(out_dir / "checkpoint.phn1", result.checkpoint);

  write_run_manifest(out_dir, "train",
                     json{{"config", config_path.string()},
                          {"manifest", manifest_path.string()},
                          {"fold", fold_index},
                          {"seed", cfg.seed},
                          {"beta", result.beta},
                          {"calibrated_threshold", t},
                          {"outputs", {"checkpoint.phn1", "loss_log.csv"}}});
  return 0;
}

int cmd_segment(const fs::path& ckpt_path, const fs::path& volume_path, const fs::path& out_path,
                std::optional<double> threshold_flag) {
  phnn::Checkpoint ckpt = phnn::load_checkpoint(ckpt_path);
  double t;
  if (threshold_flag) {
    t = *threshold_flag;
  } else if (ckpt.calibrated_threshold) {
    t = *ckpt.calibrated_threshold;
  } else {
    throw phnn::ConfigError("checkpoint has no calibrated threshold; pass --threshold");
  }

  phnn::Model model(ckpt.config);
  phnn::entries_to_model(ckpt, model);
  phnn::VolumeCT vol = phnn::load_volume(volume_path);
  phnn::MaskVolume mask = phnn::segment_volume(model, vol, t);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  phnn::save_mask(out_path, mask);

  write_run_manifest(out_path.has_parent_path() ? out_path.parent_path() : fs::path("."),
                     "segment",
                     json{{"checkpoint", ckpt_path.string()},
                          {"volume", volume_path.string()},
                          {"threshold", t},
                          {"seed", ckpt.config.seed},
                          {"outputs", {out_path.string()}}});
  return 0;
}

int cmd_eval(const fs::path& pred_dir, const fs::path& gt_dir, const fs::path& report_path,
             std::optional<fs::path> hist_path) {
  if (!fs::is_directory(pred_dir)) throw phnn::DataError("not a directory: " + pred_dir.string());
  if (!fs::is_directory(gt_dir)) throw phnn::DataError("not a directory: " + gt_dir.string());

  std::vector<fs::path> preds;
  for (const auto& entry : fs::directory_iterator(pred_dir)) {
    if (entry.path().extension() == ".svl1") preds.push_back(entry.path());
  }
  std::sort(preds.begin(), preds.end());
  if (preds.empty()) throw phnn::DataError("no .svl1 files in " + pred_dir.string());

  std::vector<phnn::EvalRecord> records;
  bool any_error = false;
  for (const auto& pred_path : preds) {
    const fs::path gt_path = gt_dir / pred_path.filename();
    phnn::EvalRecord rec;
    rec.patient_id = pred_path.stem().string();
    try {
      if (!fs::exists(gt_path)) {
        throw phnn::DataError("no ground-truth mask " + gt_path.string());
      }
      phnn::MaskVolume pred = phnn::load_mask(pred_path);
      phnn::MaskVolume gt = phnn::load_mask(gt_path);
      rec.dice = phnn::dice(pred, gt);
      rec.pred_voxels = pred.foreground_count();
      rec.gt_voxels = gt.foreground_count();
      try {
        rec.asd_mm = phnn::asd_mm(pred, gt);
        rec.asd_defined = true;
      } catch (const phnn::StateError& e) {
        std::cerr << rec.patient_id << ": " << e.what() << '\n';
        rec.asd_defined = false;  // recorded as nan in the report
      }
    } catch (const phnn::Error& e) {
      std::cerr << rec.patient_id << ": " << e.what() << '\n';
      rec.dice = std::nan("");
      rec.asd_defined = false;
      any_error = true;
    }
    records.push_back(std::move(rec));
  }

  if (report_path.has_parent_path()) fs::create_directories(report_path.parent_path());
  phnn::write_report(report_path, records);
  if (hist_path) {
    std::vector<double> edges;
    for (int i = 0; i <= 20; ++i) edges.push_back(static_cast<double>(i) * 0.05);
    phnn::write_histogram(*hist_path, records, edges);
  }
  write_run_manifest(report_path.has_parent_path() ? report_path.parent_path() : fs::path("."),
                     "eval",
                     json{{"pred_dir", pred_dir.string()},
                          {"gt_dir", gt_dir.string()},
                          {"cases", records.size()},
                          {"outputs", {report_path.string()}}});
  return any_error ? 3 : 0;
}

int cmd_synth(const fs::path& out_dir, int cases, uint64_t seed, double single_lung_fraction) {
  if (cases < 1) throw phnn::ConfigError("--cases must be >= 1");
  phnn::SynthSpec spec;
  spec.single_lung_fraction = single_lung_fraction;
  phnn::write_synth_corpus(out_dir, cases, seed, spec);
  write_run_manifest(out_dir, "synth",
                     json{{"cases", cases},
                          {"seed", seed},
                          {"single_lung_fraction", single_lung_fraction},
                          {"outputs", {"manifest.csv"}}});
  return 0;
}

int cmd_gradcheck(std::optional<fs::path> config_path) {
  uint64_t seed = 0;
  if (config_path) {
    phnn::TrainConfig cfg = phnn::parse_train_config(*config_path);
    seed = cfg.seed;
  }
  phnn::BatteryResult battery = phnn::run_gradcheck_battery(seed);
  std::printf("op,max_rel_err,tol,status\n");
  for (const auto& line : battery.lines) {
    std::printf("%s,%.3e,%.0e,%s\n", line.op.c_str(), line.max_rel_err, line.tol,
                line.pass() ? "pass" : "FAIL");
  }
  return battery.all_pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Staged fully-convolutional lung-field segmentation"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Train one cross-validation fold");
  fs::path train_manifest, train_config, train_out;
  int train_fold = 0;
  train->add_option("--manifest", train_manifest, "Dataset manifest CSV")->required();
  train->add_option("--fold", train_fold, "Fold index (0-based)")->required();
  train->add_option("--config", train_config, "key=value config file")->required();
  train->add_option("--out", train_out, "Output directory")->required();

  auto* segment = app.add_subcommand("segment", "Segment one volume");
  fs::path seg_ckpt, seg_volume, seg_out;
  double seg_threshold = -1.0;
  segment->add_option("--checkpoint", seg_ckpt, "PHN1 checkpoint")->required();
  segment->add_option("--volume", seg_volume, "SVL1 CT volume")->required();
  segment->add_option("--out", seg_out, "Output SVL1 mask")->required();
  auto* seg_t_opt = segment->add_option("--threshold", seg_threshold,
                                        "Probability threshold (overrides the checkpoint)");

  auto* eval = app.add_subcommand("eval", "Dice/ASD report over mask directories");
  fs::path eval_pred, eval_gt, eval_report, eval_hist;
  eval->add_option("--pred-dir", eval_pred, "Predicted masks")->required();
  eval->add_option("--gt-dir", eval_gt, "Ground-truth masks")->required();
  eval->add_option("--out", eval_report, "Report CSV")->required();
  auto* hist_opt = eval->add_option("--hist", eval_hist, "Cumulative dice histogram CSV");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic SVL1 corpus");
  fs::path synth_out;
  int synth_cases = 0;
  uint64_t synth_seed = 0;
  double synth_single = 0.2;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--cases", synth_cases, "Number of cases")->required();
  synth->add_option("--seed", synth_seed, "Corpus seed")->required();
  synth->add_option("--single-lung-fraction", synth_single, "Fraction of single-lung cases");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient report");
  fs::path gc_config;
  auto* gc_opt = gradcheck->add_option("--config", gc_config, "key=value config file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << '\n';
    return 2;
  }

  try {
    if (train->parsed()) return cmd_train(train_manifest, train_fold, train_config, train_out);
    if (segment->parsed()) {
      return cmd_segment(seg_ckpt, seg_volume, seg_out,
                         seg_t_opt->count() ? std::optional<double>(seg_threshold) : std::nullopt);
    }
    if (eval->parsed()) {
      return cmd_eval(eval_pred, eval_gt, eval_report,
                      hist_opt->count() ? std::optional<fs::path>(eval_hist) : std::nullopt);
    }
    if (synth->parsed()) return cmd_synth(synth_out, synth_cases, synth_seed, synth_single);
    if (gradcheck->parsed()) {
      return cmd_gradcheck(gc_opt->count() ? std::optional<fs::path>(gc_config) : std::nullopt);
    }
  } catch (const phnn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const phnn::StateError& e) {
    std::cerr << "state error: " << e.what() << '\n';
    return 2;
  } catch (const phnn::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << '\n';
    return 4;
  } catch (const phnn::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const phnn::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
