// ynet — command-line front end for the separation pipeline.
//
// Subcommands: synth-data, train, separate, evaluate, render, gradcheck.
// Exit codes: 0 success, 1 usage error, 2 data/format error, 3 internal
// check failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "ynet/audio.hpp"
#include "ynet/checkpoint.hpp"
#include "ynet/dsp.hpp"
#include "ynet/errors.hpp"
#include "ynet/gradcheck.hpp"
#include "ynet/metrics.hpp"
#include "ynet/model.hpp"
#include "ynet/separate.hpp"
#include "ynet/train.hpp"

namespace fs = std::filesystem;
using namespace ynet;

namespace {

int cmd_synth_data(const std::string& out_dir, int pairs, uint64_t seed, int samples) {
  if (pairs < 1) throw UsageError("--pairs must be >= 1");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create output directory: " + out_dir);

  const auto dataset = synth_dataset(seed, pairs, samples);
  for (int i = 0; i < pairs; ++i) {
    const fs::path dir = fs::path(out_dir) / std::to_string(i);
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create pair directory: " + dir.string());
    AudioClip mix{dataset[static_cast<size_t>(i)].mixture, 44100};
    AudioClip voc{dataset[static_cast<size_t>(i)].vocals, 44100};
    write_wav(mix, (dir / "mixture.wav").string());
    write_wav(voc, (dir / "vocals.wav").string());
  }
  std::cout << "wrote " << pairs << " pairs under " << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& data_dir, const std::string& val_dir, TrainConfig cfg) {
  cfg.validate();
  const auto pairs = build_dataset(data_dir, cfg.model.window_samples);
  std::vector<ExamplePair> val;
  if (!val_dir.empty()) val = build_dataset(val_dir, cfg.model.window_samples);

  const TrainResult result = train(cfg, pairs, val);
  std::cout << "checkpoint: " << cfg.checkpoint_path << "\n";
  std::cout << "loss log:   " << cfg.loss_log_path << "\n";
  std::cout << "final train loss: " << result.final_loss << "\n";
  return 0;
}

void write_mask_pgm(const SeparationResult& sep, const std::string& path) {
  // Transposed for viewing: one row per time frame, one column per frequency
  // bin (low frequencies at the left).
  const int rows = sep.mask_rows, cols = sep.mask_cols;
  std::vector<double> t(static_cast<size_t>(rows) * cols);
  for (int f = 0; f < rows; ++f)
    for (int c = 0; c < cols; ++c)
      t[static_cast<size_t>(c) * rows + f] = sep.mask[static_cast<size_t>(f) * cols + c];
  write_pgm(t, cols, rows, path);
}

int cmd_separate(const std::string& ckpt_path, const std::string& in_path,
                 const std::string& out_path, const std::string& mask_path,
                 std::optional<double> force_mask) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  const AudioClip mix = read_wav(in_path);
  SeparateOptions opts;
  opts.force_mask = force_mask;
  const SeparationResult sep = separate(mix, ckpt, opts);
  write_wav(sep.vocal, out_path, WavEncoding::Float32);
  if (!mask_path.empty()) write_mask_pgm(sep, mask_path);
  std::cout << "wrote " << out_path << " (" << sep.vocal.samples.size() << " samples)\n";
  return 0;
}

int cmd_evaluate(const std::string& ref_dir, const std::string& est_dir,
                 const std::string& out_csv) {
  const EvalReport report = evaluate_pairs(ref_dir, est_dir);
  for (const auto& name : report.missing)
    std::cerr << "warning: " << name << " present on only one side, skipped\n";
  write_report_csv(report, out_csv);
  std::cout << "evaluated " << report.rows.size() << " pairs; mean sdr " << report.mean.sdr_db
            << " dB, si-snr " << report.mean.si_snr_db << " dB, stoi " << report.mean.stoi_score
            << "\n";
  return 0;
}

int cmd_render(const std::string& in_path, const std::string& out_pgm, int n_mels,
               const std::string& out_csv) {
  const AudioClip clip = read_wav(in_path);
  const ComplexSpectrogram spec = stft(clip);  // throws UsageError when too short
  const std::vector<double> mel = mel_render(spec, n_mels);
  write_pgm(mel, n_mels, spec.time_bins, out_pgm);
  if (!out_csv.empty()) write_csv_matrix(mel, n_mels, spec.time_bins, out_csv);
  std::cout << "rendered " << n_mels << "x" << spec.time_bins << " to " << out_pgm << "\n";
  return 0;
}

int cmd_gradcheck(uint64_t seed, int n_seeds, bool sabotage) {
  const GradCheckReport report = run_gradcheck(seed, n_seeds, sabotage);
  std::printf("%-16s %-12s %s\n", "op", "max rel err", "result");
  for (const auto& row : report.rows)
    std::printf("%-16s %-12.3e %s\n", row.op.c_str(), row.max_rel_err,
                row.pass ? "pass" : "FAIL");
  if (!report.all_pass()) throw InternalError("gradient check failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ynet — hybrid waveform/spectrogram vocal separation"};
  app.require_subcommand(1);

  // synth-data
  std::string sd_out;
  int sd_pairs = 0;
  uint64_t sd_seed = 0;
  int sd_samples = 67072;
  auto* synth = app.add_subcommand("synth-data", "generate synthetic vocal/accompaniment pairs");
  synth->add_option("--out", sd_out, "output directory")->required();
  synth->add_option("--pairs", sd_pairs, "number of pairs")->required();
  synth->add_option("--seed", sd_seed, "random seed");
  synth->add_option("--samples", sd_samples, "samples per clip");

  // train
  std::string tr_data, tr_val, tr_arch = "ynet";
  TrainConfig tr_cfg;
  tr_cfg.checkpoint_path = "model.ckpt";
  tr_cfg.loss_log_path = "loss_log.csv";
  auto* trainc = app.add_subcommand("train", "train a separation model");
  trainc->set_config("--config", "", "key=value config file (command line wins)");
  trainc->add_option("--data", tr_data, "dataset root (<song>/mixture.wav + vocals.wav)")
      ->required();
  trainc->add_option("--val-data", tr_val, "validation dataset root");
  trainc->add_option("--arch", tr_arch, "ynet | unet-spec | unet-wave");
  trainc->add_option("--base-channels", tr_cfg.model.base_channels, "encoder base channel count");
  trainc->add_option("--epochs", tr_cfg.epochs, "training epochs");
  trainc->add_option("--batch", tr_cfg.batch_size, "batch size");
  trainc->add_option("--lr", tr_cfg.learning_rate, "Adam learning rate");
  trainc->add_option("--seed", tr_cfg.seed, "random seed");
  trainc->add_option("--dropout", tr_cfg.model.dropout, "encoder dropout rate");
  trainc->add_flag("--log-mag", tr_cfg.log_mag, "log1p-compress input magnitudes");
  trainc->add_option("--out", tr_cfg.checkpoint_path, "checkpoint output path");
  trainc->add_option("--loss-log", tr_cfg.loss_log_path, "loss log CSV path");

  // separate
  std::string sp_ckpt, sp_in, sp_out, sp_mask;
  double sp_force = 0.0;
  bool sp_has_force = false;
  auto* sep = app.add_subcommand("separate", "extract vocals from a mixture WAV");
  sep->add_option("--ckpt", sp_ckpt, "checkpoint file")->required();
  sep->add_option("--in", sp_in, "input mixture WAV")->required();
  sep->add_option("--out", sp_out, "output vocal WAV")->required();
  sep->add_option("--mask-out", sp_mask, "write the predicted mask as a PGM image");
  sep->add_option("--force-mask", sp_force, "bypass the model with a constant mask (self-check)")
      ->group("");  // hidden test hook

  // evaluate
  std::string ev_ref, ev_est, ev_out;
  auto* eval = app.add_subcommand("evaluate", "score estimates against references");
  eval->add_option("--ref", ev_ref, "reference WAV directory")->required();
  eval->add_option("--est", ev_est, "estimate WAV directory")->required();
  eval->add_option("--out", ev_out, "report CSV path")->required();

  // render
  std::string rn_in, rn_out, rn_csv;
  int rn_mels = 128;
  auto* render = app.add_subcommand("render", "render a mel spectrogram image");
  render->add_option("--in", rn_in, "input WAV")->required();
  render->add_option("--out", rn_out, "output PGM")->required();
  render->add_option("--mel", rn_mels, "number of mel bands");
  render->add_option("--csv", rn_csv, "also write the matrix as CSV");

  // gradcheck
  uint64_t gc_seed = 1234;
  int gc_seeds = 10;
  bool gc_sabotage = false;
  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  grad->add_option("--seed", gc_seed, "base random seed");
  grad->add_option("--seeds", gc_seeds, "number of seeds per op");
  grad->add_flag("--sabotage", gc_sabotage, "corrupt one gradient (self-test of the checker)")
      ->group("");  // hidden test hook

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth) return cmd_synth_data(sd_out, sd_pairs, sd_seed, sd_samples);
    if (*trainc) {
      tr_cfg.model.architecture = parse_arch(tr_arch);
      return cmd_train(tr_data, tr_val, tr_cfg);
    }
    if (*sep) {
      sp_has_force = sep->count("--force-mask") > 0;
      return cmd_separate(sp_ckpt, sp_in, sp_out, sp_mask,
                          sp_has_force ? std::optional<double>(sp_force) : std::nullopt);
    }
    if (*eval) return cmd_evaluate(ev_ref, ev_est, ev_out);
    if (*render) return cmd_render(rn_in, rn_out, rn_mels, rn_csv);
    if (*grad) return cmd_gradcheck(gc_seed, gc_seeds, gc_sabotage);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const InternalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
