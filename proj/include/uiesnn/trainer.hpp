#pragma once

#include <string>
#include <vector>

#include "uiesnn/config.hpp"
#include "uiesnn/data.hpp"
#include "uiesnn/losses.hpp"
#include "uiesnn/network.hpp"
#include "uiesnn/optim.hpp"

namespace uiesnn {

inline constexpr const char* kVersionString = "uiesnn 1.0.0";

// Resolved training run description. Mirrors the flat config keys 1:1 (see
// settings_from_config); validate() enforces patch % 4 == 0, batch >= 1,
// iterations >= 1 on top of NetConfig::validate().
struct TrainSettings {
  NetConfig net;
  LossWeights loss;
  AdamConfig optim;

  int iterations = 100;
  float lr_decay = 0.0f;  // linear: lr_t = lr * (1 - lr_decay * t/iterations)
  unsigned seed = 0;
  int checkpoint_every = 500;

  std::string data_root = "synthetic";  // "synthetic" or a paired directory
  int synthetic_count = 16;
  int synthetic_size = 96;
  int patch = 64;
  int batch = 12;

  void validate() const;
};

// Parses/serialises the flat key=value form. Unknown keys are rejected with
// the offending key and line. serialize round-trips: the output parses back
// to identical settings.
TrainSettings settings_from_config(const Config& cfg);
Config settings_to_config(const TrainSettings& s);

struct TrainResult {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int iterations_run = 0;
  std::string checkpoint_path;
  std::string loss_log_path;
  std::string manifest_path;
};

// Full training loop. Writes, under out_dir:
//   manifest.txt    resolved config (itself a parsable config file) written
//                   before the first step, prefixed with run metadata comments
//   loss_log.csv    iter,l_pix,l_ssim,l_fft,total,psnr_sample per iteration
//   checkpoint.uies at the configured cadence and after the last iteration
// A non-finite loss raises NumericError; the last good checkpoint stays on
// disk. Deterministic for a fixed seed.
TrainResult run_training(const TrainSettings& s, const std::string& out_dir);

struct EvalRow {
  std::string stem;
  double psnr = 0.0, ssim = 0.0;
};
struct EvalReport {
  std::vector<EvalRow> rows;
  double mean_psnr = 0.0, median_psnr = 0.0;
  double mean_ssim = 0.0, median_ssim = 0.0;
  std::vector<std::string> warnings;  // unpaired files, listed and skipped
};

// Evaluates restored-vs-gt quality over a paired directory. When out_dir is
// nonempty, writes per_image.csv and the restored images.
EvalReport run_eval(Model& model, const std::string& data_root,
                    const std::string& out_dir);
std::string format_eval_report(const EvalReport& r);

struct AblationRow {
  std::string label;
  bool fdm = false, mda = false, mplb = false;
  double psnr = 0.0, ssim = 0.0;
};

// Trains and evaluates the four component-toggle configurations
// (a) none, (b) FDM, (c) FDM+MDA, (ours) FDM+MDA+MPLB under one seed and
// budget; evaluation uses a held-out synthetic set derived from the seed.
std::vector<AblationRow> run_ablation(const TrainSettings& base,
                                      const std::string& out_dir);
std::string format_ablation_table(const std::vector<AblationRow>& rows);

// MPLB instances in network order ("enc1.srb0.mplb", ...). Empty when the
// configuration disables MPLB.
std::vector<std::string> list_mplb_blocks(Model& model);

// Runs one instrumented forward and dumps branch spike maps for the chosen
// MPLB instance: {outdir}/{block}/sn{1-4}_t{t}.pgm. An out-of-range index
// raises ConfigError listing the valid indices.
void run_spikemap(Model& model, const Tensor& img, const std::string& outdir,
                  int block_index);

}  // namespace uiesnn
