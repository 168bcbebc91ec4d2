#include "uiesnn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "uiesnn/blocks.hpp"

namespace fs = std::filesystem;

namespace uiesnn {

void TrainSettings::validate() const {
  net.validate();
  if (iterations < 1) throw ConfigError("train.iterations must be >= 1");
  if (patch < 4 || patch % 4 != 0)
    throw ConfigError("data.patch must be a positive multiple of 4");
  if (batch < 1) throw ConfigError("data.batch must be >= 1");
  if (lr_decay < 0.0f || lr_decay >= 1.0f)
    throw ConfigError("train.lr_decay must be in [0, 1)");
  if (checkpoint_every < 1)
    throw ConfigError("train.checkpoint_every must be >= 1");
  if (optim.lr <= 0.0f) throw ConfigError("optim.lr must be positive");
  if (data_root == "synthetic") {
    if (synthetic_count < 1)
      throw ConfigError("data.synthetic_count must be >= 1");
    if (synthetic_size < 4)
      throw ConfigError("data.synthetic_size must be >= 4");
  }
}

namespace {

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "net.timesteps",      "net.d_levels",       "net.base_channels",
      "net.stage_layout",   "net.use_fdm",        "net.use_mda",
      "net.use_mplb",       "neuron.gamma",       "neuron.v_th",
      "neuron.surrogate_alpha",
      "loss.lambda_pix",    "loss.lambda_ssim",   "loss.lambda_fft",
      "optim.lr",           "optim.beta1",        "optim.beta2",
      "optim.weight_decay", "train.iterations",   "train.lr_decay",
      "train.seed",         "train.checkpoint_every",
      "data.root",          "data.synthetic_count",
      "data.synthetic_size", "data.patch",        "data.batch"};
  return keys;
}

std::string fmt_float(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

TrainSettings settings_from_config(const Config& cfg) {
  cfg.reject_unknown_keys(known_keys());
  TrainSettings s;
  s.net.timesteps = int(cfg.get_int("net.timesteps", s.net.timesteps));
  s.net.d_levels = int(cfg.get_int("net.d_levels", s.net.d_levels));
  s.net.base_channels =
      int(cfg.get_int("net.base_channels", s.net.base_channels));
  if (cfg.has("net.stage_layout")) {
    const std::vector<int> layout = cfg.get_int_list("net.stage_layout");
    if (layout.size() != 6)
      throw ConfigError("net.stage_layout needs exactly 6 entries");
    std::copy(layout.begin(), layout.end(), s.net.stage_layout.begin());
  }
  s.net.use_fdm = cfg.get_bool("net.use_fdm", s.net.use_fdm);
  s.net.use_mda = cfg.get_bool("net.use_mda", s.net.use_mda);
  s.net.use_mplb = cfg.get_bool("net.use_mplb", s.net.use_mplb);
  s.net.neuron.gamma = float(cfg.get_float("neuron.gamma", s.net.neuron.gamma));
  s.net.neuron.v_th = float(cfg.get_float("neuron.v_th", s.net.neuron.v_th));
  s.net.neuron.surrogate_alpha = float(
      cfg.get_float("neuron.surrogate_alpha", s.net.neuron.surrogate_alpha));
  s.loss.lambda_pix =
      float(cfg.get_float("loss.lambda_pix", s.loss.lambda_pix));
  s.loss.lambda_ssim =
      float(cfg.get_float("loss.lambda_ssim", s.loss.lambda_ssim));
  s.loss.lambda_fft =
      float(cfg.get_float("loss.lambda_fft", s.loss.lambda_fft));
  s.optim.lr = float(cfg.get_float("optim.lr", s.optim.lr));
  s.optim.beta1 = float(cfg.get_float("optim.beta1", s.optim.beta1));
  s.optim.beta2 = float(cfg.get_float("optim.beta2", s.optim.beta2));
  s.optim.weight_decay =
      float(cfg.get_float("optim.weight_decay", s.optim.weight_decay));
  s.iterations = int(cfg.get_int("train.iterations", s.iterations));
  s.lr_decay = float(cfg.get_float("train.lr_decay", s.lr_decay));
  s.seed = unsigned(cfg.get_int("train.seed", s.seed));
  s.checkpoint_every =
      int(cfg.get_int("train.checkpoint_every", s.checkpoint_every));
  s.data_root = cfg.get_string("data.root", s.data_root);
  s.synthetic_count =
      int(cfg.get_int("data.synthetic_count", s.synthetic_count));
  s.synthetic_size = int(cfg.get_int("data.synthetic_size", s.synthetic_size));
  s.patch = int(cfg.get_int("data.patch", s.patch));
  s.batch = int(cfg.get_int("data.batch", s.batch));
  s.validate();
  return s;
}

Config settings_to_config(const TrainSettings& s) {
  Config cfg;
  cfg.set("net.timesteps", std::to_string(s.net.timesteps));
  cfg.set("net.d_levels", std::to_string(s.net.d_levels));
  cfg.set("net.base_channels", std::to_string(s.net.base_channels));
  std::ostringstream layout;
  for (std::size_t i = 0; i < s.net.stage_layout.size(); ++i)
    layout << (i ? "," : "") << s.net.stage_layout[i];
  cfg.set("net.stage_layout", layout.str());
  cfg.set("net.use_fdm", s.net.use_fdm ? "true" : "false");
  cfg.set("net.use_mda", s.net.use_mda ? "true" : "false");
  cfg.set("net.use_mplb", s.net.use_mplb ? "true" : "false");
  cfg.set("neuron.gamma", fmt_float(s.net.neuron.gamma));
  cfg.set("neuron.v_th", fmt_float(s.net.neuron.v_th));
  cfg.set("neuron.surrogate_alpha", fmt_float(s.net.neuron.surrogate_alpha));
  cfg.set("loss.lambda_pix", fmt_float(s.loss.lambda_pix));
  cfg.set("loss.lambda_ssim", fmt_float(s.loss.lambda_ssim));
  cfg.set("loss.lambda_fft", fmt_float(s.loss.lambda_fft));
  cfg.set("optim.lr", fmt_float(s.optim.lr));
  cfg.set("optim.beta1", fmt_float(s.optim.beta1));
  cfg.set("optim.beta2", fmt_float(s.optim.beta2));
  cfg.set("optim.weight_decay", fmt_float(s.optim.weight_decay));
  cfg.set("train.iterations", std::to_string(s.iterations));
  cfg.set("train.lr_decay", fmt_float(s.lr_decay));
  cfg.set("train.seed", std::to_string(s.seed));
  cfg.set("train.checkpoint_every", std::to_string(s.checkpoint_every));
  cfg.set("data.root", s.data_root);
  cfg.set("data.synthetic_count", std::to_string(s.synthetic_count));
  cfg.set("data.synthetic_size", std::to_string(s.synthetic_size));
  cfg.set("data.patch", std::to_string(s.patch));
  cfg.set("data.batch", std::to_string(s.batch));
  return cfg;
}

namespace {

// Materialises the paired dataset for a run: either the configured directory
// or a synthetic set generated deterministically from the seed.
std::string resolve_data_root(const TrainSettings& s,
                              const std::string& out_dir) {
  if (s.data_root != "synthetic") return s.data_root;
  const std::string dir = (fs::path(out_dir) / "synthetic_data").string();
  generate_synthetic_dataset(dir, s.synthetic_count, s.synthetic_size,
                             s.synthetic_size, s.seed);
  return dir;
}

void write_manifest(const TrainSettings& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path);
  const std::time_t now = std::time(nullptr);
  char stamp[64];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  out << "# run manifest (re-parseable as a config file)\n"
      << "# version: " << kVersionString << '\n'
      << "# start: " << stamp << '\n'
      << settings_to_config(s).serialize();
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TrainResult run_training(const TrainSettings& s, const std::string& out_dir) {
  s.validate();
  fs::create_directories(out_dir);

  TrainResult res;
  res.manifest_path = (fs::path(out_dir) / "manifest.txt").string();
  res.loss_log_path = (fs::path(out_dir) / "loss_log.csv").string();
  res.checkpoint_path = (fs::path(out_dir) / "checkpoint.uies").string();
  write_manifest(s, res.manifest_path);

  const PairedDataset ds(resolve_data_root(s, out_dir));
  Model model(s.net);
  Adam adam(s.optim);
  std::mt19937 rng(s.seed);

  std::ofstream log(res.loss_log_path);
  if (!log) throw DataError("cannot write loss log " + res.loss_log_path);
  log << "iter,l_pix,l_ssim,l_fft,total,psnr_sample\n";

  for (int iter = 0; iter < s.iterations; ++iter) {
    const PairBatch batch = sample_patches(ds, s.patch, s.batch, rng);

    LossBreakdown bd;
    MultiScaleOutput out;
    Tape tape;
    {
      Tape::Scope scope(tape);
      out = model.forward(batch.degraded, /*training=*/true);
      Tensor total = total_loss(out, batch.clean, s.loss, &bd);
      if (!std::isfinite(bd.total))
        throw NumericError("non-finite loss at iteration " +
                           std::to_string(iter) +
                           "; last good checkpoint retained");
      tape.backward(total);
    }
    const float lr =
        s.optim.lr * (1.0f - s.lr_decay * float(iter) / float(s.iterations));
    adam.step(model.registry(), lr);
    model.step = iter + 1;

    const double sample_psnr = psnr(out.full, batch.clean);
    char row[192];
    std::snprintf(row, sizeof row, "%d,%.9g,%.9g,%.9g,%.9g,%.9g\n", iter,
                  bd.l_pix, bd.l_ssim, bd.l_fft, bd.total, sample_psnr);
    log << row;
    log.flush();

    if (iter == 0) res.initial_loss = bd.total;
    res.final_loss = bd.total;
    ++res.iterations_run;

    if ((iter + 1) % s.checkpoint_every == 0 || iter + 1 == s.iterations)
      model.save_checkpoint(res.checkpoint_path);
  }
  return res;
}

EvalReport run_eval(Model& model, const std::string& data_root,
                    const std::string& out_dir) {
  const PairedDataset ds(data_root, /*allow_unpaired=*/true);
  EvalReport rep;
  rep.warnings = ds.warnings();

  std::ofstream csv;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    csv.open(fs::path(out_dir) / "per_image.csv");
    csv << "stem,psnr,ssim\n";
  }

  std::vector<double> psnrs, ssims;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Tensor input = image_to_tensor(ds.input(i));
    const Tensor gt = image_to_tensor(ds.gt(i));
    const MultiScaleOutput out = model.forward(input, /*training=*/false);
    const ImageRGB restored_img = tensor_to_image(out.full);  // clamps
    const Tensor restored = image_to_tensor(restored_img);

    EvalRow row{ds.stem(i), psnr(restored, gt), ssim_metric(restored, gt)};
    psnrs.push_back(row.psnr);
    ssims.push_back(row.ssim);
    rep.rows.push_back(row);
    if (csv.is_open()) {
      char line[160];
      std::snprintf(line, sizeof line, "%s,%.9g,%.9g\n", row.stem.c_str(),
                    row.psnr, row.ssim);
      csv << line;
      save_image(restored_img,
                 (fs::path(out_dir) / (row.stem + "_restored.ppm")).string());
    }
  }
  if (!rep.rows.empty()) {
    double sp = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < psnrs.size(); ++i) {
      sp += psnrs[i];
      ss += ssims[i];
    }
    rep.mean_psnr = sp / double(psnrs.size());
    rep.mean_ssim = ss / double(ssims.size());
    rep.median_psnr = median_of(psnrs);
    rep.median_ssim = median_of(ssims);
  }
  return rep;
}

std::string format_eval_report(const EvalReport& r) {
  std::ostringstream os;
  char line[160];
  for (const EvalRow& row : r.rows) {
    std::snprintf(line, sizeof line, "%-24s psnr %8.3f dB   ssim %7.4f\n",
                  row.stem.c_str(), row.psnr, row.ssim);
    os << line;
  }
  std::snprintf(line, sizeof line,
                "mean   psnr %8.3f dB   ssim %7.4f\n"
                "median psnr %8.3f dB   ssim %7.4f\n",
                r.mean_psnr, r.mean_ssim, r.median_psnr, r.median_ssim);
  os << line;
  for (const std::string& w : r.warnings) os << "warning: " << w << '\n';
  os << r.rows.size() << " image pairs, " << r.warnings.size()
     << " warnings\n";
  return os.str();
}

std::vector<AblationRow> run_ablation(const TrainSettings& base,
                                      const std::string& out_dir) {
  fs::create_directories(out_dir);
  const std::string holdout = (fs::path(out_dir) / "holdout").string();
  generate_synthetic_dataset(holdout, std::max(4, base.synthetic_count / 2),
                             base.synthetic_size, base.synthetic_size,
                             base.seed + 9001u);

  struct Variant {
    const char* label;
    bool fdm, mda, mplb;
  };
  // component-toggle rows, cumulative additions ending at the full model
  const Variant variants[] = {{"(a) baseline", false, false, false},
                              {"(b) +FDM", true, false, false},
                              {"(c) +FDM+MDA", true, true, false},
                              {"(d) full", true, true, true}};

  std::vector<AblationRow> rows;
  for (const Variant& v : variants) {
    TrainSettings s = base;
    s.net.use_fdm = v.fdm;
    s.net.use_mda = v.mda;
    s.net.use_mplb = v.mplb;
    const std::string run_dir =
        (fs::path(out_dir) / (std::string("row_") + (v.label[1]))).string();
    const TrainResult tr = run_training(s, run_dir);
    Model model = Model::load_checkpoint(tr.checkpoint_path);
    const EvalReport rep = run_eval(model, holdout, "");
    rows.push_back(
        {v.label, v.fdm, v.mda, v.mplb, rep.mean_psnr, rep.mean_ssim});
  }
  return rows;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-14s %5s %5s %5s %10s %8s\n", "config",
                "FDM", "MDA", "MPLB", "PSNR(dB)", "SSIM");
  os << line;
  for (const AblationRow& r : rows) {
    std::snprintf(line, sizeof line, "%-14s %5s %5s %5s %10.3f %8.4f\n",
                  r.label.c_str(), r.fdm ? "yes" : "-", r.mda ? "yes" : "-",
                  r.mplb ? "yes" : "-", r.psnr, r.ssim);
    os << line;
  }
  return os.str();
}

std::vector<std::string> list_mplb_blocks(Model& model) {
  std::vector<std::string> blocks;
  model.for_each_neuron([&](SpikeNeuron& n) {
    const std::string& name = n.name();
    const std::size_t pos = name.find(".branch1.lif");
    if (pos != std::string::npos && pos + 12 == name.size())
      blocks.push_back(name.substr(0, pos));
  });
  return blocks;
}

void run_spikemap(Model& model, const Tensor& img, const std::string& outdir,
                  int block_index) {
  const std::vector<std::string> blocks = list_mplb_blocks(model);
  if (block_index < 0 || block_index >= int(blocks.size())) {
    std::ostringstream os;
    os << "spike-map block index " << block_index
       << " out of range; valid indices:";
    for (std::size_t i = 0; i < blocks.size(); ++i)
      os << ' ' << i << "=" << blocks[i];
    if (blocks.empty()) os << " none (MPLB disabled)";
    throw ConfigError(os.str());
  }
  const std::string& block = blocks[std::size_t(block_index)];

  model.set_record_stats(true);
  model.forward(img, /*training=*/false);
  model.set_record_stats(false);

  for (int b = 1; b <= 4; ++b) {
    const std::string want = block + ".branch" + std::to_string(b) + ".lif";
    bool found = false;
    model.for_each_neuron([&](SpikeNeuron& n) {
      if (n.name() != want || found) return;
      found = true;
      if (!n.has_cache())
        throw UsageError("neuron " + want + " has no cached spikes");
      dump_spike_maps(n.last_spikes(), n.last_shape(), outdir, block,
                      "sn" + std::to_string(b));
    });
    if (!found) throw UsageError("missing MPLB branch neuron " + want);
  }
}

}  // namespace uiesnn
