// Command-line front end: train / eval / energy / ablate / spikemap.
// Exit codes: 0 success, 2 configuration or usage error, 3 data or file
// error, 4 numeric abort.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "uiesnn/config.hpp"
#include "uiesnn/data.hpp"
#include "uiesnn/energy.hpp"
#include "uiesnn/network.hpp"
#include "uiesnn/trainer.hpp"

namespace fs = std::filesystem;
using namespace uiesnn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct Args {
  std::string config, checkpoint, data, out;
  long long seed = -1;  // <0: keep the config's seed
  bool td_sweep = false;
  int block = 0;
};

TrainSettings load_settings(const Args& a) {
  if (a.config.empty()) throw ConfigError("--config is required");
  Config cfg = Config::parse_file(a.config);
  if (a.seed >= 0) cfg.set("train.seed", std::to_string(a.seed));
  if (!a.data.empty()) cfg.set("data.root", a.data);
  return settings_from_config(cfg);
}

Model load_model(const Args& a) {
  if (a.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  return Model::load_checkpoint(a.checkpoint);
}

int cmd_train(const Args& a) {
  const TrainSettings s = load_settings(a);
  const std::string out = a.out.empty() ? "run" : a.out;
  const TrainResult r = run_training(s, out);
  std::printf("trained %d iterations: loss %.6g -> %.6g\n", r.iterations_run,
              r.initial_loss, r.final_loss);
  std::printf("checkpoint: %s\nloss log:   %s\nmanifest:   %s\n",
              r.checkpoint_path.c_str(), r.loss_log_path.c_str(),
              r.manifest_path.c_str());
  return kExitOk;
}

int cmd_eval(const Args& a) {
  Model model = load_model(a);
  if (a.data.empty()) throw ConfigError("--data is required");
  const EvalReport rep = run_eval(model, a.data, a.out);
  std::fputs(format_eval_report(rep).c_str(), stdout);
  return kExitOk;
}

int cmd_energy(const Args& a) {
  Model model = load_model(a);
  Tensor img;
  if (!a.data.empty()) {
    const PairedDataset ds(a.data, /*allow_unpaired=*/true);
    if (ds.size() == 0) throw DataError("no image pairs under " + a.data);
    img = image_to_tensor(ds.input(0));
  } else {
    img = image_to_tensor(synth_texture(64, 64, unsigned(std::max(
                                                    a.seed, 0LL))));
  }
  const EnergyLedger ledger = build_ledger(model, img);

  if (a.td_sweep) {
    const int grid[4][2] = {{1, 1}, {1, 4}, {4, 1}, {4, 4}};
    for (const auto& td : grid)
      std::printf("T=%d D=%d total %.6f mJ\n", td[0], td[1],
                  with_steps(ledger, td[0], td[1]).total_pj() * 1e-9);
  } else {
    std::fputs(energy_report(ledger).c_str(), stdout);
  }
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    std::ofstream csv(fs::path(a.out) / "energy.csv");
    csv << energy_csv(ledger);
  }
  return kExitOk;
}

int cmd_ablate(const Args& a) {
  const TrainSettings s = load_settings(a);
  const std::string out = a.out.empty() ? "ablation" : a.out;
  const std::vector<AblationRow> rows = run_ablation(s, out);
  const std::string table = format_ablation_table(rows);
  std::fputs(table.c_str(), stdout);
  std::ofstream(fs::path(out) / "ablation.txt") << table;
  return kExitOk;
}

int cmd_spikemap(const Args& a) {
  Model model = load_model(a);
  if (a.data.empty())
    throw ConfigError("--data must name an input image for spikemap");
  const Tensor img = image_to_tensor(load_image(a.data));
  const std::string out = a.out.empty() ? "spikemaps" : a.out;
  run_spikemap(model, img, out, a.block);
  std::printf("spike maps written under %s\n", out.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spiking underwater image enhancement engine"};
  app.require_subcommand(1);
  Args args;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", args.config, "config file (key = value)");
    sub->add_option("--checkpoint", args.checkpoint, "model checkpoint");
    sub->add_option("--data", args.data, "dataset root or image path");
    sub->add_option("--out", args.out, "output directory");
    sub->add_option("--seed", args.seed, "root seed override");
    return sub;
  };
  CLI::App* train = add_common(app.add_subcommand("train", "train a model"));
  CLI::App* eval_c =
      add_common(app.add_subcommand("eval", "report PSNR/SSIM on paired data"));
  CLI::App* energy =
      add_common(app.add_subcommand("energy", "operation-count energy proxy"));
  energy->add_flag("--td-sweep", args.td_sweep,
                   "totals for the T x D grid {1x1, 1x4, 4x1, 4x4}");
  CLI::App* ablate =
      add_common(app.add_subcommand("ablate", "component-toggle comparison"));
  CLI::App* spikemap = add_common(
      app.add_subcommand("spikemap", "dump MPLB branch spike maps as PGM"));
  spikemap->add_option("--block", args.block, "MPLB instance index");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (train->parsed()) return cmd_train(args);
    if (eval_c->parsed()) return cmd_eval(args);
    if (energy->parsed()) return cmd_energy(args);
    if (ablate->parsed()) return cmd_ablate(args);
    if (spikemap->parsed()) return cmd_spikemap(args);
    std::fprintf(stderr, "no subcommand given\n");
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitConfig;
  } catch (const ParameterError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric abort: %s\n", e.what());
    return kExitNumeric;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const IncompatibleCheckpointError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumeric;
  }
}
