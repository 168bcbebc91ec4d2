#pragma once

// Operation-count energy proxy. Convolutions are billed either as dense
// multiply-accumulate work (4.9 pJ/MAC) or, when a spiking neuron feeds the
// layer, as accumulate-only work scaled by the measured firing rate
// (0.9 pJ/AC) and by the T*D effective step count. Non-convolution costs
// (batchnorm, pooling, elementwise, attention gates) are excluded.

#include <string>
#include <vector>

#include "uiesnn/network.hpp"
#include "uiesnn/tensor.hpp"

namespace uiesnn {

inline constexpr double kEmacPj = 4.9;  // pJ per multiply-accumulate
inline constexpr double kEacPj = 0.9;   // pJ per accumulate

enum class LayerKind { dense, spike };

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::dense;
  // Hout*Wout product (generalises the square-map O^2 of the cost model).
  long long out_elems = 0;
  int c_in = 0, c_out = 0, k = 0;

  bool operator==(const LayerSpec&) const = default;
};

struct LayerRecord {
  LayerSpec spec;
  double fr = 0.0;  // measured firing rate; meaningful for spike layers
  double energy_pj = 0.0;
};

struct EnergyLedger {
  std::vector<LayerRecord> rows;
  int timesteps = 1;
  int d_levels = 1;

  double total_pj() const;
};

// dense:  out_elems * c_in * c_out * k^2 * 4.9 pJ
// spike:  (T*D) * fr * out_elems * c_in * c_out * k^2 * 0.9 pJ
// Throws ParameterError for invalid geometry or fr outside [0,1].
double layer_energy(const LayerSpec& spec, double fr, int timesteps, int d_levels);

// Runs one instrumented eval forward on `img` and collects one row per
// convolution. Convolutions directly fed by a spiking neuron are billed as
// spike-driven at that neuron's measured firing rate; everything else
// (including the pixel-fed embedding and the output heads) is dense.
EnergyLedger build_ledger(Model& model, const Tensor& img);

// Rebuilds every row's energy (and the totals) for a different effective
// step count while keeping the measured firing rates frozen.
EnergyLedger with_steps(const EnergyLedger& ledger, int timesteps, int d_levels);

// Human-readable table sorted by energy descending; totals in mJ.
std::string energy_report(const EnergyLedger& ledger);

// CSV: header name,kind,O,c_in,c_out,k,fr,energy_pJ then one row per layer.
std::string energy_csv(const EnergyLedger& ledger);

// Parses energy_csv output back. T/D are not stored in the CSV and must be
// supplied. Throws FormatError on malformed input.
EnergyLedger parse_energy_csv(const std::string& csv, int timesteps, int d_levels);

}  // namespace uiesnn
