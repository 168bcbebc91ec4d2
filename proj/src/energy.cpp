#include "uiesnn/energy.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <string>

namespace uiesnn {

namespace {

const char* kind_str(LayerKind k) {
  return k == LayerKind::spike ? "spike" : "dense";
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double EnergyLedger::total_pj() const {
  double total = 0.0;
  for (const LayerRecord& r : rows) total += r.energy_pj;
  return total;
}

double layer_energy(const LayerSpec& spec, double fr, int timesteps, int d_levels) {
  if (spec.out_elems <= 0 || spec.c_in <= 0 || spec.c_out <= 0 || spec.k <= 0)
    throw ParameterError("layer_energy: non-positive geometry for '" + spec.name + "'");
  if (timesteps <= 0 || d_levels <= 0)
    throw ParameterError("layer_energy: T and D must be positive");
  const double ops = double(spec.out_elems) * spec.c_in * spec.c_out *
                     double(spec.k) * spec.k;
  if (spec.kind == LayerKind::dense) return ops * kEmacPj;
  if (fr < 0.0 || fr > 1.0)
    throw ParameterError("layer_energy: firing rate " + std::to_string(fr) +
                         " outside [0,1] for '" + spec.name + "'");
  return double(timesteps) * d_levels * fr * ops * kEacPj;
}

EnergyLedger build_ledger(Model& model, const Tensor& img) {
  model.set_record_stats(true);
  model.forward(img, /*training=*/false);
  model.set_record_stats(false);

  EnergyLedger ledger;
  ledger.timesteps = model.config().timesteps;
  ledger.d_levels = model.config().d_levels;
  model.for_each_conv([&](const std::string& name, const Conv2dLayer& conv,
                          const SpikeNeuron* driver) {
    LayerRecord rec;
    rec.spec.name = name;
    rec.spec.kind = driver ? LayerKind::spike : LayerKind::dense;
    rec.spec.out_elems = (long long)(conv.last_out_h) * conv.last_out_w;
    rec.spec.c_in = conv.in_ch;
    rec.spec.c_out = conv.out_ch;
    rec.spec.k = conv.k;
    rec.fr = driver ? driver->last_firing_rate() : 0.0;
    rec.energy_pj =
        layer_energy(rec.spec, rec.fr, ledger.timesteps, ledger.d_levels);
    ledger.rows.push_back(std::move(rec));
  });
  return ledger;
}

EnergyLedger with_steps(const EnergyLedger& ledger, int timesteps, int d_levels) {
  EnergyLedger out = ledger;
  out.timesteps = timesteps;
  out.d_levels = d_levels;
  for (LayerRecord& r : out.rows)
    r.energy_pj = layer_energy(r.spec, r.fr, timesteps, d_levels);
  return out;
}

std::string energy_report(const EnergyLedger& ledger) {
  std::vector<const LayerRecord*> sorted;
  sorted.reserve(ledger.rows.size());
  for (const LayerRecord& r : ledger.rows) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const LayerRecord* a, const LayerRecord* b) {
                     return a->energy_pj > b->energy_pj;
                   });

  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-28s %-6s %10s %5s %5s %3s %8s %16s\n",
                "layer", "kind", "HxW", "c_in", "c_out", "k", "fr", "energy_pJ");
  os << line;
  for (const LayerRecord* r : sorted) {
    std::snprintf(line, sizeof line,
                  "%-28s %-6s %10lld %5d %5d %3d %8.4f %16.1f\n",
                  r->spec.name.c_str(), kind_str(r->spec.kind),
                  r->spec.out_elems, r->spec.c_in, r->spec.c_out, r->spec.k,
                  r->fr, r->energy_pj);
    os << line;
  }
  std::snprintf(line, sizeof line,
                "total: %.6f mJ over %zu layers (T=%d, D=%d)\n",
                ledger.total_pj() * 1e-9, ledger.rows.size(),
                ledger.timesteps, ledger.d_levels);
  os << line;
  os << "note: convolution costs only; batchnorm, pooling, elementwise and "
        "attention-gate work is excluded from the proxy.\n";
  return os.str();
}

std::string energy_csv(const EnergyLedger& ledger) {
  std::ostringstream os;
  os << "name,kind,O,c_in,c_out,k,fr,energy_pJ\n";
  for (const LayerRecord& r : ledger.rows) {
    os << r.spec.name << ',' << kind_str(r.spec.kind) << ',' << r.spec.out_elems
       << ',' << r.spec.c_in << ',' << r.spec.c_out << ',' << r.spec.k << ','
       << fmt_double(r.fr) << ',' << fmt_double(r.energy_pj) << '\n';
  }
  return os.str();
}

EnergyLedger parse_energy_csv(const std::string& csv, int timesteps, int d_levels) {
  std::istringstream is(csv);
  std::string line;
  if (!std::getline(is, line) || line != "name,kind,O,c_in,c_out,k,fr,energy_pJ")
    throw FormatError("energy CSV: missing or wrong header");

  EnergyLedger ledger;
  ledger.timesteps = timesteps;
  ledger.d_levels = d_levels;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream cells(line);
    std::string field[8];
    for (int i = 0; i < 8; ++i)
      if (!std::getline(cells, field[i], i == 7 ? '\n' : ','))
        throw FormatError("energy CSV: line " + std::to_string(lineno) +
                          " has fewer than 8 fields");
    LayerRecord rec;
    rec.spec.name = field[0];
    if (field[1] == "spike")
      rec.spec.kind = LayerKind::spike;
    else if (field[1] == "dense")
      rec.spec.kind = LayerKind::dense;
    else
      throw FormatError("energy CSV: line " + std::to_string(lineno) +
                        ": unknown kind '" + field[1] + "'");
    try {
      rec.spec.out_elems = std::stoll(field[2]);
      rec.spec.c_in = std::stoi(field[3]);
      rec.spec.c_out = std::stoi(field[4]);
      rec.spec.k = std::stoi(field[5]);
      rec.fr = std::stod(field[6]);
      rec.energy_pj = std::stod(field[7]);
    } catch (const std::exception&) {
      throw FormatError("energy CSV: line " + std::to_string(lineno) +
                        ": unparsable numeric field");
    }
    ledger.rows.push_back(std::move(rec));
  }
  return ledger;
}

}  // namespace uiesnn
