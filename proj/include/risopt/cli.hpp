#pragma once

// Command-line front end: generate | train | eval | optimize | pattern.
// Exit codes: 0 success, 2 usage error, 1 runtime error.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "risopt/dataset.hpp"
#include "risopt/evaluation.hpp"
#include "risopt/nn.hpp"
#include "risopt/optimizers.hpp"
#include "risopt/physics.hpp"
#include "risopt/tensor_io.hpp"
#include "risopt/train.hpp"

namespace risopt::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

struct SharedOptions {
  std::size_t ris_m = 40;
  std::size_t ris_n = 40;
  double freq_ghz = 5.0;
  std::optional<double> spacing;
  double tx_dist = 1.0;
  double rx_dist = 10.0;
  std::size_t phase_states = 2;
  std::uint64_t seed = 0;
  bool flat_tx_phase = false;

  SimulationSetup setup() const {
    SimulationSetup s;
    s.geom = RisGeometry::half_wavelength(ris_m, ris_n, freq_ghz * 1e9);
    if (spacing) s.geom.dx = s.geom.dy = *spacing;
    s.geom.validate();
    s.tx.distance = tx_dist;
    s.rx_distance = rx_dist;
    s.table = PhaseTable::uniform(phase_states);
    s.tx_phase = flat_tx_phase ? TxPhaseModel::flat : TxPhaseModel::spherical;
    return s;
  }
};

struct GenerateOptions {
  std::vector<double> grid_az{0.0, 180.0};
  std::vector<double> grid_el{-60.0, 60.0};
  double grid_step = 1.0;
  std::vector<double> split{0.6, 0.2, 0.2};
  std::string out;
};

struct TrainOptions {
  std::string data;
  double lr = 1e-3;
  std::size_t batch = 32;
  std::size_t max_epochs = 500;
  std::size_t patience = 10;
  std::string weights_out;
  std::string history_out;
  bool quiet = false;
};

struct EvalOptions {
  std::string data;
  std::string weights;
  std::string report_out;
  std::optional<double> snr_db;
};

struct OptimizeOptions {
  std::string method = "im";
  double el = 0.0;
  double az = 0.0;
  std::string weights;
  std::string config_out = "config.rist";
  std::string pattern_out;
  double pattern_step = 1.0;
};

struct PatternOptions {
  std::string config;
  double step = 1.0;
  std::vector<double> grid_el{-90.0, 90.0};
  std::vector<double> grid_az{0.0, 180.0};
  std::string out;
};

/// Thrown for argument combinations CLI11 cannot express.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

inline Tensor config_tensor(const PhaseConfig& cfg) {
  Tensor t({cfg.rows(), cfg.cols()});
  for (std::size_t k = 0; k < cfg.states.size(); ++k) t[k] = cfg.states[k];
  return t;
}

inline PhaseConfig config_from_tensor(const Tensor& t, const SimulationSetup& setup) {
  if (t.rank() != 2 || t.dim(0) != setup.geom.n_rows || t.dim(1) != setup.geom.m_cols)
    throw FormatError("config tensor shape " + shape_string(t.shape()) + " does not match the " +
                      std::to_string(setup.geom.n_rows) + "x" + std::to_string(setup.geom.m_cols) + " surface");
  PhaseConfig cfg(t.dim(0), t.dim(1), setup.table);
  for (std::size_t k = 0; k < t.size(); ++k) {
    const double v = t[k];
    if (v < 0.0 || v >= static_cast<double>(setup.table.size()) || v != std::floor(v))
      throw FormatError("config tensor holds an invalid state index");
    cfg.states[k] = static_cast<State>(v);
  }
  return cfg;
}

inline std::string pattern_csv(const PatternGrid& p) {
  std::ostringstream out;
  out << "elevation_deg,azimuth_deg,power_db\n";
  char line[128];
  for (std::size_t i = 0; i < p.elevations.size(); ++i)
    for (std::size_t j = 0; j < p.azimuths.size(); ++j) {
      std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g\n", p.elevations[i], p.azimuths[j], p.power_db(i, j));
      out << line;
    }
  return out.str();
}

inline void write_pattern(const SimulationSetup& setup, const PhaseConfig& cfg, const std::vector<double>& el_range,
                          const std::vector<double>& az_range, double step, const std::filesystem::path& out) {
  require(step > 0.0, "pattern step must be positive");
  const auto els = AngularGrid::axis(el_range.at(0), el_range.at(1), step);
  const auto azs = AngularGrid::axis(az_range.at(0), az_range.at(1), step);
  const auto grid = radiation_pattern(setup.geom, setup.illumination(), cfg, els, azs);
  write_text(out, pattern_csv(grid));
}

inline int cmd_generate(const SharedOptions& shared, const GenerateOptions& o, std::ostream& out) {
  if (o.split.size() != 3) throw UsageError("--split needs three ratios");
  AngularGrid grid{o.grid_az.at(0), o.grid_az.at(1), o.grid_el.at(0), o.grid_el.at(1), o.grid_step};
  const std::filesystem::path dir(o.out);
  auto manifest = generate_dataset(shared.setup(), grid, dir);
  manifest.ratios = {o.split[0], o.split[1], o.split[2]};
  manifest.split_seed = shared.seed;
  manifest.split = split_dataset(manifest.sample_count, manifest.ratios, shared.seed);
  write_manifest(dir, manifest);
  out << "manifest=" << (dir / "manifest.json").string() << "\n";
  out << "samples=" << manifest.sample_count << " train=" << manifest.split.train.size()
      << " val=" << manifest.split.val.size() << " test=" << manifest.split.test.size() << "\n";
  return kExitOk;
}

inline int cmd_train(const SharedOptions& shared, const TrainOptions& o, std::ostream& out) {
  const auto ds = load_dataset(o.data);
  const auto train_set = encode_subset(ds, ds.manifest.split.train);
  const auto val_set = encode_subset(ds, ds.manifest.split.val);

  nn::TrainConfig cfg;
  cfg.batch_size = o.batch;
  cfg.max_epochs = o.max_epochs;
  cfg.patience = o.patience;
  cfg.rng_seed = shared.seed;
  cfg.lr = o.lr;

  const auto history_path = o.history_out.empty() ? o.weights_out + ".history.csv" : o.history_out;
  std::ostringstream history;
  history << "epoch,train_loss,val_loss\n";
  auto result = nn::train(nn::make_reference_model(shared.seed), train_set, val_set, cfg,
                          [&](const nn::EpochRecord& r, const nn::Model&) {
                            history << r.epoch << "," << fmt17(r.train_loss) << "," << fmt17(r.val_loss) << "\n";
                            if (!o.quiet)
                              out << "epoch " << r.epoch << " train_loss=" << r.train_loss
                                  << " val_loss=" << r.val_loss << std::endl;
                          });

  save_weights(o.weights_out, result.model);
  write_text(history_path, history.str());
  const nlohmann::json run = {{"data", o.data},
                              {"lr", cfg.lr},
                              {"beta1", 0.9},
                              {"beta2", 0.999},
                              {"epsilon", 1e-8},
                              {"batch_size", cfg.batch_size},
                              {"max_epochs", cfg.max_epochs},
                              {"patience", cfg.patience},
                              {"seed", cfg.rng_seed},
                              {"dropout_rate", 0.2},
                              {"loss", "mse"},
                              {"epochs_run", result.history.size()},
                              {"stopped_early", result.stopped_early},
                              {"parameters", result.model.parameter_count()}};
  write_text(o.weights_out + ".json", run.dump(2) + "\n");
  out << "weights=" << o.weights_out << " epochs=" << result.history.size()
      << " stopped_early=" << (result.stopped_early ? "true" : "false") << "\n";
  return kExitOk;
}

inline int cmd_eval(const SharedOptions& shared, const EvalOptions& o, std::ostream& out) {
  const auto ds = load_dataset(o.data);
  const auto model = load_weights(o.weights);
  const auto& setup = ds.manifest.setup;
  if (model.in_channels != 2) throw DimensionError("weights expect " + std::to_string(model.in_channels) + " input channels");
  auto predict = [&](const Sample& s) { return predict_config(model, s.h_cfg, s.v_cfg, setup.table); };

  PowerModel power = noiseless_power_db;
  if (o.snr_db) {
    // Noisy sampled power: noise referenced to the reference configuration's
    // noiseless gain at the same sample.
    const double snr = *o.snr_db;
    const std::uint64_t seed = shared.seed;
    power = [&ds, &setup, snr, seed](const ChannelMatrices& ch, const PhaseConfig& cfg, std::size_t idx) {
      const double ref = std::abs(cascade_gain(ch, ds.samples[idx].ref_cfg)) * setup.tx.tx_power_amp;
      const std::vector<cplx> x(256, cplx(setup.tx.tx_power_amp, 0.0));
      const auto y = simulate_received_signal(ch, cfg, x, ref * std::pow(10.0, -snr / 20.0), seed ^ (idx * 7919));
      return received_power_db(y);
    };
  }

  const auto report = evaluate(ds, ds.manifest.split.test, predict, power);
  write_text(o.report_out, report_csv(report));
  const auto summary = summary_json(report);
  write_text(o.report_out + ".summary.json", summary.dump(2) + "\n");
  out << summary.dump(2) << "\n";
  return kExitOk;
}

inline int cmd_optimize(const SharedOptions& shared, const OptimizeOptions& o, std::ostream& out) {
  const auto setup = shared.setup();
  const auto illum = setup.illumination();
  const auto ch = setup.channels(illum, o.el, o.az);
  PhaseConfig cfg;
  std::size_t steps = 0;
  if (o.method == "im") {
    auto r = im_optimize(ch, setup.table);
    steps = r.trace.steps;
    cfg = std::move(r.config);
  } else if (o.method == "gim" || o.method == "cnn") {
    if (o.method == "cnn" && o.weights.empty()) throw UsageError("--method cnn requires --weights");
    auto h = gim_optimize(ch, setup.table, Orientation::horizontal);
    auto v = gim_optimize(ch, setup.table, Orientation::vertical);
    steps = h.trace.steps + v.trace.steps;
    cfg = o.method == "gim" ? combine_stripes(h.stripes, v.stripes, setup.table)
                            : predict_config(load_weights(o.weights), h.stripes, v.stripes, setup.table);
  } else {
    throw UsageError("unknown method '" + o.method + "' (expected im, gim or cnn)");
  }
  save_tensor(o.config_out, config_tensor(cfg));
  out << "method=" << o.method << "\n";
  out << "steps=" << steps << "\n";
  out << "objective_db=" << fmt17(objective_db(ch, cfg)) << "\n";
  out << "config=" << o.config_out << "\n";
  if (!o.pattern_out.empty()) {
    write_pattern(setup, cfg, {-90.0, 90.0}, {0.0, 180.0}, o.pattern_step, o.pattern_out);
    out << "pattern=" << o.pattern_out << "\n";
  }
  return kExitOk;
}

inline int cmd_pattern(const SharedOptions& shared, const PatternOptions& o, std::ostream& out) {
  const auto setup = shared.setup();
  const auto cfg = config_from_tensor(load_tensor(o.config), setup);
  write_pattern(setup, cfg, o.grid_el, o.grid_az, o.step, o.out);
  out << "pattern=" << o.out << "\n";
  return kExitOk;
}

/// Parses `args` (without the program name) and runs the selected command.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"RIS configuration toolkit", "risopt"};
  app.require_subcommand(1);
  app.fallthrough();

  SharedOptions shared;
  app.add_option("--ris-m", shared.ris_m, "horizontal element count")->check(CLI::PositiveNumber);
  app.add_option("--ris-n", shared.ris_n, "vertical element count")->check(CLI::PositiveNumber);
  app.add_option("--freq-ghz", shared.freq_ghz, "carrier frequency")->check(CLI::PositiveNumber);
  app.add_option("--spacing", shared.spacing, "element spacing in meters (default half wavelength)")
      ->check(CLI::PositiveNumber);
  app.add_option("--tx-dist", shared.tx_dist, "transmitter distance in meters")->check(CLI::PositiveNumber);
  app.add_option("--rx-dist", shared.rx_dist, "receiver distance in meters")->check(CLI::PositiveNumber);
  app.add_option("--phase-states", shared.phase_states, "phase states per element")->check(CLI::Range(1, 256));
  app.add_option("--seed", shared.seed, "seed for splits, training and noise");
  app.add_flag("--flat-tx-phase", shared.flat_tx_phase, "drop the per-element incident phase");

  GenerateOptions gen;
  auto* g = app.add_subcommand("generate", "generate the angular-sweep dataset");
  g->add_option("--grid-az", gen.grid_az, "azimuth range a,b")->delimiter(',')->expected(2);
  g->add_option("--grid-el", gen.grid_el, "elevation range a,b")->delimiter(',')->expected(2);
  g->add_option("--grid-step", gen.grid_step, "grid step in degrees")->check(CLI::PositiveNumber);
  g->add_option("--split", gen.split, "train,val,test ratios")->delimiter(',')->expected(3);
  g->add_option("--out", gen.out, "output directory")->required();

  TrainOptions tr;
  auto* t = app.add_subcommand("train", "train the configuration network");
  t->add_option("--data", tr.data, "dataset directory")->required();
  t->add_option("--lr", tr.lr, "ADAM learning rate")->check(CLI::NonNegativeNumber);
  t->add_option("--batch", tr.batch, "mini-batch size")->check(CLI::PositiveNumber);
  t->add_option("--max-epochs", tr.max_epochs, "epoch cap")->check(CLI::PositiveNumber);
  t->add_option("--patience", tr.patience, "early-stopping patience")->check(CLI::PositiveNumber);
  t->add_option("--weights-out", tr.weights_out, "weights file")->required();
  t->add_option("--history-out", tr.history_out, "history CSV (default <weights-out>.history.csv)");
  t->add_flag("--quiet", tr.quiet, "no per-epoch output");

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "compare received power over the test split");
  e->add_option("--data", ev.data, "dataset directory")->required();
  e->add_option("--weights", ev.weights, "weights file")->required();
  e->add_option("--report-out", ev.report_out, "report CSV")->required();
  e->add_option("--snr", ev.snr_db, "use sampled noisy power at this SNR (dB)");

  OptimizeOptions op;
  auto* o = app.add_subcommand("optimize", "optimize one receiver direction");
  o->add_option("--method", op.method, "im | gim | cnn");
  o->add_option("--el", op.el, "receiver elevation in degrees");
  o->add_option("--az", op.az, "receiver azimuth in degrees");
  o->add_option("--weights", op.weights, "weights file (cnn)");
  o->add_option("--config-out", op.config_out, "configuration tensor file");
  o->add_option("--pattern-out", op.pattern_out, "also write the radiation pattern CSV");
  o->add_option("--pattern-step", op.pattern_step, "pattern grid step")->check(CLI::PositiveNumber);

  PatternOptions pa;
  auto* p = app.add_subcommand("pattern", "export a radiation pattern heatmap");
  p->add_option("--config", pa.config, "configuration tensor file")->required();
  p->add_option("--step", pa.step, "grid step in degrees")->check(CLI::PositiveNumber);
  p->add_option("--grid-el", pa.grid_el, "elevation range a,b")->delimiter(',')->expected(2);
  p->add_option("--grid-az", pa.grid_az, "azimuth range a,b")->delimiter(',')->expected(2);
  p->add_option("--out", pa.out, "CSV file")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n" << "run with --help for usage\n";
    return kExitUsage;
  }

  try {
    if (*g) return cmd_generate(shared, gen, out);
    if (*t) return cmd_train(shared, tr, out);
    if (*e) return cmd_eval(shared, ev, out);
    if (*o) return cmd_optimize(shared, op, out);
    if (*p) return cmd_pattern(shared, pa, out);
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace risopt::cli
