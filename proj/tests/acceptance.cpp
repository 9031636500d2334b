// Acceptance runner. Prints one line per criterion and exits non-zero when
// any selected criterion fails.
//
//   risopt_acceptance [--criteria 1,2,...] [--workdir DIR] [--e2e-epochs N] [--full]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "oracles.hpp"
#include "risopt/cli.hpp"
#include "risopt/evaluation.hpp"

using namespace risopt;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  enum Status { pass, fail, skipped } status;
  std::string detail;
};

struct Settings {
  fs::path workdir;
  std::size_t e2e_epochs = 40;
  double e2e_lr = 1e-3;
  std::size_t full_epochs = 500;
  bool full = false;
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Runs the command-line front end; a non-zero exit aborts the criterion.
std::string risopt_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (code != 0) {
    std::string joined;
    for (const auto& a : args) joined += a + " ";
    throw std::runtime_error("risopt " + joined + "exited " + std::to_string(code) + ": " + err.str());
  }
  return out.str();
}

std::string field(const std::string& text, const std::string& key) {
  const auto pos = text.find(key + "=");
  if (pos == std::string::npos) throw std::runtime_error("missing " + key + " in output");
  const auto start = pos + key.size() + 1;
  return text.substr(start, text.find_first_of(" \n", start) - start);
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> file_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

fs::path fresh(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// 1 -------------------------------------------------------------------------
Outcome step_counts(const Settings& s) {
  const auto dir = fresh(s.workdir / "c1");
  save_weights(dir / "w.risw", nn::make_reference_model(1));
  const auto t0 = Clock::now();
  std::map<std::string, std::string> steps;
  for (const char* method : {"im", "gim", "cnn"}) {
    std::vector<std::string> args{"optimize", "--method", method, "--el", "25", "--az", "70", "--config-out",
                                  (dir / (std::string(method) + ".rist")).string()};
    if (std::string(method) == "cnn") args.insert(args.end(), {"--weights", (dir / "w.risw").string()});
    steps[method] = field(risopt_cli(args), "steps");
  }
  const double secs = seconds_since(t0);
  const bool ok = steps["im"] == "3200" && steps["gim"] == "160" && steps["cnn"] == "160" &&
                  step_count(Method::im, 40, 40, 2) == 3200 && step_count(Method::gim, 40, 40, 2) == 160 && secs < 1.0;
  return {ok ? Outcome::pass : Outcome::fail, "im=" + steps["im"] + " gim=" + steps["gim"] + " cnn=" + steps["cnn"] +
                                                  " time=" + fmt("%.3fs", secs)};
}

// 2 -------------------------------------------------------------------------
Outcome physics_oracles(const Settings&) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> dim(1, 8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_field = 0.0, worst_gain = 0.0, worst_power = 0.0, worst_flip = 0.0;

  for (int inst = 0; inst < 50; ++inst) {
    RisGeometry g;
    g.m_cols = dim(rng);
    g.n_rows = dim(rng);
    g.carrier_freq = 1e9 + 9e9 * u(rng);
    g.dx = (0.2 + 0.8 * u(rng)) * g.wavelength();
    g.dy = (0.2 + 0.8 * u(rng)) * g.wavelength();
    Illumination il{Grid<double>(g.n_rows, g.m_cols), Grid<double>(g.n_rows, g.m_cols), Grid<double>(g.n_rows, g.m_cols)};
    for (std::size_t k = 0; k < il.amp.size(); ++k) {
      il.amp[k] = 0.1 + u(rng);
      il.phase[k] = 2.0 * oracle::pi * u(rng);
      il.cos_inc[k] = u(rng);
    }
    const auto cfg = oracle::random_config(g.n_rows, g.m_cols, rng);
    const double el = -89.0 + 178.0 * u(rng), az = 360.0 * u(rng);
    worst_field = std::max(worst_field, oracle::rel_err(scattered_field(g, il, cfg, el, az),
                                                        oracle::scattered_field(g, il, cfg, el, az)));

    const auto ch = oracle::random_channels(g.n_rows, g.m_cols, rng);
    worst_gain = std::max(worst_gain, oracle::rel_err(cascade_gain(ch, cfg), oracle::cascade_gain(ch, cfg)));

    std::vector<cplx> y(1 + dim(rng) * 16);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (auto& v : y) v = cplx(nd(rng), nd(rng));
    const double p = received_power_db(y), q = oracle::power_db(y);
    worst_power = std::max(worst_power, std::fabs(p - q) / std::max(std::fabs(q), 1e-300));
  }

  // Chained incremental flips against full recomputation.
  const auto ch = oracle::random_channels(8, 8, rng);
  auto cfg = oracle::random_config(8, 8, rng);
  cplx running = cascade_gain(ch, cfg);
  std::uniform_int_distribution<std::size_t> idx(0, 7), st(0, 1);
  for (int f = 0; f < 10000; ++f) {
    const std::size_t r = idx(rng), c = idx(rng), ns = st(rng);
    running = flip_delta(ch, cfg, r, c, ns, running);
    cfg.states(r, c) = static_cast<State>(ns);
    worst_flip = std::max(worst_flip, oracle::rel_err(running, oracle::cascade_gain(ch, cfg)));
  }

  const bool ok = worst_field <= 1e-12 && worst_gain <= 1e-12 && worst_power <= 1e-12 && worst_flip <= 1e-9;
  return {ok ? Outcome::pass : Outcome::fail,
          "field=" + fmt("%.2e", worst_field) + " gain=" + fmt("%.2e", worst_gain) + " power=" +
              fmt("%.2e", worst_power) + " flip=" + fmt("%.2e", worst_flip)};
}

// 3 -------------------------------------------------------------------------
Outcome broadside(const Settings&) {
  double worst = 0.0;
  const std::pair<std::size_t, std::size_t> shapes[] = {{40, 40}, {7, 3}, {1, 10}};
  for (auto [m, n] : shapes) {
    const auto g = RisGeometry::half_wavelength(m, n);
    Illumination il{Grid<double>(n, m, 1.0), Grid<double>(n, m, 0.0), Grid<double>(n, m, 1.0)};
    const PhaseConfig cfg(n, m);
    for (double az : {0.0, 45.0, 137.0}) {
      const double mag = std::abs(scattered_field(g, il, cfg, 0.0, az));
      const double want = static_cast<double>(m * n);
      worst = std::max(worst, std::fabs(mag - want) / want);
    }
  }
  return {worst <= 1e-9 ? Outcome::pass : Outcome::fail, "max_rel=" + fmt("%.2e", worst)};
}

// 4 -------------------------------------------------------------------------
Outcome greedy_vs_exhaustive(const Settings&) {
  std::mt19937_64 rng(4);
  int ordered = 0, optimal = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    const auto ch = oracle::random_channels(2, 3, rng);
    const double ex = exhaustive_optimize(ch).objective;
    const double im = im_optimize(ch).trace.final_objective;
    const double zero = objective(ch, PhaseConfig(2, 3));
    const double tol = 1e-12 * ex;
    if (ex + tol >= im && im >= zero) ++ordered;
    if (std::fabs(ex - im) <= tol) ++optimal;
  }
  const bool ok = ordered == trials && 2 * optimal > trials;
  return {ok ? Outcome::pass : Outcome::fail,
          "ordered=" + std::to_string(ordered) + "/100 im_optimal=" + std::to_string(optimal) + "/100"};
}

// 5 -------------------------------------------------------------------------
double gradient_check() {
  using namespace nn;
  auto m = make_model(2, {LayerSpec::conv(3, 3), LayerSpec::dropout(0.2), LayerSpec::conv(5, 2), LayerSpec::conv(3, 1)}, 5);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (Tensor* p : m.parameters())
    for (double& v : p->values()) v = u(rng);
  Tensor x({6, 6, 2}), y({6, 6});
  for (double& v : x.values()) v = 2.0 * u(rng);
  for (double& v : y.values()) v = 1.8 * u(rng);
  const std::uint64_t seed = 31;
  const auto grads = model_backward(m, x, y, Mode::train, seed).grads;
  const double h = 1e-5;
  double worst = 0.0;
  auto params = m.parameters();
  for (std::size_t p = 0; p < params.size(); ++p)
    for (std::size_t k = 0; k < params[p]->size(); ++k) {
      double& w = (*params[p])[k];
      const double saved = w;
      w = saved + h;
      const double up = mse_loss(model_forward(m, x, Mode::train, seed), y);
      w = saved - h;
      const double down = mse_loss(model_forward(m, x, Mode::train, seed), y);
      w = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = grads[p][k];
      worst = std::max(worst, std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-7}));
    }
  return worst;
}

Outcome cnn_numerics(const Settings& s) {
  const auto t0 = Clock::now();
  const double grad_err = gradient_check();

  Tensor theta({1}, 0.0);
  std::vector<Tensor*> params{&theta};
  nn::AdamState st(params, 0.001);
  nn::adam_step(st, params, nn::Gradients{Tensor({1}, 1.0)});
  const double adam_err = std::fabs(theta[0] - (-0.001 / (1.0 + 1e-8)));

  // Overfit eight real samples from an 8x8 surface with the reference network.
  // Different directions can share identical stripe inputs with different
  // labels, so take the first eight with distinct inputs.
  SimulationSetup setup;
  setup.geom = RisGeometry::half_wavelength(8, 8);
  const auto dir = fresh(s.workdir / "c5");
  generate_dataset(setup, AngularGrid{20.0, 140.0, 10.0, 40.0, 15.0}, dir);
  auto ds = load_dataset(dir);
  std::vector<nn::Example> set;
  for (std::size_t i = 0; i < ds.samples.size() && set.size() < 8; ++i) {
    auto ex = encode_sample(ds.samples[i]);
    if (std::none_of(set.begin(), set.end(), [&](const nn::Example& e) { return e.input == ex.input; }))
      set.push_back(std::move(ex));
  }
  if (set.size() < 8) throw std::runtime_error("fewer than eight distinct overfit samples");
  nn::TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.max_epochs = 2000;
  cfg.patience = 2000;
  std::size_t reached_at = 0;
  double final_mse = 1.0;
  // Stop once the target is reached; the patience counter would never fire here.
  struct Reached {};
  try {
    nn::train(nn::make_reference_model(5), set, set, cfg, [&](const nn::EpochRecord& r, const nn::Model&) {
      final_mse = r.val_loss;
      if (r.val_loss < 1e-2) {
        reached_at = r.epoch;
        throw Reached{};
      }
    });
  } catch (const Reached&) {
  }
  const double secs = seconds_since(t0);
  const bool ok = grad_err < 1e-4 && adam_err <= 1e-12 && reached_at > 0 && secs < 300.0;
  return {ok ? Outcome::pass : Outcome::fail,
          "grad_rel=" + fmt("%.2e", grad_err) + " adam_abs=" + fmt("%.2e", adam_err) + " overfit_mse=" +
              fmt("%.3e", final_mse) + " epochs=" + std::to_string(reached_at) + " time=" + fmt("%.1fs", secs)};
}

// 6 -------------------------------------------------------------------------
Outcome early_stopping(const Settings& s) {
  const auto dir = fresh(s.workdir / "c6");
  const std::vector<std::string> surface{"--ris-m", "6", "--ris-n", "6"};
  auto args = surface;
  args.insert(args.end(), {"generate", "--grid-step", "30", "--out", (dir / "data").string()});
  risopt_cli(args);
  args = surface;
  args.insert(args.end(), {"train", "--data", (dir / "data").string(), "--lr", "0", "--weights-out",
                           (dir / "w.risw").string(), "--quiet"});
  risopt_cli(args);
  const auto lines = file_lines(dir / "w.risw.history.csv");
  const std::size_t epochs = lines.empty() ? 0 : lines.size() - 1;
  bool constant = epochs > 0;
  for (std::size_t i = 2; i < lines.size(); ++i)
    constant = constant && lines[i].substr(lines[i].rfind(',')) == lines[1].substr(lines[1].rfind(','));
  return {epochs == 11 && constant ? Outcome::pass : Outcome::fail,
          "history_epochs=" + std::to_string(epochs) + " constant_val_loss=" + (constant ? "yes" : "no")};
}

// 7 / 8 ---------------------------------------------------------------------
struct E2E {
  nlohmann::json summary;
  double seconds = 0.0;
  std::string peak;
};

E2E end_to_end(const fs::path& dir, const std::string& step, std::size_t epochs, double lr) {
  const auto t0 = Clock::now();
  const auto data = (dir / "data").string();
  const auto weights = (dir / "cnn.risw").string();
  risopt_cli({"--seed", "1", "generate", "--grid-step", step, "--out", data});
  const auto train_out = risopt_cli({"--seed", "1", "train", "--data", data, "--lr", std::to_string(lr),
                                     "--max-epochs", std::to_string(epochs), "--weights-out", weights, "--quiet"});
  std::cout << "  " << train_out << std::flush;
  risopt_cli({"eval", "--data", data, "--weights", weights, "--report-out", (dir / "report.csv").string()});
  E2E r;
  std::ifstream in(dir / "report.csv.summary.json");
  in >> r.summary;

  // Beam check at a held-out direction inside the band: peak of the
  // predicted configuration's pattern relative to the receiver.
  const auto ds = load_dataset(data);
  const auto model = load_weights(weights);
  const auto setup = ds.manifest.setup;
  for (std::size_t i : ds.manifest.split.test) {
    const auto& smp = ds.samples[i];
    if (std::fabs(smp.elevation_deg) > 45.0 || std::fabs(smp.elevation_deg) < 15.0) continue;
    const auto cfg = predict_config(model, smp.h_cfg, smp.v_cfg, setup.table);
    std::vector<double> els, azs;
    for (double e = smp.elevation_deg - 10.0; e <= smp.elevation_deg + 10.0 + 1e-9; e += 0.5) els.push_back(e);
    for (double a = smp.azimuth_deg - 10.0; a <= smp.azimuth_deg + 10.0 + 1e-9; a += 0.5) azs.push_back(a);
    const auto pat = radiation_pattern(setup.geom, setup.illumination(), cfg, els, azs);
    std::size_t best = 0;
    for (std::size_t k = 1; k < pat.power_db.size(); ++k)
      if (pat.power_db[k] > pat.power_db[best]) best = k;
    const double pe = els[best / azs.size()], pa = azs[best % azs.size()];
    r.peak = "beam_check rx=(" + fmt("%g", smp.elevation_deg) + "," + fmt("%g", smp.azimuth_deg) + ") peak=(" +
             fmt("%g", pe) + "," + fmt("%g", pa) + ")";
    break;
  }
  r.seconds = seconds_since(t0);
  return r;
}

Outcome desk_scale(const Settings& s) {
  const auto r = end_to_end(fresh(s.workdir / "c7"), "5", s.e2e_epochs, s.e2e_lr);
  const double med_cnn = r.summary["cnn"]["median_gap_db"], med_gim = r.summary["gim"]["median_gap_db"];
  const double band_cnn = r.summary["cnn"]["band_mean_gap_db"];
  const bool a = med_cnn <= med_gim, b = band_cnn <= 3.0, t = r.seconds <= 7200.0;
  std::cout << "  " << r.peak << "\n";
  return {a && b && t ? Outcome::pass : Outcome::fail,
          std::string("(a)=") + (a ? "ok" : "no") + " median_cnn=" + fmt("%.3f", med_cnn) + " median_gim=" +
              fmt("%.3f", med_gim) + " (b)=" + (b ? "ok" : "no") + " band_mean_cnn=" + fmt("%.3f", band_cnn) +
              " max_cnn=" + fmt("%.3f", r.summary["cnn"]["max_gap_db"].get<double>()) + " epochs_cap=" +
              std::to_string(s.e2e_epochs) + " time=" + fmt("%.0fs", r.seconds)};
}

Outcome full_scale(const Settings& s) {
  if (!s.full) return {Outcome::skipped, "optional full-scale run; pass --full"};
  const auto r = end_to_end(fresh(s.workdir / "c8"), "1", s.full_epochs, s.e2e_lr);
  const double max_cnn = r.summary["cnn"]["max_gap_db"];
  // Target is "on the order of" 6 dB; accept up to twice that.
  return {max_cnn <= 12.0 ? Outcome::pass : Outcome::fail,
          "max_cnn=" + fmt("%.3f", max_cnn) + " median_cnn=" +
              fmt("%.3f", r.summary["cnn"]["median_gap_db"].get<double>()) + " time=" + fmt("%.0fs", r.seconds)};
}

// 9 -------------------------------------------------------------------------
Outcome determinism(const Settings& s) {
  const auto base = fresh(s.workdir / "c9");
  auto run_once = [&](const fs::path& dir) {
    fs::create_directories(dir);
    risopt_cli({"--seed", "7", "generate", "--grid-step", "5", "--out", (dir / "full").string()});
    const std::vector<std::string> surface{"--ris-m", "8", "--ris-n", "8", "--seed", "7"};
    auto args = surface;
    args.insert(args.end(), {"generate", "--grid-step", "15", "--out", (dir / "small").string()});
    risopt_cli(args);
    args = surface;
    args.insert(args.end(), {"train", "--data", (dir / "small").string(), "--max-epochs", "2", "--weights-out",
                             (dir / "w.risw").string(), "--quiet"});
    risopt_cli(args);
    risopt_cli({"eval", "--data", (dir / "small").string(), "--weights", (dir / "w.risw").string(), "--report-out",
                (dir / "report.csv").string()});
  };
  run_once(base / "a");
  run_once(base / "b");
  std::vector<std::string> files;
  for (const char* d : {"full", "small"})
    for (const char* f : {"h_stripes.rist", "v_stripes.rist", "ref_configs.rist", "samples.csv", "manifest.json"})
      files.push_back(std::string(d) + "/" + f);
  files.insert(files.end(), {"w.risw", "w.risw.history.csv", "report.csv"});
  std::size_t same = 0;
  std::string differing;
  for (const auto& f : files) {
    if (file_bytes(base / "a" / f) == file_bytes(base / "b" / f))
      ++same;
    else
      differing += " " + f;
  }
  return {same == files.size() ? Outcome::pass : Outcome::fail,
          "identical_files=" + std::to_string(same) + "/" + std::to_string(files.size()) + differing};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"risopt acceptance runner"};
  std::vector<int> selected{1, 2, 3, 4, 5, 6, 7, 8, 9};
  Settings s;
  std::string workdir = (fs::temp_directory_path() / "risopt_acceptance").string();
  app.add_option("--criteria", selected, "criteria to run")->delimiter(',');
  app.add_option("--workdir", workdir, "scratch directory");
  app.add_option("--e2e-epochs", s.e2e_epochs, "epoch cap for the desk-scale run");
  app.add_option("--e2e-lr", s.e2e_lr, "learning rate for the end-to-end runs");
  app.add_option("--full-epochs", s.full_epochs, "epoch cap for the full-scale run");
  app.add_flag("--full", s.full, "also run the optional full-scale reproduction");
  CLI11_PARSE(app, argc, argv);
  s.workdir = workdir;
  fs::create_directories(s.workdir);

  const std::map<int, std::pair<const char*, std::function<Outcome(const Settings&)>>> criteria{
      {1, {"step counts", step_counts}},
      {2, {"physics oracle equivalence", physics_oracles}},
      {3, {"broadside identity", broadside}},
      {4, {"greedy vs exhaustive", greedy_vs_exhaustive}},
      {5, {"cnn numerics", cnn_numerics}},
      {6, {"early stopping", early_stopping}},
      {7, {"desk-scale end-to-end", desk_scale}},
      {8, {"full-scale reproduction", full_scale}},
      {9, {"determinism", determinism}},
  };

  int failures = 0;
  for (int id : selected) {
    const auto it = criteria.find(id);
    if (it == criteria.end()) {
      std::cerr << "unknown criterion " << id << "\n";
      return 2;
    }
    Outcome o;
    try {
      o = it->second.second(s);
    } catch (const std::exception& ex) {
      o = {Outcome::fail, std::string("error: ") + ex.what()};
    }
    const char* tag = o.status == Outcome::pass ? "PASS" : o.status == Outcome::fail ? "FAIL" : "SKIPPED";
    if (o.status == Outcome::fail) ++failures;
    std::cout << "criterion " << id << " [" << it->second.first << "]: " << tag << " | " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
