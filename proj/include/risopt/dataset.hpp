#pragma once

// Angular-sweep dataset: per receiver direction, the two group-wise stripe
// configurations (network inputs) and the element-wise reference (label).
//
// On disk a dataset directory holds
//   manifest.json      generation parameters, split, counts
//   h_stripes.rist     [S, N] horizontal stripe states
//   v_stripes.rist     [S, M] vertical stripe states
//   ref_configs.rist   [S, N, M] reference states
//   samples.csv        index, angles, objectives (full precision)

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "risopt/error.hpp"
#include "risopt/optimizers.hpp"
#include "risopt/physics.hpp"
#include "risopt/tensor.hpp"
#include "risopt/tensor_io.hpp"
#include "risopt/train.hpp"

namespace risopt {

inline constexpr int kDatasetFormatVersion = 1;

/// Everything needed to rebuild the channel for a receiver direction.
struct SimulationSetup {
  RisGeometry geom = RisGeometry::half_wavelength(40, 40);
  TxSpec tx;
  double rx_distance = 10.0;
  PhaseTable table;
  TxPhaseModel tx_phase = TxPhaseModel::spherical;

  Illumination illumination() const { return compute_illumination(geom, tx, tx_phase); }

  ChannelMatrices channels(const Illumination& illum, double elevation_deg, double azimuth_deg) const {
    return compute_channels(geom, illum, RxSpec{rx_distance, elevation_deg, azimuth_deg});
  }
};

/// Inclusive-endpoint elevation/azimuth lattice.
struct AngularGrid {
  double azimuth_start = 0.0;
  double azimuth_stop = 180.0;
  double elevation_start = -60.0;
  double elevation_stop = 60.0;
  double step = 1.0;

  void validate() const {
    require(step > 0.0, "AngularGrid: step must be positive");
    require(azimuth_stop >= azimuth_start && elevation_stop >= elevation_start, "AngularGrid: empty range");
  }

  static std::vector<double> axis(double start, double stop, double step) {
    const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
    std::vector<double> v(count);
    for (std::size_t i = 0; i < count; ++i) v[i] = start + static_cast<double>(i) * step;
    return v;
  }
  std::vector<double> azimuths() const { return axis(azimuth_start, azimuth_stop, step); }
  std::vector<double> elevations() const { return axis(elevation_start, elevation_stop, step); }
  std::size_t point_count() const { return azimuths().size() * elevations().size(); }

  /// (elevation, azimuth) pairs, azimuth-major.
  std::vector<std::array<double, 2>> points() const {
    validate();
    std::vector<std::array<double, 2>> out;
    const auto els = elevations();
    for (double az : azimuths())
      for (double el : els) out.push_back({el, az});
    return out;
  }
};

struct Sample {
  StripeConfig h_cfg;
  StripeConfig v_cfg;
  PhaseConfig ref_cfg;
  double elevation_deg = 0.0;
  double azimuth_deg = 0.0;
  double objective_im = 0.0;
  double objective_gim = 0.0;  // of combine_stripes(h_cfg, v_cfg)
};

inline Sample make_sample(const SimulationSetup& setup, const Illumination& illum, double elevation_deg,
                          double azimuth_deg) {
  const auto ch = setup.channels(illum, elevation_deg, azimuth_deg);
  auto h = gim_optimize(ch, setup.table, Orientation::horizontal);
  auto v = gim_optimize(ch, setup.table, Orientation::vertical);
  auto im = im_optimize(ch, setup.table);
  Sample s;
  s.objective_gim = objective(ch, combine_stripes(h.stripes, v.stripes, setup.table));
  s.h_cfg = std::move(h.stripes);
  s.v_cfg = std::move(v.stripes);
  s.objective_im = im.trace.final_objective;
  s.ref_cfg = std::move(im.config);
  s.elevation_deg = elevation_deg;
  s.azimuth_deg = azimuth_deg;
  return s;
}

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Seeded uniform shuffle, then val and test take floor(ratio * count) each
/// and train keeps the remainder.
inline SplitIndices split_dataset(std::size_t count, std::array<double, 3> ratios, std::uint64_t seed) {
  for (double r : ratios) require(r >= 0.0 && r <= 1.0, "split_dataset: ratios must lie in [0, 1]");
  require(std::fabs(ratios[0] + ratios[1] + ratios[2] - 1.0) < 1e-9, "split_dataset: ratios must sum to 1");
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::floor(ratios[1] * static_cast<double>(count) + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(ratios[2] * static_cast<double>(count) + 1e-9));
  const std::size_t n_train = count - n_val - n_test;
  SplitIndices out;
  out.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train),
                 idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  out.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
  return out;
}

struct DatasetManifest {
  SimulationSetup setup;
  AngularGrid grid;
  std::array<double, 3> ratios{0.6, 0.2, 0.2};
  std::uint64_t split_seed = 0;
  SplitIndices split;
  std::size_t sample_count = 0;
  int format_version = kDatasetFormatVersion;
};

inline nlohmann::json to_json(const DatasetManifest& m) {
  using nlohmann::json;
  const auto& s = m.setup;
  json j;
  j["format_version"] = m.format_version;
  j["geometry"] = {{"m_cols", s.geom.m_cols},       {"n_rows", s.geom.n_rows},
                   {"dx_m", s.geom.dx},             {"dy_m", s.geom.dy},
                   {"carrier_freq_hz", s.geom.carrier_freq}, {"phase_table_deg", s.table.degrees()}};
  j["tx"] = {{"distance_m", s.tx.distance},
             {"elevation_deg", s.tx.elevation_deg},
             {"azimuth_deg", s.tx.azimuth_deg},
             {"tx_power_amp", s.tx.tx_power_amp},
             {"flat_phase", s.tx_phase == TxPhaseModel::flat}};
  j["rx_distance_m"] = s.rx_distance;
  j["grid"] = {{"azimuth_start", m.grid.azimuth_start},
               {"azimuth_stop", m.grid.azimuth_stop},
               {"elevation_start", m.grid.elevation_start},
               {"elevation_stop", m.grid.elevation_stop},
               {"step", m.grid.step}};
  j["split"] = {{"ratios", m.ratios},
                {"seed", m.split_seed},
                {"train", m.split.train},
                {"val", m.split.val},
                {"test", m.split.test}};
  j["counts"] = {{"samples", m.sample_count},
                 {"train", m.split.train.size()},
                 {"val", m.split.val.size()},
                 {"test", m.split.test.size()}};
  return j;
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  try {
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != kDatasetFormatVersion) throw FormatError("manifest: unsupported format_version");
    const auto& g = j.at("geometry");
    m.setup.geom.m_cols = g.at("m_cols").get<std::size_t>();
    m.setup.geom.n_rows = g.at("n_rows").get<std::size_t>();
    m.setup.geom.dx = g.at("dx_m").get<double>();
    m.setup.geom.dy = g.at("dy_m").get<double>();
    m.setup.geom.carrier_freq = g.at("carrier_freq_hz").get<double>();
    m.setup.table = PhaseTable(g.at("phase_table_deg").get<std::vector<double>>());
    const auto& t = j.at("tx");
    m.setup.tx.distance = t.at("distance_m").get<double>();
    m.setup.tx.elevation_deg = t.at("elevation_deg").get<double>();
    m.setup.tx.azimuth_deg = t.at("azimuth_deg").get<double>();
    m.setup.tx.tx_power_amp = t.at("tx_power_amp").get<double>();
    m.setup.tx_phase = t.at("flat_phase").get<bool>() ? TxPhaseModel::flat : TxPhaseModel::spherical;
    m.setup.rx_distance = j.at("rx_distance_m").get<double>();
    const auto& gr = j.at("grid");
    m.grid.azimuth_start = gr.at("azimuth_start").get<double>();
    m.grid.azimuth_stop = gr.at("azimuth_stop").get<double>();
    m.grid.elevation_start = gr.at("elevation_start").get<double>();
    m.grid.elevation_stop = gr.at("elevation_stop").get<double>();
    m.grid.step = gr.at("step").get<double>();
    const auto& sp = j.at("split");
    m.ratios = sp.at("ratios").get<std::array<double, 3>>();
    m.split_seed = sp.at("seed").get<std::uint64_t>();
    m.split.train = sp.at("train").get<std::vector<std::size_t>>();
    m.split.val = sp.at("val").get<std::vector<std::size_t>>();
    m.split.test = sp.at("test").get<std::vector<std::size_t>>();
    m.sample_count = j.at("counts").at("samples").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  return m;
}

inline void write_manifest(const std::filesystem::path& dir, const DatasetManifest& m) {
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
  out << to_json(m).dump(2) << '\n';
}

inline DatasetManifest read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("no manifest.json in " + dir.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  return manifest_from_json(j);
}

struct Dataset {
  DatasetManifest manifest;
  std::vector<Sample> samples;
};

inline void write_samples(const std::filesystem::path& dir, const std::vector<Sample>& samples, std::size_t n_rows,
                          std::size_t m_cols) {
  const std::size_t count = samples.size();
  Tensor h({count, n_rows});
  Tensor v({count, m_cols});
  Tensor ref({count, n_rows, m_cols});
  std::ostringstream csv;
  csv << "index,elevation_deg,azimuth_deg,objective_im,objective_gim\n";
  char line[256];
  for (std::size_t i = 0; i < count; ++i) {
    const Sample& s = samples[i];
    for (std::size_t n = 0; n < n_rows; ++n) h[i * n_rows + n] = s.h_cfg.states[n];
    for (std::size_t m = 0; m < m_cols; ++m) v[i * m_cols + m] = s.v_cfg.states[m];
    for (std::size_t k = 0; k < n_rows * m_cols; ++k) ref[i * n_rows * m_cols + k] = s.ref_cfg.states[k];
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.17g\n", i, s.elevation_deg, s.azimuth_deg,
                  s.objective_im, s.objective_gim);
    csv << line;
  }
  save_tensor(dir / "h_stripes.rist", h);
  save_tensor(dir / "v_stripes.rist", v);
  save_tensor(dir / "ref_configs.rist", ref);
  std::ofstream out(dir / "samples.csv", std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + (dir / "samples.csv").string());
  out << csv.str();
}

/// Runs both group-wise searches and the element-wise reference at every grid
/// point and writes the dataset (without a split) to `out_dir`.
inline DatasetManifest generate_dataset(const SimulationSetup& setup, const AngularGrid& grid,
                                        const std::filesystem::path& out_dir) {
  grid.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir))
    throw std::runtime_error("cannot create output directory " + out_dir.string());

  const auto illum = setup.illumination();
  std::vector<Sample> samples;
  for (const auto& [el, az] : grid.points()) samples.push_back(make_sample(setup, illum, el, az));

  DatasetManifest m;
  m.setup = setup;
  m.grid = grid;
  m.sample_count = samples.size();
  write_samples(out_dir, samples, setup.geom.n_rows, setup.geom.m_cols);
  write_manifest(out_dir, m);
  return m;
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.manifest = read_manifest(dir);
  const std::size_t count = ds.manifest.sample_count;
  const std::size_t rows = ds.manifest.setup.geom.n_rows;
  const std::size_t cols = ds.manifest.setup.geom.m_cols;
  const Tensor h = load_tensor(dir / "h_stripes.rist");
  const Tensor v = load_tensor(dir / "v_stripes.rist");
  const Tensor ref = load_tensor(dir / "ref_configs.rist");
  if (h.shape() != std::vector<std::size_t>{count, rows} || v.shape() != std::vector<std::size_t>{count, cols} ||
      ref.shape() != std::vector<std::size_t>{count, rows, cols})
    throw FormatError("dataset tensors do not match manifest dimensions");

  std::ifstream csv(dir / "samples.csv");
  if (!csv) throw std::runtime_error("no samples.csv in " + dir.string());
  std::string line;
  std::getline(csv, line);
  const auto& table = ds.manifest.setup.table;
  auto to_state = [&](double x) {
    const auto s = static_cast<std::size_t>(x);
    if (static_cast<double>(s) != x || s >= table.size()) throw FormatError("dataset: invalid state value");
    return static_cast<State>(s);
  };
  ds.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(csv, line)) throw FormatError("samples.csv: too few rows");
    Sample& s = ds.samples[i];
    std::size_t index = 0;
    if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf", &index, &s.elevation_deg, &s.azimuth_deg, &s.objective_im,
                    &s.objective_gim) != 5 ||
        index != i)
      throw FormatError("samples.csv: malformed row " + std::to_string(i));
    s.h_cfg = {Orientation::horizontal, std::vector<State>(rows)};
    s.v_cfg = {Orientation::vertical, std::vector<State>(cols)};
    for (std::size_t n = 0; n < rows; ++n) s.h_cfg.states[n] = to_state(h[i * rows + n]);
    for (std::size_t m = 0; m < cols; ++m) s.v_cfg.states[m] = to_state(v[i * cols + m]);
    s.ref_cfg = PhaseConfig(rows, cols, table);
    for (std::size_t k = 0; k < rows * cols; ++k) s.ref_cfg.states[k] = to_state(ref[i * rows * cols + k]);
  }
  return ds;
}

/// Maps a phase state to its network value cos(phase): 0 deg -> +1, 180 deg -> -1.
inline double encode_state(const PhaseTable& table, State s) {
  return std::cos(deg2rad(table.degrees(s)));
}

inline Tensor encode_stripes(const StripeConfig& h_cfg, const StripeConfig& v_cfg, const PhaseTable& table) {
  const std::size_t rows = h_cfg.states.size();
  const std::size_t cols = v_cfg.states.size();
  Tensor input({rows, cols, 2});
  for (std::size_t n = 0; n < rows; ++n) {
    for (std::size_t m = 0; m < cols; ++m) {
      input[(n * cols + m) * 2 + 0] = encode_state(table, h_cfg.states[n]);
      input[(n * cols + m) * 2 + 1] = encode_state(table, v_cfg.states[m]);
    }
  }
  return input;
}

inline Tensor encode_config(const PhaseConfig& cfg) {
  Tensor t({cfg.rows(), cfg.cols()});
  for (std::size_t k = 0; k < cfg.states.size(); ++k) t[k] = encode_state(cfg.table, cfg.states[k]);
  return t;
}

/// Thresholds a network output map: >= 0 -> state 0, < 0 -> state 1.
inline PhaseConfig decode_config(const Tensor& map, const PhaseTable& table = {}) {
  if (map.rank() != 2) throw DimensionError("decode_config: expected an H x W map");
  require(table.size() == 2, "decode_config: binary phase table required");
  PhaseConfig cfg(map.dim(0), map.dim(1), table);
  for (std::size_t k = 0; k < map.size(); ++k) cfg.states[k] = map[k] >= 0.0 ? 0 : 1;
  return cfg;
}

inline nn::Example encode_sample(const Sample& s) {
  if (s.h_cfg.orientation != Orientation::horizontal || s.v_cfg.orientation != Orientation::vertical ||
      s.h_cfg.states.size() != s.ref_cfg.rows() || s.v_cfg.states.size() != s.ref_cfg.cols())
    throw DimensionError("encode_sample: stripe and reference shapes disagree");
  return {encode_stripes(s.h_cfg, s.v_cfg, s.ref_cfg.table), encode_config(s.ref_cfg)};
}

inline std::vector<nn::Example> encode_subset(const Dataset& ds, const std::vector<std::size_t>& indices) {
  std::vector<nn::Example> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(encode_sample(ds.samples.at(i)));
  return out;
}

/// Network-predicted full configuration from the two stripe searches.
inline PhaseConfig predict_config(const nn::Model& model, const StripeConfig& h_cfg, const StripeConfig& v_cfg,
                                  const PhaseTable& table = {}) {
  if (h_cfg.orientation != Orientation::horizontal || v_cfg.orientation != Orientation::vertical)
    throw DimensionError("predict_config: need one horizontal and one vertical stripe config");
  return decode_config(nn::model_forward(model, encode_stripes(h_cfg, v_cfg, table), nn::Mode::eval), table);
}

}  // namespace risopt
