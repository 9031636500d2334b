#pragma once

// RIS scattering-field and channel model.
//
// Coordinate frame: the surface lies on the xy-plane and faces +z. Element
// (m, n) sits at ((m - (M-1)/2) dx, (n - (N-1)/2) dy, 0). Directions are given
// as (elevation from +z, azimuth in the xy-plane), so a unit vector is
// (sin el cos az, sin el sin az, cos el).

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "risopt/error.hpp"
#include "risopt/grid.hpp"

namespace risopt {

using cplx = std::complex<double>;
using State = std::uint8_t;

inline constexpr double kSpeedOfLight = 299'792'458.0;
inline constexpr double kPowerFloorDb = -300.0;

inline double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

struct RisGeometry {
  std::size_t m_cols = 40;
  std::size_t n_rows = 40;
  double dx = 0.0;
  double dy = 0.0;
  double carrier_freq = 5e9;

  double wavelength() const { return kSpeedOfLight / carrier_freq; }
  double k0() const { return 2.0 * std::numbers::pi * carrier_freq / kSpeedOfLight; }

  void validate() const {
    require(m_cols >= 1 && n_rows >= 1, "RisGeometry: element counts must be >= 1");
    require(dx > 0.0 && dy > 0.0, "RisGeometry: spacings must be positive");
    require(carrier_freq > 0.0, "RisGeometry: carrier frequency must be positive");
  }

  /// Half-wavelength lattice at the given carrier.
  static RisGeometry half_wavelength(std::size_t m, std::size_t n, double freq_hz = 5e9) {
    RisGeometry g;
    g.m_cols = m;
    g.n_rows = n;
    g.carrier_freq = freq_hz;
    g.dx = g.dy = 0.5 * g.wavelength();
    return g;
  }

  double element_x(std::size_t m) const {
    return (static_cast<double>(m) - 0.5 * static_cast<double>(m_cols - 1)) * dx;
  }
  double element_y(std::size_t n) const {
    return (static_cast<double>(n) - 0.5 * static_cast<double>(n_rows - 1)) * dy;
  }
};

struct TxSpec {
  double distance = 1.0;
  double elevation_deg = 0.0;
  double azimuth_deg = 0.0;
  double tx_power_amp = 1.0;

  void validate() const {
    require(distance > 0.0, "TxSpec: distance must be positive");
    require(elevation_deg >= -90.0 && elevation_deg <= 90.0, "TxSpec: elevation outside [-90, 90]");
    require(azimuth_deg >= 0.0 && azimuth_deg < 360.0, "TxSpec: azimuth outside [0, 360)");
  }
};

struct RxSpec {
  double distance = 10.0;
  double elevation_deg = 0.0;
  double azimuth_deg = 0.0;

  void validate() const { require(distance > 0.0, "RxSpec: distance must be positive"); }
};

/// Discrete reflection phases available to every element, in degrees.
class PhaseTable {
 public:
  PhaseTable() : PhaseTable(std::vector<double>{0.0, 180.0}) {}
  explicit PhaseTable(std::vector<double> degrees) : degrees_(std::move(degrees)) {
    require(!degrees_.empty() && degrees_.size() <= 256, "PhaseTable: need 1..256 states");
    for (std::size_t i = 0; i < degrees_.size(); ++i) {
      require(degrees_[i] >= 0.0 && degrees_[i] < 360.0, "PhaseTable: entries must lie in [0, 360)");
      for (std::size_t j = 0; j < i; ++j)
        require(degrees_[i] != degrees_[j], "PhaseTable: entries must be distinct");
    }
    phasors_.reserve(degrees_.size());
    for (double d : degrees_) phasors_.push_back(unit_phasor(d));
  }

  /// P equally spaced states starting at 0 degrees.
  static PhaseTable uniform(std::size_t p) {
    std::vector<double> d(p);
    for (std::size_t i = 0; i < p; ++i) d[i] = 360.0 * static_cast<double>(i) / static_cast<double>(p);
    return PhaseTable(std::move(d));
  }

  std::size_t size() const noexcept { return degrees_.size(); }
  double degrees(std::size_t s) const { return degrees_.at(s); }
  const std::vector<double>& degrees() const noexcept { return degrees_; }
  const cplx& phasor(std::size_t s) const { return phasors_[s]; }

  /// Index of the entry closest to `deg` on the circle; lowest index wins ties.
  std::size_t nearest(double deg) const {
    std::size_t best = 0;
    double best_dist = 1e300;
    for (std::size_t i = 0; i < degrees_.size(); ++i) {
      double d = std::fmod(std::fabs(deg - degrees_[i]), 360.0);
      d = std::min(d, 360.0 - d);
      if (d < best_dist) {
        best_dist = d;
        best = i;
      }
    }
    return best;
  }

  friend bool operator==(const PhaseTable& a, const PhaseTable& b) { return a.degrees_ == b.degrees_; }

 private:
  // Exact values at the quarter turns so that 0/180 tables give +-1 without
  // rounding residue.
  static cplx unit_phasor(double deg) {
    if (deg == 0.0) return {1.0, 0.0};
    if (deg == 90.0) return {0.0, 1.0};
    if (deg == 180.0) return {-1.0, 0.0};
    if (deg == 270.0) return {0.0, -1.0};
    return std::polar(1.0, deg2rad(deg));
  }

  std::vector<double> degrees_;
  std::vector<cplx> phasors_;
};

/// N x M matrix of state indices plus the phase table they index.
struct PhaseConfig {
  Grid<State> states;
  PhaseTable table;

  PhaseConfig() = default;
  PhaseConfig(std::size_t n_rows, std::size_t m_cols, PhaseTable t = {})
      : states(n_rows, m_cols, 0), table(std::move(t)) {}

  std::size_t rows() const noexcept { return states.rows(); }
  std::size_t cols() const noexcept { return states.cols(); }
  const cplx& phasor(std::size_t r, std::size_t c) const { return table.phasor(states(r, c)); }

  void validate() const {
    for (State s : states.data())
      require(s < table.size(), "PhaseConfig: state index out of range");
  }

  friend bool operator==(const PhaseConfig& a, const PhaseConfig& b) {
    return a.states == b.states && a.table == b.table;
  }
};

struct Illumination {
  Grid<double> amp;
  Grid<double> phase;
  Grid<double> cos_inc;
};

struct ChannelMatrices {
  Grid<cplx> h;
  Grid<cplx> g;

  std::size_t rows() const noexcept { return h.rows(); }
  std::size_t cols() const noexcept { return h.cols(); }
};

struct PatternGrid {
  std::vector<double> elevations;
  std::vector<double> azimuths;
  Grid<cplx> field;
  Grid<double> power_db;
};

/// How the per-element incident phase is modelled.
enum class TxPhaseModel {
  spherical,  // alpha_mn = -k0 r_mn
  flat,       // alpha_mn = 0
};

inline Illumination compute_illumination(const RisGeometry& geom, const TxSpec& tx,
                                         TxPhaseModel model = TxPhaseModel::spherical) {
  geom.validate();
  tx.validate();
  const double el = deg2rad(tx.elevation_deg);
  const double az = deg2rad(tx.azimuth_deg);
  const double tx_x = tx.distance * std::sin(el) * std::cos(az);
  const double tx_y = tx.distance * std::sin(el) * std::sin(az);
  const double tx_z = tx.distance * std::cos(el);
  const double lambda = geom.wavelength();
  const double k0 = geom.k0();

  Illumination out{Grid<double>(geom.n_rows, geom.m_cols), Grid<double>(geom.n_rows, geom.m_cols),
                   Grid<double>(geom.n_rows, geom.m_cols)};
  for (std::size_t n = 0; n < geom.n_rows; ++n) {
    for (std::size_t m = 0; m < geom.m_cols; ++m) {
      const double ddx = tx_x - geom.element_x(m);
      const double ddy = tx_y - geom.element_y(n);
      const double r = std::sqrt(ddx * ddx + ddy * ddy + tx_z * tx_z);
      if (!(r > 1e-9 * lambda)) throw DomainError("compute_illumination: transmitter coincides with an element");
      out.amp(n, m) = lambda / (4.0 * std::numbers::pi * r);
      out.phase(n, m) = model == TxPhaseModel::spherical ? -k0 * r : 0.0;
      out.cos_inc(n, m) = std::clamp(tx_z / r, 0.0, 1.0);
    }
  }
  return out;
}

namespace detail {

// Per-column and per-row factors of the separable steering term
// exp(j k0 (m dx sin el cos az + n dy sin el sin az)).
struct Steering {
  std::vector<cplx> col;
  std::vector<cplx> row;
};

inline Steering steering(const RisGeometry& geom, double elev_deg, double azim_deg) {
  const double el = deg2rad(elev_deg);
  const double az = deg2rad(azim_deg);
  const double kx = geom.k0() * geom.dx * std::sin(el) * std::cos(az);
  const double ky = geom.k0() * geom.dy * std::sin(el) * std::sin(az);
  Steering s{std::vector<cplx>(geom.m_cols), std::vector<cplx>(geom.n_rows)};
  for (std::size_t m = 0; m < geom.m_cols; ++m) s.col[m] = std::polar(1.0, kx * static_cast<double>(m));
  for (std::size_t n = 0; n < geom.n_rows; ++n) s.row[n] = std::polar(1.0, ky * static_cast<double>(n));
  return s;
}

inline void check_dims(const Grid<State>& states, std::size_t rows, std::size_t cols, const char* who) {
  if (!states.same_shape(rows, cols))
    throw DimensionError(std::string(who) + ": configuration shape does not match the surface");
}

}  // namespace detail

inline ChannelMatrices compute_channels(const RisGeometry& geom, const Illumination& illum, const RxSpec& rx) {
  geom.validate();
  rx.validate();
  if (!illum.amp.same_shape(geom.n_rows, geom.m_cols))
    throw DimensionError("compute_channels: illumination shape does not match geometry");
  const double l_rx = geom.wavelength() / (4.0 * std::numbers::pi * rx.distance);
  const double rx_pattern = std::cos(deg2rad(rx.elevation_deg));
  const auto steer = detail::steering(geom, rx.elevation_deg, rx.azimuth_deg);

  ChannelMatrices ch{Grid<cplx>(geom.n_rows, geom.m_cols), Grid<cplx>(geom.n_rows, geom.m_cols)};
  for (std::size_t n = 0; n < geom.n_rows; ++n) {
    for (std::size_t m = 0; m < geom.m_cols; ++m) {
      ch.h(n, m) = std::polar(illum.amp(n, m), illum.phase(n, m)) * illum.cos_inc(n, m);
      ch.g(n, m) = l_rx * rx_pattern * (steer.row[n] * steer.col[m]);
    }
  }
  return ch;
}

/// Far-field scattered field E(el, az) with unit reflection amplitude.
inline cplx scattered_field(const RisGeometry& geom, const Illumination& illum, const PhaseConfig& cfg,
                            double elev_deg, double azim_deg) {
  detail::check_dims(cfg.states, geom.n_rows, geom.m_cols, "scattered_field");
  const auto steer = detail::steering(geom, elev_deg, azim_deg);
  cplx total{0.0, 0.0};
  for (std::size_t n = 0; n < geom.n_rows; ++n) {
    cplx row_sum{0.0, 0.0};
    for (std::size_t m = 0; m < geom.m_cols; ++m) {
      const cplx incident = std::polar(illum.amp(n, m), illum.phase(n, m)) * illum.cos_inc(n, m);
      row_sum += incident * cfg.phasor(n, m) * steer.col[m];
    }
    total += row_sum * steer.row[n];
  }
  return std::cos(deg2rad(elev_deg)) * total;
}

inline double magnitude_db(const cplx& v) {
  const double a = std::abs(v);
  return a > 0.0 ? 20.0 * std::log10(a) : kPowerFloorDb;
}

inline PatternGrid radiation_pattern(const RisGeometry& geom, const Illumination& illum, const PhaseConfig& cfg,
                                     std::span<const double> elevations, std::span<const double> azimuths) {
  require(!elevations.empty() && !azimuths.empty(), "radiation_pattern: empty angle list");
  detail::check_dims(cfg.states, geom.n_rows, geom.m_cols, "radiation_pattern");

  // Fold illumination and configuration once; only steering varies per cell.
  Grid<cplx> weights(geom.n_rows, geom.m_cols);
  for (std::size_t n = 0; n < geom.n_rows; ++n)
    for (std::size_t m = 0; m < geom.m_cols; ++m)
      weights(n, m) = std::polar(illum.amp(n, m), illum.phase(n, m)) * illum.cos_inc(n, m) * cfg.phasor(n, m);

  PatternGrid out{{elevations.begin(), elevations.end()},
                  {azimuths.begin(), azimuths.end()},
                  Grid<cplx>(elevations.size(), azimuths.size()),
                  Grid<double>(elevations.size(), azimuths.size())};
  for (std::size_t i = 0; i < elevations.size(); ++i) {
    for (std::size_t j = 0; j < azimuths.size(); ++j) {
      const auto steer = detail::steering(geom, elevations[i], azimuths[j]);
      cplx total{0.0, 0.0};
      for (std::size_t n = 0; n < geom.n_rows; ++n) {
        cplx row_sum{0.0, 0.0};
        for (std::size_t m = 0; m < geom.m_cols; ++m) row_sum += weights(n, m) * steer.col[m];
        total += row_sum * steer.row[n];
      }
      const cplx e = std::cos(deg2rad(elevations[i])) * total;
      out.field(i, j) = e;
      out.power_db(i, j) = magnitude_db(e);
    }
  }
  return out;
}

/// Sum over elements of h e^{j phi} g.
inline cplx cascade_gain(const ChannelMatrices& ch, const PhaseConfig& cfg) {
  detail::check_dims(cfg.states, ch.rows(), ch.cols(), "cascade_gain");
  cplx sum{0.0, 0.0};
  for (std::size_t i = 0; i < ch.h.size(); ++i) sum += ch.h[i] * cfg.table.phasor(cfg.states[i]) * ch.g[i];
  return sum;
}

/// Cascade gain after moving one element to `new_state`, given the current
/// gain. `cfg` is not modified.
inline cplx flip_delta(const ChannelMatrices& ch, const PhaseConfig& cfg, std::size_t row, std::size_t col,
                       std::size_t new_state, const cplx& current_sum) {
  detail::check_dims(cfg.states, ch.rows(), ch.cols(), "flip_delta");
  if (row >= cfg.rows() || col >= cfg.cols()) throw DomainError("flip_delta: element index out of range");
  if (new_state >= cfg.table.size()) throw DomainError("flip_delta: state index out of range");
  const std::size_t old_state = cfg.states(row, col);
  if (old_state == new_state) return current_sum;
  const cplx hg = ch.h(row, col) * ch.g(row, col);
  return current_sum - hg * cfg.table.phasor(old_state) + hg * cfg.table.phasor(new_state);
}

/// y[k] = G x[k] + n[k] with circularly-symmetric Gaussian noise of total
/// standard deviation `noise_sigma`.
inline std::vector<cplx> simulate_received_signal(const ChannelMatrices& ch, const PhaseConfig& cfg,
                                                  std::span<const cplx> x, double noise_sigma,
                                                  std::uint64_t rng_seed) {
  if (x.empty()) throw DomainError("simulate_received_signal: empty transmit sequence");
  require(noise_sigma >= 0.0, "simulate_received_signal: noise_sigma must be >= 0");
  const cplx gain = cascade_gain(ch, cfg);
  std::vector<cplx> y(x.size());
  if (noise_sigma == 0.0) {
    for (std::size_t k = 0; k < x.size(); ++k) y[k] = gain * x[k];
    return y;
  }
  std::mt19937_64 rng(rng_seed);
  std::normal_distribution<double> normal(0.0, noise_sigma / std::sqrt(2.0));
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double re = normal(rng);
    const double im = normal(rng);
    y[k] = gain * x[k] + cplx(re, im);
  }
  return y;
}

/// 10 log10 of the mean sample power.
inline double received_power_db(std::span<const cplx> y) {
  if (y.empty()) throw DomainError("received_power_db: empty sequence");
  double acc = 0.0;
  for (const cplx& v : y) acc += std::norm(v);
  if (!(acc > 0.0)) throw DegeneratePowerError("received_power_db: all samples are zero");
  return 10.0 * std::log10(acc / static_cast<double>(y.size()));
}

inline double objective(const ChannelMatrices& ch, const PhaseConfig& cfg) { return std::abs(cascade_gain(ch, cfg)); }

/// Noiseless received power in dB for unit transmit amplitude.
inline double objective_db(const ChannelMatrices& ch, const PhaseConfig& cfg) {
  return magnitude_db(cascade_gain(ch, cfg));
}

}  // namespace risopt
