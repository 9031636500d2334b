#pragma once

// Received-power comparison of the element-wise reference against the
// combined stripe configuration and the network prediction.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "risopt/dataset.hpp"
#include "risopt/optimizers.hpp"
#include "risopt/physics.hpp"

namespace risopt {

struct EvalRow {
  std::size_t sample = 0;
  double azimuth_deg = 0.0;
  double elevation_deg = 0.0;
  double p_im_db = 0.0;
  double p_gim_db = 0.0;
  double p_cnn_db = 0.0;
  double gap_gim_db = 0.0;
  double gap_cnn_db = 0.0;
};

struct GapSummary {
  double max = 0.0;
  double mean = 0.0;
  double median = 0.0;
  double band_mean = 0.0;  // over |elevation| <= band limit
  std::size_t band_count = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  GapSummary gim;
  GapSummary cnn;
  double band_limit_deg = 45.0;
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

inline GapSummary summarize_gaps(const std::vector<EvalRow>& rows, double EvalRow::*gap, double band_limit_deg) {
  GapSummary s;
  if (rows.empty()) return s;
  std::vector<double> gaps;
  double band_sum = 0.0;
  s.max = -std::numeric_limits<double>::infinity();
  for (const auto& r : rows) {
    const double g = r.*gap;
    gaps.push_back(g);
    s.max = std::max(s.max, g);
    s.mean += g;
    if (std::fabs(r.elevation_deg) <= band_limit_deg) {
      band_sum += g;
      ++s.band_count;
    }
  }
  s.mean /= static_cast<double>(rows.size());
  s.median = median_of(std::move(gaps));
  s.band_mean = s.band_count ? band_sum / static_cast<double>(s.band_count)
                             : std::numeric_limits<double>::quiet_NaN();
  return s;
}

/// Power in dB of a configuration at one sample; the default is the
/// noiseless 20 log10 |G|.
using PowerModel = std::function<double(const ChannelMatrices&, const PhaseConfig&, std::size_t sample)>;

inline double noiseless_power_db(const ChannelMatrices& ch, const PhaseConfig& cfg, std::size_t) {
  return objective_db(ch, cfg);
}

/// Evaluates `indices` of `ds`; `predict` supplies the network configuration.
inline EvalReport evaluate(const Dataset& ds, const std::vector<std::size_t>& indices,
                           const std::function<PhaseConfig(const Sample&)>& predict,
                           const PowerModel& power = noiseless_power_db, double band_limit_deg = 45.0) {
  const auto& setup = ds.manifest.setup;
  const auto illum = setup.illumination();
  EvalReport rep;
  rep.band_limit_deg = band_limit_deg;
  for (std::size_t idx : indices) {
    const Sample& s = ds.samples.at(idx);
    const auto ch = setup.channels(illum, s.elevation_deg, s.azimuth_deg);
    EvalRow row;
    row.sample = idx;
    row.azimuth_deg = s.azimuth_deg;
    row.elevation_deg = s.elevation_deg;
    row.p_im_db = power(ch, s.ref_cfg, idx);
    row.p_gim_db = power(ch, combine_stripes(s.h_cfg, s.v_cfg, setup.table), idx);
    row.p_cnn_db = power(ch, predict(s), idx);
    row.gap_gim_db = row.p_im_db - row.p_gim_db;
    row.gap_cnn_db = row.p_im_db - row.p_cnn_db;
    rep.rows.push_back(row);
  }
  rep.gim = summarize_gaps(rep.rows, &EvalRow::gap_gim_db, band_limit_deg);
  rep.cnn = summarize_gaps(rep.rows, &EvalRow::gap_cnn_db, band_limit_deg);
  return rep;
}

inline std::string report_csv(const EvalReport& rep) {
  std::ostringstream out;
  out << "sample,azimuth_deg,elevation_deg,p_im_db,p_gim_db,p_cnn_db,gap_gim_db,gap_cnn_db\n";
  char line[512];
  for (const auto& r : rep.rows) {
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.sample, r.azimuth_deg,
                  r.elevation_deg, r.p_im_db, r.p_gim_db, r.p_cnn_db, r.gap_gim_db, r.gap_cnn_db);
    out << line;
  }
  return out.str();
}

inline nlohmann::json summary_json(const EvalReport& rep) {
  auto one = [&](const GapSummary& s) {
    return nlohmann::json{{"max_gap_db", s.max},
                          {"mean_gap_db", s.mean},
                          {"median_gap_db", s.median},
                          {"band_mean_gap_db", s.band_mean},
                          {"band_count", s.band_count}};
  };
  return {{"samples", rep.rows.size()},
          {"band_limit_deg", rep.band_limit_deg},
          {"gim", one(rep.gim)},
          {"cnn", one(rep.cnn)}};
}

}  // namespace risopt
