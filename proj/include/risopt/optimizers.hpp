#pragma once

// Feedback-driven greedy searches over binary (or P-ary) element phases.
//
// Every optimizer counts one step per (configure, measure) attempt and keeps a
// running maximum of the measured objective. A candidate is committed only on
// strict improvement, so ties always keep the incumbent.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "risopt/error.hpp"
#include "risopt/physics.hpp"

namespace risopt {

struct OptimizeTrace {
  std::size_t steps = 0;
  std::vector<double> best_objective_history;
  double final_objective = 0.0;

  void record(double best) {
    ++steps;
    best_objective_history.push_back(best);
  }
};

enum class Orientation { horizontal, vertical };

inline const char* to_string(Orientation o) { return o == Orientation::horizontal ? "horizontal" : "vertical"; }

/// One state per row (horizontal) or per column (vertical).
struct StripeConfig {
  Orientation orientation = Orientation::horizontal;
  std::vector<State> states;

  friend bool operator==(const StripeConfig&, const StripeConfig&) = default;
};

inline PhaseConfig expand(const StripeConfig& s, std::size_t n_rows, std::size_t m_cols, const PhaseTable& table) {
  const std::size_t expected = s.orientation == Orientation::horizontal ? n_rows : m_cols;
  if (s.states.size() != expected) throw DimensionError("expand: stripe count does not match surface");
  PhaseConfig cfg(n_rows, m_cols, table);
  for (std::size_t n = 0; n < n_rows; ++n)
    for (std::size_t m = 0; m < m_cols; ++m)
      cfg.states(n, m) = s.orientation == Orientation::horizontal ? s.states[n] : s.states[m];
  cfg.validate();
  return cfg;
}

/// Whether objective evaluations go through the O(1) incremental update or a
/// full re-summation. Both must produce identical decisions.
enum class Evaluation { incremental, full };

struct ImResult {
  PhaseConfig config;
  OptimizeTrace trace;
};

struct StripeResult {
  StripeConfig stripes;
  OptimizeTrace trace;
};

inline ImResult im_optimize(const ChannelMatrices& ch, const PhaseTable& table, const PhaseConfig& init,
                            Evaluation eval = Evaluation::incremental) {
  if (!init.states.same_shape(ch.h)) throw DimensionError("im_optimize: init shape does not match channels");
  PhaseConfig cfg = init;
  cfg.table = table;
  cfg.validate();

  OptimizeTrace trace;
  trace.best_objective_history.reserve(cfg.states.size() * table.size());
  double best = -std::numeric_limits<double>::infinity();
  cplx committed_sum = cascade_gain(ch, cfg);

  for (std::size_t n = 0; n < cfg.rows(); ++n) {
    for (std::size_t m = 0; m < cfg.cols(); ++m) {
      const State incumbent = cfg.states(n, m);
      State chosen = incumbent;
      cplx chosen_sum = committed_sum;
      for (std::size_t s = 0; s < table.size(); ++s) {
        cplx trial;
        if (eval == Evaluation::incremental) {
          trial = flip_delta(ch, cfg, n, m, s, committed_sum);
        } else {
          cfg.states(n, m) = static_cast<State>(s);
          trial = cascade_gain(ch, cfg);
          cfg.states(n, m) = incumbent;
        }
        const double value = std::abs(trial);
        if (value > best) {
          best = value;
          chosen = static_cast<State>(s);
          chosen_sum = trial;
        }
        trace.record(best);
      }
      cfg.states(n, m) = chosen;
      committed_sum = chosen_sum;
    }
  }
  trace.final_objective = objective(ch, cfg);
  return {std::move(cfg), std::move(trace)};
}

inline ImResult im_optimize(const ChannelMatrices& ch, const PhaseTable& table = {},
                            Evaluation eval = Evaluation::incremental) {
  return im_optimize(ch, table, PhaseConfig(ch.rows(), ch.cols(), table), eval);
}

/// Group-wise search: whole rows (horizontal) or whole columns (vertical) are
/// switched together, sweeping stripes in index order.
inline StripeResult gim_optimize(const ChannelMatrices& ch, const PhaseTable& table, Orientation orientation,
                                 Evaluation eval = Evaluation::incremental) {
  const std::size_t rows = ch.rows();
  const std::size_t cols = ch.cols();
  if (!ch.g.same_shape(ch.h)) throw DimensionError("gim_optimize: h and g shapes differ");
  const bool horiz = orientation == Orientation::horizontal;
  const std::size_t stripes = horiz ? rows : cols;

  // Unphased contribution of each stripe.
  std::vector<cplx> stripe_sum(stripes, cplx{0.0, 0.0});
  for (std::size_t n = 0; n < rows; ++n)
    for (std::size_t m = 0; m < cols; ++m) stripe_sum[horiz ? n : m] += ch.h(n, m) * ch.g(n, m);

  StripeConfig sc{orientation, std::vector<State>(stripes, 0)};
  OptimizeTrace trace;
  trace.best_objective_history.reserve(stripes * table.size());
  double best = -std::numeric_limits<double>::infinity();

  cplx committed_sum{0.0, 0.0};
  for (std::size_t i = 0; i < stripes; ++i) committed_sum += stripe_sum[i] * table.phasor(0);

  for (std::size_t i = 0; i < stripes; ++i) {
    const State incumbent = sc.states[i];
    State chosen = incumbent;
    cplx chosen_sum = committed_sum;
    for (std::size_t s = 0; s < table.size(); ++s) {
      cplx trial;
      if (eval == Evaluation::incremental) {
        trial = s == incumbent ? committed_sum
                               : committed_sum - stripe_sum[i] * table.phasor(incumbent) +
                                     stripe_sum[i] * table.phasor(s);
      } else {
        sc.states[i] = static_cast<State>(s);
        trial = cascade_gain(ch, expand(sc, rows, cols, table));
        sc.states[i] = incumbent;
      }
      const double value = std::abs(trial);
      if (value > best) {
        best = value;
        chosen = static_cast<State>(s);
        chosen_sum = trial;
      }
      trace.record(best);
    }
    sc.states[i] = chosen;
    committed_sum = chosen_sum;
  }
  trace.final_objective = objective(ch, expand(sc, rows, cols, table));
  return {std::move(sc), std::move(trace)};
}

/// Element (m, n) takes the phase sum of its row stripe and column stripe,
/// snapped back onto the table. For a {0, 180} table this is an XOR.
inline PhaseConfig combine_stripes(const StripeConfig& h_cfg, const StripeConfig& v_cfg, const PhaseTable& table) {
  if (h_cfg.orientation != Orientation::horizontal || v_cfg.orientation != Orientation::vertical)
    throw DomainError("combine_stripes: need one horizontal and one vertical stripe config");
  const std::size_t rows = h_cfg.states.size();
  const std::size_t cols = v_cfg.states.size();
  PhaseConfig cfg(rows, cols, table);
  for (std::size_t n = 0; n < rows; ++n) {
    for (std::size_t m = 0; m < cols; ++m) {
      const double sum = std::fmod(table.degrees(h_cfg.states[n]) + table.degrees(v_cfg.states[m]), 360.0);
      cfg.states(n, m) = static_cast<State>(table.nearest(sum));
    }
  }
  return cfg;
}

inline constexpr std::uint64_t kExhaustiveLimit = std::uint64_t{1} << 24;

struct ExhaustiveResult {
  PhaseConfig config;
  double objective = 0.0;
};

/// Brute force over all P^(M N) configurations. Element k = n M + m is digit
/// k (least significant first); ties go to the lowest encoding.
inline ExhaustiveResult exhaustive_optimize(const ChannelMatrices& ch, const PhaseTable& table = {}) {
  const std::size_t elements = ch.h.size();
  const std::uint64_t p = table.size();
  std::uint64_t total = 1;
  for (std::size_t k = 0; k < elements; ++k) {
    if (total > kExhaustiveLimit / p) throw DomainError("exhaustive_optimize: instance too large");
    total *= p;
  }

  PhaseConfig cfg(ch.rows(), ch.cols(), table);
  PhaseConfig best_cfg = cfg;
  double best = -std::numeric_limits<double>::infinity();
  for (std::uint64_t code = 0; code < total; ++code) {
    if (code > 0) {
      // Odometer increment.
      for (std::size_t k = 0; k < elements; ++k) {
        if (++cfg.states[k] < p) break;
        cfg.states[k] = 0;
      }
    }
    const double value = objective(ch, cfg);
    if (value > best) {
      best = value;
      best_cfg = cfg;
    }
  }
  return {std::move(best_cfg), best};
}

enum class Method { im, gim };

inline std::size_t step_count(Method method, std::size_t m, std::size_t n, std::size_t p) {
  return method == Method::im ? m * n * p : (m + n) * p;
}

}  // namespace risopt
