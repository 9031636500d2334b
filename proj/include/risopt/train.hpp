#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "risopt/error.hpp"
#include "risopt/nn.hpp"
#include "risopt/tensor.hpp"

namespace risopt::nn {

struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step_count = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  explicit AdamState(const std::vector<Tensor*>& params, double learning_rate = 1e-3) : lr(learning_rate) {
    for (const Tensor* p : params) {
      first_moment.emplace_back(p->shape());
      second_moment.emplace_back(p->shape());
    }
  }
};

/// One bias-corrected ADAM update of `params` in place.
inline void adam_step(AdamState& state, std::span<Tensor* const> params, const Gradients& grads) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size())
    throw DimensionError("adam_step: parameter/gradient/moment counts differ");
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = grads[i];
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    if (g.size() != p.size() || m.size() != p.size()) throw DimensionError("adam_step: tensor size mismatch");
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      p[k] -= state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

/// Stops once the monitored loss has failed to beat its running minimum for
/// `patience` consecutive epochs.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {
    require(patience >= 1, "EarlyStopping: patience must be >= 1");
  }

  /// Returns true when training should stop after this epoch.
  bool update(double loss) {
    if (loss < best_) {
      best_ = loss;
      wait_ = 0;
      return false;
    }
    return ++wait_ >= patience_;
  }

  double best() const noexcept { return best_; }
  std::size_t wait() const noexcept { return wait_; }

 private:
  std::size_t patience_;
  std::size_t wait_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

struct Example {
  Tensor input;   // H x W x 2
  Tensor target;  // H x W
};

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t max_epochs = 500;
  std::size_t patience = 10;
  std::uint64_t rng_seed = 0;
  double lr = 1e-3;

  void validate() const {
    require(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
    require(patience >= 1, "TrainConfig: patience must be >= 1");
    require(max_epochs >= 1, "TrainConfig: max_epochs must be >= 1");
    require(lr >= 0.0, "TrainConfig: lr must be >= 0");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<EpochRecord> history;
  bool stopped_early = false;
};

inline double evaluate_loss(const Model& model, std::span<const Example> set) {
  if (set.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& ex : set) acc += mse_loss(model_forward(model, ex.input, Mode::eval), ex.target);
  return acc / static_cast<double>(set.size());
}

/// Mini-batch ADAM with seeded shuffling and dropout masks. The returned model
/// holds the weights after the last completed epoch.
inline TrainResult train(Model model, std::span<const Example> train_set, std::span<const Example> val_set,
                         const TrainConfig& cfg,
                         const std::function<void(const EpochRecord&, const Model&)>& on_epoch = {}) {
  cfg.validate();
  if (train_set.empty() || val_set.empty()) throw DomainError("train: empty dataset");

  AdamState adam(model.parameters(), cfg.lr);
  EarlyStopping stopper(cfg.patience);
  TrainResult result;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 shuffle_rng(detail::mix(cfg.rng_seed));

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      Gradients sum;
      for (std::size_t i = start; i < stop; ++i) {
        const Example& ex = train_set[order[i]];
        const std::uint64_t seed = detail::mix(cfg.rng_seed ^ detail::mix(epoch * 0x100000001ULL + i));
        auto br = model_backward(model, ex.input, ex.target, Mode::train, seed);
        epoch_loss += br.loss;
        if (sum.empty()) {
          sum = std::move(br.grads);
        } else {
          for (std::size_t p = 0; p < sum.size(); ++p)
            for (std::size_t k = 0; k < sum[p].size(); ++k) sum[p][k] += br.grads[p][k];
        }
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      for (auto& g : sum)
        for (double& v : g.values()) v *= inv;
      adam_step(adam, model.parameters(), sum);
    }
    EpochRecord rec{epoch, epoch_loss / static_cast<double>(order.size()), evaluate_loss(model, val_set)};
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec, model);
    if (stopper.update(rec.val_loss)) {
      result.stopped_early = true;
      break;
    }
  }
  result.model = std::move(model);
  return result;
}

}  // namespace risopt::nn
