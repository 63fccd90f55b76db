#include <algorithm>
#include <cmath>
#include <cstring>

#include "prionvit/training.hpp"

namespace prionvit::training {

MetricsReport compute_metrics(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size()) {
    throw std::invalid_argument("compute_metrics: " + std::to_string(predictions.size()) + " predictions vs " +
                                std::to_string(targets.size()) + " targets");
  }
  if (predictions.empty()) throw std::invalid_argument("compute_metrics: empty input");
  const std::size_t n = predictions.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  MetricsReport r;
  r.count = n;
  double sse = 0.0, sae = 0.0, mean_t = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = predictions[i] - targets[i];
    sse += e * e;
    sae += std::abs(e);
    r.max_error = std::max(r.max_error, std::abs(e));
    mean_t += targets[i];
  }
  mean_t *= inv_n;
  double ss_tot = 0.0;
  for (double t : targets) ss_tot += (t - mean_t) * (t - mean_t);
  r.mse = sse * inv_n;
  r.mae = sae * inv_n;
  r.rmse = std::sqrt(r.mse);
  if (ss_tot > 0.0) r.r2 = 1.0 - sse / ss_tot;
  return r;
}

namespace {

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

bool same_report(const MetricsReport& a, const MetricsReport& b) {
  return same_bits(a.mse, b.mse) && same_bits(a.mae, b.mae) && same_bits(a.rmse, b.rmse) &&
         same_bits(a.max_error, b.max_error) && a.r2.has_value() == b.r2.has_value() &&
         (!a.r2 || same_bits(*a.r2, *b.r2)) && a.count == b.count;
}

}  // namespace

bool TrainHistory::same_trajectory(const TrainHistory& other) const {
  if (epochs.size() != other.epochs.size() || best_epoch != other.best_epoch) return false;
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    const EpochRecord& a = epochs[i];
    const EpochRecord& b = other.epochs[i];
    if (a.epoch != b.epoch || !same_bits(a.train_loss, b.train_loss) || !same_report(a.validation, b.validation)) {
      return false;
    }
  }
  return true;
}

}  // namespace prionvit::training
