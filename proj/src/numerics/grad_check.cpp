#include "prionvit/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <string>

#include "prionvit/rng.hpp"

namespace prionvit {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

double central_difference(const std::function<double(double)>& f, double x, double h) {
  const double step = h * std::max(1.0, std::abs(x));
  return (f(x + step) - f(x - step)) / (2.0 * step);
}

GradCheckReport grad_check(const std::function<double()>& f, std::span<const GradCheckParam> params,
                           const GradCheckOptions& options) {
  const double base = f();
  const double again = f();
  if (std::memcmp(&base, &again, sizeof(double)) != 0) {
    throw NonDeterministicFunction("grad_check: two forward passes disagree (" + std::to_string(base) + " vs " +
                                   std::to_string(again) + ")");
  }

  GradCheckReport report;
  report.tol = options.tol;
  Rng rng = Rng::derive(options.seed, {0x6C7ULL});
  for (const GradCheckParam& p : params) {
    if (p.value->shape() != p.analytic->shape()) {
      throw ShapeError("grad_check: gradient shape " + shape_str(p.analytic->shape()) + " does not match parameter " +
                       p.name + " " + shape_str(p.value->shape()));
    }
    const std::size_t n = p.value->numel();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), 0);
    if (n > options.max_coords) {
      for (std::size_t i = 0; i < options.max_coords; ++i) {
        std::swap(coords[i], coords[i + rng.uniform_index(n - i)]);
      }
      coords.resize(options.max_coords);
      std::sort(coords.begin(), coords.end());
    }

    GradCheckEntry entry;
    entry.name = p.name;
    for (std::size_t idx : coords) {
      double& theta = (*p.value)[idx];
      const double saved = theta;
      const double analytic = (*p.analytic)[idx];
      double numeric = 0.0, err = INFINITY;
      double h = options.h;
      for (std::size_t attempt = 0; attempt <= options.refinements && err >= options.tol; ++attempt, h /= 10.0) {
        const double step = h * std::max(1.0, std::abs(saved));
        theta = saved + step;
        const double fp = f();
        theta = saved - step;
        const double fm = f();
        theta = saved;
        const double n = (fp - fm) / (2.0 * step);
        const double e = relative_error(analytic, n);
        if (e < err) {
          err = e;
          numeric = n;
        }
        if (attempt > 0 && err < options.tol) ++entry.refined;
      }
      ++entry.checked;
      if (err >= entry.max_rel_error) {
        entry.max_rel_error = err;
        entry.worst_index = idx;
        entry.analytic = analytic;
        entry.numeric = numeric;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  report.passed = report.max_rel_error < options.tol;
  return report;
}

}  // namespace prionvit
