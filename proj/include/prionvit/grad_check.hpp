#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "prionvit/tensor.hpp"

namespace prionvit {

// One parameter tensor to check. `value` is perturbed in place and restored.
struct GradCheckParam {
  std::string name;
  Tensor* value;
  const Tensor* analytic;
};

struct GradCheckOptions {
  // Step is h * max(1, |theta|) per coordinate.
  double h = 1e-3;
  double tol = 1e-4;
  // Tensors larger than this are checked on a seeded uniform sample.
  std::size_t max_coords = 64;
  std::uint64_t seed = 0;
  // A coordinate over tolerance is retried with steps h/10, h/100, ... up to
  // this many times and its smallest error kept. A step that straddles a ReLU
  // kink gives a wrong difference quotient; a wrong gradient stays wrong at
  // every step.
  std::size_t refinements = 2;
};

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  // Coordinates that needed a smaller step.
  std::size_t refined = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  double tol = 0.0;
  bool passed = false;
};

class NonDeterministicFunction : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

double central_difference(const std::function<double(double)>& f, double x, double h);

// Compares analytic gradients against central differences of f. f must be a
// deterministic function of the parameter tensors; two unperturbed evaluations
// that disagree raise NonDeterministicFunction.
GradCheckReport grad_check(const std::function<double()>& f, std::span<const GradCheckParam> params,
                           const GradCheckOptions& options = {});

}  // namespace prionvit
