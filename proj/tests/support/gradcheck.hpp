#pragma once

#include <cstdint>
#include <random>
#include <set>
#include <vector>

#include "reference.hpp"
#include "smokenet/model.hpp"

namespace gradcheck {

struct Sample {
  std::size_t tensor = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct Report {
  std::vector<Sample> samples;
  std::size_t kinks_skipped = 0;  // perturbation flipped a ReLU
  std::size_t zeros_skipped = 0;  // both gradients exactly zero
  double worst = 0.0;
  std::set<std::size_t> tensors;  // parameter tensors with >= 1 sample
};

/// Compares loss_gradients() against central differences of the double
/// precision reference network. Draws `per_tensor` informative samples from
/// each parameter tensor: draws whose +-eps step changes the ReLU pattern,
/// or whose gradient is zero both ways, are redrawn up to `max_draws` times.
inline Report check_model(const smokenet::ProposedModel& model,
                          const smokenet::Tensor& image, std::size_t label,
                          std::size_t per_tensor, std::uint64_t seed,
                          double eps = 1e-3, std::size_t max_draws = 40) {
  const smokenet::Gradients grads = smokenet::loss_gradients(model, image, label);
  ref::Network net(model);
  std::vector<bool> base_pattern;
  net.loss(image, label, &base_pattern);

  Report report;
  std::mt19937_64 rng(seed);
  auto& params = net.params();
  for (std::size_t t = 0; t < params.size(); ++t) {
    std::uniform_int_distribution<std::size_t> pick(0, params[t].size() - 1);
    std::size_t taken = 0;
    for (std::size_t draw = 0; draw < max_draws && taken < per_tensor; ++draw) {
      const std::size_t i = pick(rng);
      const double saved = params[t][i];
      std::vector<bool> plus_pattern, minus_pattern;
      params[t][i] = saved + eps;
      const double up = net.loss(image, label, &plus_pattern);
      params[t][i] = saved - eps;
      const double down = net.loss(image, label, &minus_pattern);
      params[t][i] = saved;
      if (plus_pattern != base_pattern || minus_pattern != base_pattern) {
        ++report.kinks_skipped;
        continue;
      }
      Sample s;
      s.tensor = t;
      s.index = i;
      s.analytic = grads.parameters[t][i];
      s.numeric = (up - down) / (2.0 * eps);
      if (s.analytic == 0.0 && s.numeric == 0.0) {
        ++report.zeros_skipped;
        continue;
      }
      s.rel_error = ref::relative_error(s.analytic, s.numeric);
      report.worst = std::max(report.worst, s.rel_error);
      report.samples.push_back(s);
      report.tensors.insert(t);
      ++taken;
    }
  }
  return report;
}

}  // namespace gradcheck
