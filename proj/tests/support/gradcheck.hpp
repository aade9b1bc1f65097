// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference gradient oracle, independent of the tape machinery it
// checks: only forward evaluations are used on the numeric side.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "e3/tensor.hpp"

namespace e3::testing {

struct GradCheckReport {
  double max_rel_err = 0.0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::size_t checked = 0;
  // Coordinates where halving the step changed the estimate materially: the
  // loss is locally non-smooth there (a ReLU kink under the perturbation) and
  // a central difference does not estimate the derivative autodiff defines.
  std::size_t skipped_nonsmooth = 0;

  double skipped_fraction() const {
    const std::size_t total = checked + skipped_nonsmooth;
    return total == 0 ? 0.0
                      : static_cast<double>(skipped_nonsmooth) /
                            static_cast<double>(total);
  }
};

// Central finite differences per coordinate, with a step-halving consistency
// test to detect kink crossings. The relative error uses a small-magnitude
// floor so near-zero gradients are held to an absolute tolerance.
inline GradCheckReport gradcheck(const std::function<Tensor()>& loss_fn,
                                 std::vector<Tensor> params,
                                 float eps = 2e-2f, double floor = 0.25) {
  GradCheckReport report;

  std::vector<std::vector<float>> analytic;
  {
    Tape tape;
    Tensor loss = loss_fn();
    for (Tensor& p : params) {
      p.ensure_grad();
      p.zero_grad();
    }
    tape.backward(loss);
    for (Tensor& p : params) {
      analytic.emplace_back(p.grad(), p.grad() + p.size());
    }
  }

  auto consistent = [](double a, double b) {
    return std::fabs(a - b) <=
           std::max(5e-4, 2e-2 * std::max(std::fabs(a), std::fabs(b)));
  };

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    for (std::int64_t i = 0; i < p.size(); ++i) {
      const float x = p.data()[i];
      auto central = [&](float h) {
        p.data()[i] = x + h;
        const double f_plus = static_cast<double>(loss_fn().item());
        p.data()[i] = x - h;
        const double f_minus = static_cast<double>(loss_fn().item());
        p.data()[i] = x;
        return (f_plus - f_minus) / (2.0 * static_cast<double>(h));
      };
      const float h = std::max(eps, eps * std::fabs(x));
      double coarse = central(h);
      double fine = central(h / 2);
      if (!consistent(coarse, fine)) {
        coarse = fine;
        fine = central(h / 4);
        if (!consistent(coarse, fine)) {
          ++report.skipped_nonsmooth;
          continue;
        }
      }
      const double numeric = fine;
      const double a = static_cast<double>(
          analytic[pi][static_cast<std::size_t>(i)]);
      const double denom = std::max({std::fabs(a), std::fabs(numeric), floor});
      const double rel = std::fabs(a - numeric) / denom;
      ++report.checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.analytic_at_worst = a;
        report.numeric_at_worst = numeric;
      }
    }
  }
  return report;
}

}  // namespace e3::testing
