#pragma once

// Central finite differences against the model's analytic backward pass.

#include "fuda/model.hpp"

#include <algorithm>
#include <functional>

namespace gradcheck {

using fuda::AdaptationModel;
using fuda::Vector;

struct Result {
  double relative_error = 0.0;
  double analytic_norm = 0.0;
};

/// `value` evaluates the loss at the model's current parameters; `analytic`
/// accumulates the gradient at the same point.
inline Result compare(AdaptationModel& model, const std::function<double(const AdaptationModel&)>& value,
                      const std::function<void(const AdaptationModel&, Vector&)>& analytic,
                      double step = 1e-6) {
  Vector g = Vector::Zero(model.parameter_count());
  analytic(model, g);
  Vector numeric(model.parameter_count());
  Vector& theta = model.parameters();
  for (fuda::Index i = 0; i < theta.size(); ++i) {
    const double saved = theta(i);
    theta(i) = saved + step;
    const double up = value(model);
    theta(i) = saved - step;
    const double down = value(model);
    theta(i) = saved;
    numeric(i) = (up - down) / (2.0 * step);
  }
  const double scale = std::max({g.norm(), numeric.norm(), 1e-12});
  return {(g - numeric).norm() / scale, g.norm()};
}

}  // namespace gradcheck
