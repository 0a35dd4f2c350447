#pragma once

#include <functional>

#include "fairdemand/tensor.hpp"

namespace fairdemand::diff {

// Central-difference gradient (f(x + h e_k) - f(x - h e_k)) / 2h for every
// coordinate k. The reference every analytic gradient is checked against.
Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                            double h = 1e-5);

// max_k |a_k - b_k| / max(|a_k|, |b_k|, floor)
double max_relative_error(const Tensor& a, const Tensor& b, double floor = 1e-8);

}  // namespace fairdemand::diff
