#pragma once

#include <functional>

#include "rhm/core/tensor.hpp"

namespace rhm::core {

/// Compare reverse-mode gradients of `fn` (scalar-valued graph builder)
/// against central finite differences around `point`.
/// Returns max over coordinates of |analytic - central| / max(1e-8, |central|).
/// Non-finite fn values or gradients throw.
///
/// Runs on the double instantiation of the engine: the kernels under test are
/// the same templates training uses, but float rounding noise would swamp a
/// 1e-4 comparison through layered compositions.
double finite_difference_check(const std::function<TensorD(const TensorD&)>& fn,
                               const TensorD& point, double epsilon);

}  // namespace rhm::core
