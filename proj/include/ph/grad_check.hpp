#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "ph/errors.hpp"
#include "ph/tape.hpp"
#include "ph/tensor.hpp"

namespace ph {

// Compares the tape's analytic gradients against central finite differences
// for every element of every listed parameter. `build` must construct a
// scalar-valued graph on the given tape and be deterministic (dropout off);
// that is verified by running the forward pass twice.
//
// Returns the maximum relative error with denominator
// max(|analytic|, |numeric|, 1e-6).
template <class S, class BuildFn>
S grad_check(BuildFn&& build, const std::vector<TensorT<S>*>& params, S h) {
  auto eval = [&]() -> S {
    TapeT<S> tape;
    const auto root = build(tape);
    return tape.val(root).data[0];
  };

  const S v1 = eval();
  const S v2 = eval();
  if (v1 != v2) {
    throw CheckPreconditionError("grad_check requires a deterministic function; repeated forwards differ");
  }

  for (TensorT<S>* p : params) p->zero_grad();
  {
    TapeT<S> tape;
    const auto root = build(tape);
    tape.backward(root);
  }
  std::vector<std::vector<S>> analytic;
  analytic.reserve(params.size());
  for (TensorT<S>* p : params) {
    p->ensure_grad();
    analytic.push_back(p->grad);
  }

  S max_rel = S(0);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    TensorT<S>& p = *params[pi];
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      const S orig = p.data[i];
      p.data[i] = orig + h;
      const S f_plus = eval();
      p.data[i] = orig - h;
      const S f_minus = eval();
      p.data[i] = orig;
      const S numeric = (f_plus - f_minus) / (S(2) * h);
      const S a = analytic[pi][i];
      const S denom = std::max({std::abs(a), std::abs(numeric), static_cast<S>(1e-6)});
      max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
    }
  }
  return max_rel;
}

}  // namespace ph
