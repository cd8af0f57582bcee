#pragma once

#include <cstddef>
#include <vector>

#include "ph/errors.hpp"
#include "ph/tensor.hpp"

namespace ph {

// Plain SGD over an explicit parameter list. Frozen tensors (requires_grad
// off) are rejected at registration, which is what keeps a frozen base out
// of every fine-tuning run by construction.
template <class S>
class SgdT {
 public:
  explicit SgdT(S lr) : lr_(lr) {
    if (!(lr > S(0))) throw ConfigError("learning rate must be positive");
  }

  void add_param(TensorT<S>& t) {
    if (!t.requires_grad) {
      throw FrozenParameterError("attempted to register a frozen parameter with the optimizer");
    }
    t.ensure_grad();
    params_.push_back(&t);
  }

  void zero_grad() {
    for (TensorT<S>* p : params_) p->zero_grad();
  }

  void step() {
    for (TensorT<S>* p : params_) {
      for (std::size_t i = 0; i < p->data.size(); ++i) p->data[i] -= lr_ * p->grad[i];
    }
  }

  S lr() const { return lr_; }
  void set_lr(S lr) { lr_ = lr; }

  std::size_t param_element_count() const {
    std::size_t n = 0;
    for (const TensorT<S>* p : params_) n += p->size();
    return n;
  }

 private:
  std::vector<TensorT<S>*> params_;
  S lr_;
};

using Sgd = SgdT<float>;

}  // namespace ph
