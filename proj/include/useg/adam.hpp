#pragma once

#include "useg/checkpoint.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

namespace useg {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    if (!(lr >= 0)) throw std::invalid_argument("AdamHyper: lr must be non-negative");
    if (!(beta1 >= 0 && beta1 < 1)) throw std::invalid_argument("AdamHyper: beta1 must be in [0,1)");
    if (!(beta2 >= 0 && beta2 < 1)) throw std::invalid_argument("AdamHyper: beta2 must be in [0,1)");
    if (!(eps > 0)) throw std::invalid_argument("AdamHyper: eps must be positive");
  }
};

/// One bias-corrected Adam update of a single parameter block at step t (t >= 1).
/// The update is subtracted, so the parameter moves against the gradient.
template <typename Param, typename Grad, typename Moment>
void adam_update(Eigen::MatrixBase<Param>& param, const Eigen::MatrixBase<Grad>& grad,
                 Eigen::MatrixBase<Moment>& first, Eigen::MatrixBase<Moment>& second,
                 const AdamHyper& hyper, std::int64_t t) {
  using Scalar = typename Param::Scalar;
  const auto b1 = static_cast<Scalar>(hyper.beta1), b2 = static_cast<Scalar>(hyper.beta2);
  first = b1 * first + (Scalar(1) - b1) * grad;
  second = b2 * second + (Scalar(1) - b2) * grad.cwiseAbs2();
  const Scalar correction1 = Scalar(1) - std::pow(b1, static_cast<Scalar>(t));
  const Scalar correction2 = Scalar(1) - std::pow(b2, static_cast<Scalar>(t));
  param -= (static_cast<Scalar>(hyper.lr) * (first / correction1).array() /
            ((second / correction2).array().sqrt() + static_cast<Scalar>(hyper.eps)))
               .matrix();
}

/// Applies one Adam step to every parameter that has a gradient; advances state.step.
inline void adam_step(std::map<std::string, Tensor<double>>& params,
                      const std::map<std::string, Tensor<double>>& grads, AdamState& state,
                      const AdamHyper& hyper) {
  ++state.step;
  for (const auto& [name, grad] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw ShapeError("adam_step: no parameter named " + name);
    Tensor<double>& param = it->second;
    if (param.dims() != grad.dims()) {
      throw ShapeError("adam_step: gradient dims " + shape_string(grad.dims()) +
                       " for parameter " + name + " " + shape_string(param.dims()));
    }
    auto& first = state.first_moment.try_emplace(name, param.dims()).first->second;
    auto& second = state.second_moment.try_emplace(name, param.dims()).first->second;
    if (first.dims() != param.dims() || second.dims() != param.dims()) {
      throw ShapeError("adam_step: moment dims mismatch for " + name);
    }
    adam_update(param.values(), grad.values(), first.values(), second.values(), hyper, state.step);
  }
}

}  // namespace useg
