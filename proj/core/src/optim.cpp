#include "fcdn/optim.hpp"

#include <cmath>

#include "fcdn/error.hpp"

namespace fcdn::nn {

template <class T>
Adam<T>::Adam(std::vector<Parameter<T>*> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  require(!params_.empty(), "adam: no parameters");
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto* p : params_) {
    m_.emplace_back(p->value.shape);
    v_.emplace_back(p->value.shape);
  }
}

template <class T>
bool Adam<T>::step() {
  for (const auto* p : params_)
    for (const T g : p->grad.data)
      if (!std::isfinite(static_cast<double>(g))) {
        ++skipped_;
        return false;
      }

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter<T>& p = *params_[i];
    for (std::int64_t j = 0; j < p.value.numel(); ++j) {
      const double g = p.grad.data[j];
      const double m = cfg_.beta1 * m_[i].data[j] + (1.0 - cfg_.beta1) * g;
      const double v = cfg_.beta2 * v_[i].data[j] + (1.0 - cfg_.beta2) * g * g;
      m_[i].data[j] = static_cast<T>(m);
      v_[i].data[j] = static_cast<T>(v);
      p.value.data[j] -=
          static_cast<T>(cfg_.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg_.eps));
    }
  }
  return true;
}

template class Adam<float>;
template class Adam<double>;

}  // namespace fcdn::nn
