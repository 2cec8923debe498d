#pragma once

#include <cmath>
#include <map>
#include <string>

#include "ssp3d/errors.hpp"
#include "ssp3d/nn.hpp"
#include "ssp3d/tensor.hpp"

namespace ssp3d {

// Adaptive-moment optimizer with standard defaults. Moment buffers mirror
// the parameter store layout and serialize with the checkpoint.
class Adam {
 public:
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit Adam(const ParamStore& params) {
    for (const auto& n : params.names()) {
      m_.add(n, Tensor(params.at(n).shape));
      v_.add(n, Tensor(params.at(n).shape));
    }
  }

  void step(ParamStore& params, const std::map<std::string, Tensor>& grads, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (const auto& n : params.names()) {
      auto it = grads.find(n);
      if (it == grads.end()) throw ConfigError("adam: missing gradient for " + n);
      Tensor& p = params.at(n);
      Tensor& m = m_.at(n);
      Tensor& v = v_.at(n);
      const Tensor& g = it->second;
      if (g.shape != p.shape) throw DataError("adam: gradient shape mismatch for " + n);
      for (std::size_t i = 0; i < p.data.size(); ++i) {
        m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * g.data[i];
        v.data[i] = beta2 * v.data[i] + (1.0 - beta2) * g.data[i] * g.data[i];
        const double mh = m.data[i] / bc1;
        const double vh = v.data[i] / bc2;
        p.data[i] -= lr * mh / (std::sqrt(vh) + eps);
      }
    }
  }

  const ParamStore& m() const { return m_; }
  const ParamStore& v() const { return v_; }
  std::int64_t t() const { return t_; }

  void restore(ParamStore m, ParamStore v, std::int64_t t) {
    m_ = std::move(m);
    v_ = std::move(v);
    t_ = t;
  }

 private:
  ParamStore m_, v_;
  std::int64_t t_ = 0;
};

// Cosine decay from lr_start to lr_end over total steps.
inline double cosine_lr(std::int64_t step, std::int64_t total, double lr_start, double lr_end) {
  if (total <= 0) return lr_end;
  if (step >= total) return lr_end;
  const double x = static_cast<double>(step) / static_cast<double>(total);
  return lr_end + (lr_start - lr_end) * 0.5 * (1.0 + std::cos(M_PI * x));
}

}  // namespace ssp3d
