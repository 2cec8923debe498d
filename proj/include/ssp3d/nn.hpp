#pragma once

#include <cmath>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "ssp3d/autodiff.hpp"
#include "ssp3d/errors.hpp"
#include "ssp3d/rng.hpp"
#include "ssp3d/tensor.hpp"

namespace ssp3d {

// Named parameter tree with a stable insertion order. Order is part of the
// determinism contract: initialization, optimizer steps and serialization all
// walk parameters in this order.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t) {
    if (index_.count(name)) throw ConfigError("ParamStore: duplicate parameter " + name);
    index_[name] = order_.size();
    order_.push_back(name);
    tensors_.push_back(std::move(t));
    return tensors_.back();
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  Tensor& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("ParamStore: unknown parameter " + name);
    return tensors_[it->second];
  }
  const Tensor& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("ParamStore: unknown parameter " + name);
    return tensors_[it->second];
  }

  const std::vector<std::string>& names() const { return order_; }
  std::size_t size() const { return order_.size(); }

  std::int64_t total_params() const {
    std::int64_t n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
  }

  bool congruent_with(const ParamStore& o) const {
    if (order_ != o.order_) return false;
    for (std::size_t i = 0; i < tensors_.size(); ++i)
      if (tensors_[i].shape != o.tensors_[i].shape) return false;
    return true;
  }

 private:
  std::vector<std::string> order_;
  std::vector<Tensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Parameters bound onto a tape as leaves (with gradients). Grads are read
// back by name after backward().
struct BoundParams {
  Tape* tape = nullptr;
  std::vector<std::string> names;
  std::unordered_map<std::string, Var> vars;

  Var v(const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) throw ConfigError("BoundParams: unknown parameter " + name);
    return it->second;
  }

  std::map<std::string, Tensor> grads() const {
    std::map<std::string, Tensor> g;
    for (const auto& n : names) {
      Tensor& gr = tape->grad(vars.at(n));
      if (gr.data.empty())
        g[n] = Tensor(tape->val(vars.at(n)).shape);
      else
        g[n] = gr;
    }
    return g;
  }
};

inline BoundParams bind(Tape& tape, const ParamStore& params) {
  BoundParams bp;
  bp.tape = &tape;
  for (const auto& name : params.names()) {
    bp.names.push_back(name);
    bp.vars[name] = tape.leaf(params.at(name), true);
  }
  return bp;
}

// ----- initializers -----

inline double fan_in_of(const Tensor& w) {
  // conv weights [Co, Ci, k...] or [Ci, Co, k...] for transposed; linear [in, out].
  if (w.shape.size() == 2) return w.shape[0];
  double f = w.shape[1];
  for (std::size_t i = 2; i < w.shape.size(); ++i) f *= w.shape[i];
  return f;
}

inline Tensor he_init(std::vector<int> shape, Rng& rng) {
  Tensor t(std::move(shape));
  const double sigma = std::sqrt(2.0 / fan_in_of(t));
  for (auto& x : t.data) x = rng.normal(0.0, sigma);
  return t;
}

// Adds conv / linear parameter pairs with canonical "<prefix>.w"/"<prefix>.b" names.
inline void add_conv2d(ParamStore& p, const std::string& prefix, int co, int ci, int k, Rng& rng) {
  p.add(prefix + ".w", he_init({co, ci, k, k}, rng));
  p.add(prefix + ".b", Tensor({co}));
}

inline void add_conv3d(ParamStore& p, const std::string& prefix, int co, int ci, int k, Rng& rng) {
  p.add(prefix + ".w", he_init({co, ci, k, k, k}, rng));
  p.add(prefix + ".b", Tensor({co}));
}

inline void add_convt3d(ParamStore& p, const std::string& prefix, int ci, int co, int k, Rng& rng) {
  p.add(prefix + ".w", he_init({ci, co, k, k, k}, rng));
  p.add(prefix + ".b", Tensor({co}));
}

inline void add_linear(ParamStore& p, const std::string& prefix, int in, int out, Rng& rng) {
  p.add(prefix + ".w", he_init({in, out}, rng));
  p.add(prefix + ".b", Tensor({out}));
}

inline Var linear(Tape& t, Var x, const BoundParams& bp, const std::string& prefix) {
  return t.add_rowvec(t.matmul(x, bp.v(prefix + ".w")), bp.v(prefix + ".b"));
}

}  // namespace ssp3d
