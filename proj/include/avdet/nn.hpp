#pragma once
#include <memory>
#include <string>
#include <vector>

#include "avdet/rng.hpp"

namespace avdet {
namespace nn {

// Channel-major single-sample tensor (C, H, W).
struct Tensor3 {
  int c = 0, h = 0, w = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(int c_, int h_, int w_)
      : c(c_), h(h_), w(w_), data(static_cast<std::size_t>(c_) * h_ * w_, 0.0) {}

  double& at(int ci, int y, int x) {
    return data[(static_cast<std::size_t>(ci) * h + y) * w + x];
  }
  double at(int ci, int y, int x) const {
    return data[(static_cast<std::size_t>(ci) * h + y) * w + x];
  }
  std::size_t size() const { return data.size(); }
};

struct ParamRef {
  std::string name;
  std::vector<double>* value;
  std::vector<double>* grad;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor3 forward(const Tensor3& x) = 0;
  virtual Tensor3 backward(const Tensor3& grad_out) = 0;
  virtual void collect_params(const std::string& prefix, std::vector<ParamRef>& out) {}
};

class Conv2d : public Layer {
 public:
  // 'same'-style padding kh/2, kw/2; He-normal init from rng.
  Conv2d(int in_c, int out_c, int kh, int kw, int sh, int sw, Rng& rng);

  Tensor3 forward(const Tensor3& x) override;
  Tensor3 backward(const Tensor3& grad_out) override;
  void collect_params(const std::string& prefix, std::vector<ParamRef>& out) override;

  int in_c() const { return in_c_; }
  int out_c() const { return out_c_; }
  std::vector<double>& weights() { return w_; }
  std::vector<double>& bias() { return b_; }

 private:
  int in_c_, out_c_, kh_, kw_, sh_, sw_, ph_, pw_;
  std::vector<double> w_, b_, gw_, gb_;
  // cache
  std::vector<double> cols_;
  int in_h_ = 0, in_w_ = 0, out_h_ = 0, out_w_ = 0;
};

class Relu : public Layer {
 public:
  Tensor3 forward(const Tensor3& x) override;
  Tensor3 backward(const Tensor3& grad_out) override;

 private:
  std::vector<char> mask_;
  int c_ = 0, h_ = 0, w_ = 0;
};

class GlobalAvgPool : public Layer {
 public:
  Tensor3 forward(const Tensor3& x) override;
  Tensor3 backward(const Tensor3& grad_out) override;

 private:
  int c_ = 0, h_ = 0, w_ = 0;
};

class Dense : public Layer {
 public:
  Dense(int in_dim, int out_dim, Rng& rng);
  Tensor3 forward(const Tensor3& x) override;  // expects (in_dim, 1, 1)
  Tensor3 backward(const Tensor3& grad_out) override;
  void collect_params(const std::string& prefix, std::vector<ParamRef>& out) override;

 private:
  int in_dim_, out_dim_;
  std::vector<double> w_, b_, gw_, gb_;
  std::vector<double> input_;
};

class Sequential : public Layer {
 public:
  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
  Tensor3 forward(const Tensor3& x) override;
  Tensor3 backward(const Tensor3& grad_out) override;
  void collect_params(const std::string& prefix, std::vector<ParamRef>& out) override;
  std::size_t size() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Plain SGD with momentum over a fixed parameter list.
class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<ParamRef> params, double lr, double momentum);
  void zero_grad();
  void step();
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  const std::vector<ParamRef>& params() const { return params_; }

 private:
  std::vector<ParamRef> params_;
  std::vector<std::vector<double>> velocity_;
  double lr_, momentum_;
};

// Adam over a fixed parameter list; better suited than momentum SGD to the
// sparse detection objective (a handful of positive cells per grid).
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<ParamRef> params, double lr, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);
  void zero_grad();
  void step();
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  const std::vector<ParamRef>& params() const { return params_; }

 private:
  std::vector<ParamRef> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

void check_finite(const Tensor3& t, const std::string& where);

}  // namespace nn
}  // namespace avdet
