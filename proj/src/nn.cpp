#include "avdet/nn.hpp"

#include <Eigen/Dense>

#include <cmath>

#include "avdet/errors.hpp"

namespace avdet {
namespace nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void check_finite(const Tensor3& t, const std::string& where) {
  for (double v : t.data)
    require(std::isfinite(v), errc::numeric, "non-finite activation in " + where);
}

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(int in_c, int out_c, int kh, int kw, int sh, int sw, Rng& rng)
    : in_c_(in_c), out_c_(out_c), kh_(kh), kw_(kw), sh_(sh), sw_(sw), ph_(kh / 2), pw_(kw / 2) {
  const int fan_in = in_c * kh * kw;
  w_.resize(static_cast<std::size_t>(out_c) * fan_in);
  const double scale = std::sqrt(2.0 / fan_in);
  for (double& v : w_) v = rng.normal() * scale;
  b_.assign(out_c, 0.0);
  gw_.assign(w_.size(), 0.0);
  gb_.assign(b_.size(), 0.0);
}

Tensor3 Conv2d::forward(const Tensor3& x) {
  require(x.c == in_c_, errc::shape, "Conv2d: input channel mismatch");
  in_h_ = x.h;
  in_w_ = x.w;
  out_h_ = (x.h + 2 * ph_ - kh_) / sh_ + 1;
  out_w_ = (x.w + 2 * pw_ - kw_) / sw_ + 1;
  const int k = in_c_ * kh_ * kw_;
  const int n = out_h_ * out_w_;

  cols_.assign(static_cast<std::size_t>(k) * n, 0.0);
  for (int ci = 0; ci < in_c_; ++ci) {
    for (int ky = 0; ky < kh_; ++ky) {
      for (int kx = 0; kx < kw_; ++kx) {
        const int row = (ci * kh_ + ky) * kw_ + kx;
        double* dst = cols_.data() + static_cast<std::size_t>(row) * n;
        for (int oy = 0; oy < out_h_; ++oy) {
          const int iy = oy * sh_ - ph_ + ky;
          if (iy < 0 || iy >= x.h) continue;
          const double* src = &x.data[(static_cast<std::size_t>(ci) * x.h + iy) * x.w];
          for (int ox = 0; ox < out_w_; ++ox) {
            const int ix = ox * sw_ - pw_ + kx;
            if (ix >= 0 && ix < x.w) dst[oy * out_w_ + ox] = src[ix];
          }
        }
      }
    }
  }

  Tensor3 out(out_c_, out_h_, out_w_);
  MapMat out_m(out.data.data(), out_c_, n);
  ConstMapMat w_m(w_.data(), out_c_, k);
  ConstMapMat cols_m(cols_.data(), k, n);
  out_m.noalias() = w_m * cols_m;
  for (int oc = 0; oc < out_c_; ++oc) out_m.row(oc).array() += b_[oc];
  return out;
}

Tensor3 Conv2d::backward(const Tensor3& grad_out) {
  require(grad_out.c == out_c_ && grad_out.h == out_h_ && grad_out.w == out_w_, errc::shape,
          "Conv2d: grad shape mismatch");
  const int k = in_c_ * kh_ * kw_;
  const int n = out_h_ * out_w_;

  ConstMapMat g_m(grad_out.data.data(), out_c_, n);
  ConstMapMat cols_m(cols_.data(), k, n);
  MapMat gw_m(gw_.data(), out_c_, k);
  gw_m.noalias() += g_m * cols_m.transpose();
  for (int oc = 0; oc < out_c_; ++oc) gb_[oc] += g_m.row(oc).sum();

  RowMat gcols = ConstMapMat(w_.data(), out_c_, k).transpose() * g_m;

  Tensor3 grad_in(in_c_, in_h_, in_w_);
  for (int ci = 0; ci < in_c_; ++ci) {
    for (int ky = 0; ky < kh_; ++ky) {
      for (int kx = 0; kx < kw_; ++kx) {
        const int row = (ci * kh_ + ky) * kw_ + kx;
        const double* src = gcols.data() + static_cast<std::size_t>(row) * n;
        for (int oy = 0; oy < out_h_; ++oy) {
          const int iy = oy * sh_ - ph_ + ky;
          if (iy < 0 || iy >= in_h_) continue;
          double* dst = &grad_in.data[(static_cast<std::size_t>(ci) * in_h_ + iy) * in_w_];
          for (int ox = 0; ox < out_w_; ++ox) {
            const int ix = ox * sw_ - pw_ + kx;
            if (ix >= 0 && ix < in_w_) dst[ix] += src[oy * out_w_ + ox];
          }
        }
      }
    }
  }
  return grad_in;
}

void Conv2d::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", &w_, &gw_});
  out.push_back({prefix + ".bias", &b_, &gb_});
}

// ---------------------------------------------------------------------------
// Relu

Tensor3 Relu::forward(const Tensor3& x) {
  c_ = x.c;
  h_ = x.h;
  w_ = x.w;
  mask_.resize(x.size());
  Tensor3 out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask_[i] = x.data[i] > 0.0;
    if (!mask_[i]) out.data[i] = 0.0;
  }
  return out;
}

Tensor3 Relu::backward(const Tensor3& grad_out) {
  Tensor3 grad_in = grad_out;
  for (std::size_t i = 0; i < grad_in.size(); ++i)
    if (!mask_[i]) grad_in.data[i] = 0.0;
  return grad_in;
}

// ---------------------------------------------------------------------------
// GlobalAvgPool

Tensor3 GlobalAvgPool::forward(const Tensor3& x) {
  c_ = x.c;
  h_ = x.h;
  w_ = x.w;
  Tensor3 out(x.c, 1, 1);
  const int n = x.h * x.w;
  for (int ci = 0; ci < x.c; ++ci) {
    double acc = 0.0;
    const double* src = &x.data[static_cast<std::size_t>(ci) * n];
    for (int i = 0; i < n; ++i) acc += src[i];
    out.data[ci] = acc / n;
  }
  return out;
}

Tensor3 GlobalAvgPool::backward(const Tensor3& grad_out) {
  Tensor3 grad_in(c_, h_, w_);
  const int n = h_ * w_;
  for (int ci = 0; ci < c_; ++ci) {
    const double g = grad_out.data[ci] / n;
    double* dst = &grad_in.data[static_cast<std::size_t>(ci) * n];
    for (int i = 0; i < n; ++i) dst[i] = g;
  }
  return grad_in;
}

// ---------------------------------------------------------------------------
// Dense

Dense::Dense(int in_dim, int out_dim, Rng& rng) : in_dim_(in_dim), out_dim_(out_dim) {
  w_.resize(static_cast<std::size_t>(out_dim) * in_dim);
  const double scale = std::sqrt(2.0 / in_dim);
  for (double& v : w_) v = rng.normal() * scale;
  b_.assign(out_dim, 0.0);
  gw_.assign(w_.size(), 0.0);
  gb_.assign(b_.size(), 0.0);
}

Tensor3 Dense::forward(const Tensor3& x) {
  require(x.c == in_dim_ && x.h == 1 && x.w == 1, errc::shape, "Dense: expects (in_dim,1,1)");
  input_ = x.data;
  Tensor3 out(out_dim_, 1, 1);
  ConstMapMat w_m(w_.data(), out_dim_, in_dim_);
  Eigen::Map<const Eigen::VectorXd> x_v(x.data.data(), in_dim_);
  Eigen::Map<Eigen::VectorXd> out_v(out.data.data(), out_dim_);
  out_v.noalias() = w_m * x_v;
  for (int i = 0; i < out_dim_; ++i) out_v[i] += b_[i];
  return out;
}

Tensor3 Dense::backward(const Tensor3& grad_out) {
  require(grad_out.c == out_dim_, errc::shape, "Dense: grad shape mismatch");
  ConstMapMat w_m(w_.data(), out_dim_, in_dim_);
  Eigen::Map<const Eigen::VectorXd> g_v(grad_out.data.data(), out_dim_);
  Eigen::Map<const Eigen::VectorXd> x_v(input_.data(), in_dim_);
  MapMat gw_m(gw_.data(), out_dim_, in_dim_);
  gw_m.noalias() += g_v * x_v.transpose();
  for (int i = 0; i < out_dim_; ++i) gb_[i] += g_v[i];
  Tensor3 grad_in(in_dim_, 1, 1);
  Eigen::Map<Eigen::VectorXd> gi_v(grad_in.data.data(), in_dim_);
  gi_v.noalias() = w_m.transpose() * g_v;
  return grad_in;
}

void Dense::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", &w_, &gw_});
  out.push_back({prefix + ".bias", &b_, &gb_});
}

// ---------------------------------------------------------------------------
// Sequential

Tensor3 Sequential::forward(const Tensor3& x) {
  Tensor3 cur = x;
  for (auto& l : layers_) cur = l->forward(cur);
  return cur;
}

Tensor3 Sequential::backward(const Tensor3& grad_out) {
  Tensor3 cur = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
  return cur;
}

void Sequential::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
  for (std::size_t i = 0; i < layers_.size(); ++i)
    layers_[i]->collect_params(prefix + "." + std::to_string(i), out);
}

// ---------------------------------------------------------------------------
// SgdOptimizer

SgdOptimizer::SgdOptimizer(std::vector<ParamRef> params, double lr, double momentum)
    : params_(std::move(params)), lr_(lr), momentum_(momentum) {
  velocity_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i)
    velocity_[i].assign(params_[i].value->size(), 0.0);
}

void SgdOptimizer::zero_grad() {
  for (auto& p : params_) std::fill(p.grad->begin(), p.grad->end(), 0.0);
}

void SgdOptimizer::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& v = velocity_[i];
    auto& val = *params_[i].value;
    const auto& g = *params_[i].grad;
    for (std::size_t j = 0; j < val.size(); ++j) {
      v[j] = momentum_ * v[j] + g[j];
      val[j] -= lr_ * v[j];
    }
  }
}

// ---------------------------------------------------------------------------
// AdamOptimizer

AdamOptimizer::AdamOptimizer(std::vector<ParamRef> params, double lr, double beta1, double beta2,
                             double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(params_[i].value->size(), 0.0);
    v_[i].assign(params_[i].value->size(), 0.0);
  }
}

void AdamOptimizer::zero_grad() {
  for (auto& p : params_) std::fill(p.grad->begin(), p.grad->end(), 0.0);
}

void AdamOptimizer::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& m = m_[i];
    auto& v = v_[i];
    auto& val = *params_[i].value;
    const auto& g = *params_[i].grad;
    for (std::size_t j = 0; j < val.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      val[j] -= lr_ * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps_);
    }
  }
}

}  // namespace nn
}  // namespace avdet
