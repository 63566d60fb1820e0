#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dr2/image.hpp"
#include "dr2/rng.hpp"

// Minimal CNN toolkit used by the toy denoiser and the baseline enhancer.
// Convolutions run as im2col + GEMM in float32; everything is deterministic
// given the seed (no threading, fixed traversal order).
namespace dr2::nn {

using Mat = Eigen::MatrixXf;

// Feature map batch: C rows, B*H*W columns, column index (b*H + y)*W + x.
struct FMap {
  int B = 0, C = 0, H = 0, W = 0;
  Mat m;

  FMap() = default;
  FMap(int b, int c, int h, int w) : B(b), C(c), H(h), W(w) {
    m.setZero(c, static_cast<Eigen::Index>(b) * h * w);
  }
  Eigen::Index cols_per_sample() const {
    return static_cast<Eigen::Index>(H) * W;
  }
};

struct Param {
  Mat w;          // value
  Mat g;          // gradient
  Mat m_adam, v_adam;

  void init(int rows, int cols) {
    w.setZero(rows, cols);
    g.setZero(rows, cols);
    m_adam.setZero(rows, cols);
    v_adam.setZero(rows, cols);
  }
};

inline void fill_normal(Mat& m, float stddev, Rng& rng) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      m(i, j) = stddev * static_cast<float>(rng.normal());
}

class Adam {
 public:
  Adam(std::vector<Param*> params, double lr, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, t_);
    const double bc2 = 1.0 - std::pow(b2_, t_);
    const float alpha = static_cast<float>(lr_ * std::sqrt(bc2) / bc1);
    for (Param* p : params_) {
      p->m_adam = static_cast<float>(b1_) * p->m_adam +
                  static_cast<float>(1.0 - b1_) * p->g;
      p->v_adam = static_cast<float>(b2_) * p->v_adam.array().matrix() +
                  static_cast<float>(1.0 - b2_) *
                      (p->g.array() * p->g.array()).matrix();
      p->w.array() -= alpha * p->m_adam.array() /
                      (p->v_adam.array().sqrt() + static_cast<float>(eps_));
    }
  }

  void zero_grad() {
    for (Param* p : params_) p->g.setZero();
  }

 private:
  std::vector<Param*> params_;
  double lr_, b1_, b2_, eps_;
  std::int64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// im2col / col2im

inline void im2col(const FMap& in, int k, int stride, int pad, Mat& cols,
                   int& oh, int& ow) {
  oh = (in.H + 2 * pad - k) / stride + 1;
  ow = (in.W + 2 * pad - k) / stride + 1;
  cols.setZero(static_cast<Eigen::Index>(k) * k * in.C,
               static_cast<Eigen::Index>(in.B) * oh * ow);
  const Eigen::Index hw_in = in.cols_per_sample();
  for (int b = 0; b < in.B; ++b)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const Eigen::Index col =
            (static_cast<Eigen::Index>(b) * oh + oy) * ow + ox;
        for (int ky = 0; ky < k; ++ky) {
          const int y = oy * stride + ky - pad;
          if (y < 0 || y >= in.H) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int x = ox * stride + kx - pad;
            if (x < 0 || x >= in.W) continue;
            const Eigen::Index src =
                static_cast<Eigen::Index>(b) * hw_in + y * in.W + x;
            cols.block(static_cast<Eigen::Index>(ky * k + kx) * in.C, col,
                       in.C, 1) = in.m.col(src);
          }
        }
      }
}

inline void col2im(const Mat& dcols, int B, int C, int H, int W, int k,
                   int stride, int pad, FMap& din) {
  const int oh = (H + 2 * pad - k) / stride + 1;
  const int ow = (W + 2 * pad - k) / stride + 1;
  din = FMap(B, C, H, W);
  const Eigen::Index hw_in = static_cast<Eigen::Index>(H) * W;
  for (int b = 0; b < B; ++b)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const Eigen::Index col =
            (static_cast<Eigen::Index>(b) * oh + oy) * ow + ox;
        for (int ky = 0; ky < k; ++ky) {
          const int y = oy * stride + ky - pad;
          if (y < 0 || y >= H) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int x = ox * stride + kx - pad;
            if (x < 0 || x >= W) continue;
            const Eigen::Index dst =
                static_cast<Eigen::Index>(b) * hw_in + y * W + x;
            din.m.col(dst) +=
                dcols.block(static_cast<Eigen::Index>(ky * k + kx) * C, col,
                            C, 1);
          }
        }
      }
}

// ---------------------------------------------------------------------------
// Layers. Each forward produces a cache entry used by the matching backward.

struct Conv2d {
  int cin = 0, cout = 0, k = 3, stride = 1, pad = 1;
  Param weight;  // cout x (k*k*cin)
  Param bias;    // cout x 1

  struct Cache {
    Mat cols;
    int B, H, W, OH, OW;
  };

  void init(int in_c, int out_c, int kernel, int stride_, int pad_, Rng& rng,
            bool zero_init = false) {
    cin = in_c;
    cout = out_c;
    k = kernel;
    stride = stride_;
    pad = pad_;
    weight.init(cout, k * k * cin);
    bias.init(cout, 1);
    if (!zero_init) {
      const float stddev = std::sqrt(2.0f / static_cast<float>(k * k * cin));
      fill_normal(weight.w, stddev, rng);
    }
  }

  FMap forward(const FMap& in, Cache* cache) const {
    Mat cols;
    int oh, ow;
    im2col(in, k, stride, pad, cols, oh, ow);
    FMap out(in.B, cout, oh, ow);
    out.m.noalias() = weight.w * cols;
    out.m.colwise() += Eigen::VectorXf(bias.w.col(0));
    if (cache) {
      cache->cols = std::move(cols);
      cache->B = in.B;
      cache->H = in.H;
      cache->W = in.W;
      cache->OH = oh;
      cache->OW = ow;
    }
    return out;
  }

  FMap backward(const FMap& dout, const Cache& cache) {
    weight.g.noalias() += dout.m * cache.cols.transpose();
    bias.g.col(0) += dout.m.rowwise().sum();
    Mat dcols = weight.w.transpose() * dout.m;
    FMap din;
    col2im(dcols, cache.B, cin, cache.H, cache.W, k, stride, pad, din);
    return din;
  }

  void params(std::vector<Param*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

struct Linear {
  Param weight;  // out x in
  Param bias;    // out x 1

  struct Cache {
    Mat in;
  };

  void init(int in_dim, int out_dim, Rng& rng, bool zero_init = false) {
    weight.init(out_dim, in_dim);
    bias.init(out_dim, 1);
    if (!zero_init)
      fill_normal(weight.w, std::sqrt(2.0f / static_cast<float>(in_dim)), rng);
  }

  Mat forward(const Mat& in, Cache* cache) const {
    Mat out = weight.w * in;
    out.colwise() += Eigen::VectorXf(bias.w.col(0));
    if (cache) cache->in = in;
    return out;
  }

  Mat backward(const Mat& dout, const Cache& cache) {
    weight.g.noalias() += dout * cache.in.transpose();
    bias.g.col(0) += dout.rowwise().sum();
    return weight.w.transpose() * dout;
  }

  void params(std::vector<Param*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

struct GroupNorm {
  int channels = 0, groups = 8;
  float eps = 1e-5f;
  Param gamma;  // C x 1
  Param beta;   // C x 1

  struct Cache {
    FMap xhat;
    Mat inv_std;  // groups x B
  };

  void init(int c, int g) {
    channels = c;
    groups = g;
    if (c % g != 0) throw std::invalid_argument("GroupNorm: C % groups != 0");
    gamma.init(c, 1);
    gamma.w.setOnes();
    beta.init(c, 1);
  }

  FMap forward(const FMap& in, Cache* cache) const {
    const int gc = channels / groups;
    const Eigen::Index hw = in.cols_per_sample();
    FMap out = in;
    Mat inv_std(groups, in.B);
    FMap xhat = in;
    for (int b = 0; b < in.B; ++b)
      for (int g = 0; g < groups; ++g) {
        auto block = in.m.block(g * gc, b * hw, gc, hw);
        const float mean = block.mean();
        const float var = (block.array() - mean).square().mean();
        const float istd = 1.0f / std::sqrt(var + eps);
        inv_std(g, b) = istd;
        xhat.m.block(g * gc, b * hw, gc, hw) =
            ((block.array() - mean) * istd).matrix();
      }
    for (int c = 0; c < channels; ++c)
      out.m.row(c) = xhat.m.row(c) * gamma.w(c, 0);
    out.m.colwise() += Eigen::VectorXf(beta.w.col(0));
    if (cache) {
      cache->xhat = std::move(xhat);
      cache->inv_std = std::move(inv_std);
    }
    return out;
  }

  FMap backward(const FMap& dout, const Cache& cache) {
    const int gc = channels / groups;
    const Eigen::Index hw = dout.cols_per_sample();
    for (int c = 0; c < channels; ++c) {
      gamma.g(c, 0) +=
          (dout.m.row(c).array() * cache.xhat.m.row(c).array()).sum();
      beta.g(c, 0) += dout.m.row(c).sum();
    }
    FMap din = dout;
    for (int b = 0; b < dout.B; ++b)
      for (int g = 0; g < groups; ++g) {
        Mat dxhat = dout.m.block(g * gc, b * hw, gc, hw);
        for (int c = 0; c < gc; ++c)
          dxhat.row(c) *= gamma.w(g * gc + c, 0);
        auto xhat = cache.xhat.m.block(g * gc, b * hw, gc, hw);
        const float m = static_cast<float>(gc * hw);
        const float sum_d = dxhat.sum();
        const float sum_dx = (dxhat.array() * xhat.array()).sum();
        din.m.block(g * gc, b * hw, gc, hw) =
            (cache.inv_std(g, b) / m) *
            (m * dxhat.array() - sum_d - xhat.array() * sum_dx).matrix();
      }
    return din;
  }

  void params(std::vector<Param*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
};

struct SiLU {
  struct Cache {
    Mat in;
  };

  static Mat apply(const Mat& x) {
    return (x.array() / (1.0f + (-x.array()).exp())).matrix();
  }

  FMap forward(const FMap& in, Cache* cache) const {
    FMap out = in;
    out.m = apply(in.m);
    if (cache) cache->in = in.m;
    return out;
  }

  Mat forward_mat(const Mat& in, Cache* cache) const {
    if (cache) cache->in = in;
    return apply(in);
  }

  static Mat grad(const Mat& x, const Mat& dy) {
    Eigen::ArrayXXf sig = 1.0f / (1.0f + (-x.array()).exp());
    return (dy.array() * (sig * (1.0f + x.array() * (1.0f - sig)))).matrix();
  }

  FMap backward(const FMap& dout, const Cache& cache) const {
    FMap din = dout;
    din.m = grad(cache.in, dout.m);
    return din;
  }

  Mat backward_mat(const Mat& dout, const Cache& cache) const {
    return grad(cache.in, dout);
  }
};

// Nearest-neighbour 2x upsample.
inline FMap upsample2(const FMap& in) {
  FMap out(in.B, in.C, in.H * 2, in.W * 2);
  const Eigen::Index hw_in = in.cols_per_sample();
  const Eigen::Index hw_out = out.cols_per_sample();
  for (int b = 0; b < in.B; ++b)
    for (int y = 0; y < out.H; ++y)
      for (int x = 0; x < out.W; ++x)
        out.m.col(b * hw_out + static_cast<Eigen::Index>(y) * out.W + x) =
            in.m.col(b * hw_in + static_cast<Eigen::Index>(y / 2) * in.W +
                     x / 2);
  return out;
}

inline FMap upsample2_backward(const FMap& dout, int in_h, int in_w) {
  FMap din(dout.B, dout.C, in_h, in_w);
  const Eigen::Index hw_in = din.cols_per_sample();
  const Eigen::Index hw_out = dout.cols_per_sample();
  for (int b = 0; b < dout.B; ++b)
    for (int y = 0; y < dout.H; ++y)
      for (int x = 0; x < dout.W; ++x)
        din.m.col(b * hw_in + static_cast<Eigen::Index>(y / 2) * in_w +
                  x / 2) +=
            dout.m.col(b * hw_out + static_cast<Eigen::Index>(y) * dout.W + x);
  return din;
}

inline FMap concat_channels(const FMap& a, const FMap& b) {
  FMap out(a.B, a.C + b.C, a.H, a.W);
  out.m.topRows(a.C) = a.m;
  out.m.bottomRows(b.C) = b.m;
  return out;
}

inline FMap images_to_fmap(const std::vector<const ImageTensor*>& imgs) {
  const int h = imgs[0]->height, w = imgs[0]->width, c = imgs[0]->channels;
  FMap f(static_cast<int>(imgs.size()), c, h, w);
  for (std::size_t b = 0; b < imgs.size(); ++b)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int ch = 0; ch < c; ++ch)
          f.m(ch, (b * h + y) * w + x) =
              static_cast<float>(imgs[b]->at(y, x, ch));
  return f;
}

inline ImageTensor fmap_to_image(const FMap& f, int b) {
  ImageTensor img(f.H, f.W, f.C);
  const Eigen::Index hw = f.cols_per_sample();
  for (int y = 0; y < f.H; ++y)
    for (int x = 0; x < f.W; ++x)
      for (int ch = 0; ch < f.C; ++ch)
        img.at(y, x, ch) = static_cast<double>(
            f.m(ch, b * hw + static_cast<Eigen::Index>(y) * f.W + x));
  return img;
}

// Sinusoidal timestep embedding, one column per sample.
inline Mat time_embedding(const std::vector<int>& ts, int dim) {
  const int half = dim / 2;
  Mat emb(dim, static_cast<Eigen::Index>(ts.size()));
  for (std::size_t b = 0; b < ts.size(); ++b)
    for (int i = 0; i < half; ++i) {
      const double freq =
          std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
      const double angle = static_cast<double>(ts[b]) * freq;
      emb(i, b) = static_cast<float>(std::sin(angle));
      emb(half + i, b) = static_cast<float>(std::cos(angle));
    }
  return emb;
}

// ---------------------------------------------------------------------------
// Checkpoint serialization: raw float32 payload with a fixed parameter order.

inline void write_params(std::ofstream& out, const std::vector<Param*>& ps) {
  const std::uint32_t n = static_cast<std::uint32_t>(ps.size());
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  for (const Param* p : ps) {
    const std::uint32_t rows = static_cast<std::uint32_t>(p->w.rows());
    const std::uint32_t cols = static_cast<std::uint32_t>(p->w.cols());
    out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
    out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
    out.write(reinterpret_cast<const char*>(p->w.data()),
              static_cast<std::streamsize>(sizeof(float) * p->w.size()));
  }
}

inline void read_params(std::ifstream& in, const std::vector<Param*>& ps) {
  std::uint32_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (n != ps.size())
    throw std::runtime_error("checkpoint: parameter count mismatch");
  for (Param* p : ps) {
    std::uint32_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
    in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
    if (rows != p->w.rows() || cols != p->w.cols())
      throw std::runtime_error("checkpoint: parameter shape mismatch");
    in.read(reinterpret_cast<char*>(p->w.data()),
            static_cast<std::streamsize>(sizeof(float) * p->w.size()));
  }
  if (!in) throw std::runtime_error("checkpoint: truncated parameter payload");
}

}  // namespace dr2::nn
