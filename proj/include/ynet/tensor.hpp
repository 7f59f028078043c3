#pragma once

// Dense n-d tensors with reverse-mode autodiff, covering exactly the ops
// the separation network needs. Row-major storage, no views; concat/slice
// copy. Templated on the scalar so gradient checks can run in double while
// training runs in float.

#include <algorithm>
#ifdef YNET_PROF
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <map>
#endif
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "ynet/errors.hpp"

namespace ynet {

enum class Mode { Train, Eval };

namespace detail {

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

inline int64_t shape_numel(const std::vector<int>& s) {
  int64_t n = 1;
  for (int d : s) {
    if (d <= 0) throw ConfigError("tensor extent must be positive, got shape " + shape_str(s));
    n *= d;
  }
  return n;
}

}  // namespace detail

template <typename S>
struct TensorNode {
  std::vector<int> shape;
  std::vector<S> value;
  std::vector<S> grad;  // allocated lazily; same length as value when present
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;  // adds d(loss)/d(parent) into parents

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), S(0));
  }
};

template <typename S>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape, bool requires_grad = false)
      : node_(std::make_shared<TensorNode<S>>()) {
    node_->shape = std::move(shape);
    node_->value.assign(static_cast<size_t>(detail::shape_numel(node_->shape)), S(0));
    node_->requires_grad = requires_grad;
  }

  Tensor(std::vector<int> shape, std::vector<S> values, bool requires_grad = false)
      : node_(std::make_shared<TensorNode<S>>()) {
    node_->shape = std::move(shape);
    if (static_cast<int64_t>(values.size()) != detail::shape_numel(node_->shape))
      throw ConfigError("value count " + std::to_string(values.size()) +
                        " does not match shape " + detail::shape_str(node_->shape));
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor scalar(S v) { return Tensor({1}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int64_t size() const { return static_cast<int64_t>(node_->value.size()); }

  S* data() { return node_->value.data(); }
  const S* data() const { return node_->value.data(); }
  std::vector<S>& values() { return node_->value; }
  const std::vector<S>& values() const { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::vector<S>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  const std::vector<S>& grad() const {
    if (node_->grad.empty()) throw UsageError("gradient not populated");
    return node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }

  S item() const {
    if (size() != 1) throw UsageError("item() on non-scalar tensor " + detail::shape_str(shape()));
    return node_->value[0];
  }

  bool is_leaf() const { return !node_->backprop; }

  std::shared_ptr<TensorNode<S>> node() const { return node_; }

  // Graph-building constructor used by the ops below.
  static Tensor from_op(std::vector<int> shape, std::vector<S> values,
                        std::vector<Tensor> inputs,
                        std::function<void(TensorNode<S>&)> backprop) {
    bool any_grad = false;
    for (const auto& t : inputs) any_grad = any_grad || t.requires_grad();
    Tensor out(std::move(shape), std::move(values));
    if (any_grad) {
      out.node_->requires_grad = true;
      for (auto& t : inputs) out.node_->parents.push_back(t.node_);
      out.node_->backprop = std::move(backprop);
    }
    return out;
  }

 private:
  std::shared_ptr<TensorNode<S>> node_;
};

// ---------------------------------------------------------------------------
// Inner kernels: plain row-major GEMM variants. C[MxN] += A[MxK] * B[KxN].
// ---------------------------------------------------------------------------

namespace detail {

// Column-tile width for the three accumulating matmuls below. The conv
// matmuls have small m/k but an enormous n (one column per output pixel),
// so the win is streaming the big [k x n] / [m x n] operands exactly once
// while a [rows x kGemmTile] working set stays cache-resident.
constexpr int kGemmTile = 1024;

template <typename S>
void gemm_acc(const S* a, const S* b, S* c, int m, int k, int n) {
  for (int j0 = 0; j0 < n; j0 += kGemmTile) {
    const int t = std::min(kGemmTile, n - j0);
    for (int p = 0; p < k; ++p) {
      const S* __restrict btile = b + static_cast<int64_t>(p) * n + j0;
      for (int i = 0; i < m; ++i) {
        const S av = a[static_cast<int64_t>(i) * k + p];
        if (av == S(0)) continue;
        S* __restrict ctile = c + static_cast<int64_t>(i) * n + j0;
        for (int j = 0; j < t; ++j) ctile[j] += av * btile[j];
      }
    }
  }
}

// C[MxK] += A[MxN] * B^T where B is [KxN].
template <typename S>
void gemm_bt_acc(const S* a, const S* b, S* c, int m, int n, int k) {
  // Dot-product form over a huge shared axis. Column tiles keep both
  // operands streamed exactly once; within a tile, eight independent
  // accumulator lanes per dot let the adds vectorize without requiring FP
  // reassociation from the compiler.
  constexpr int kLanes = 8;
  for (int j0 = 0; j0 < n; j0 += kGemmTile) {
    const int t = std::min(kGemmTile, n - j0);
    // p outer / i inner: B is streamed exactly once and the smaller A tile
    // set (m rows) is what gets revisited, staying cache-resident.
    for (int p = 0; p < k; ++p) {
      const S* __restrict btile = b + static_cast<int64_t>(p) * n + j0;
      for (int i = 0; i < m; ++i) {
        const S* __restrict atile = a + static_cast<int64_t>(i) * n + j0;
        S lanes[kLanes] = {};
        int j = 0;
        for (; j + kLanes <= t; j += kLanes)
          for (int l = 0; l < kLanes; ++l) lanes[l] += atile[j + l] * btile[j + l];
        S acc = S(0);
        for (int l = 0; l < kLanes; ++l) acc += lanes[l];
        for (; j < t; ++j) acc += atile[j] * btile[j];
        c[static_cast<int64_t>(i) * k + p] += acc;
      }
    }
  }
}

// C[KxN] += A^T * B where A is [MxK], B is [MxN].
template <typename S>
void gemm_at_acc(const S* a, const S* b, S* c, int m, int k, int n) {
  // Axpy form with the same column tiling: B is streamed once and the k
  // destination tiles of C stay cache-resident across the i sweep.
  for (int j0 = 0; j0 < n; j0 += kGemmTile) {
    const int t = std::min(kGemmTile, n - j0);
    for (int i = 0; i < m; ++i) {
      const S* __restrict btile = b + static_cast<int64_t>(i) * n + j0;
      const S* arow = a + static_cast<int64_t>(i) * k;
      for (int p = 0; p < k; ++p) {
        const S av = arow[p];
        if (av == S(0)) continue;
        S* __restrict ctile = c + static_cast<int64_t>(p) * n + j0;
        for (int j = 0; j < t; ++j) ctile[j] += av * btile[j];
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv1d
// ---------------------------------------------------------------------------

// input [C_in x L], kernels [C_out x C_in x K], bias [C_out]. Zero padding.
template <typename S>
Tensor<S> conv1d(const Tensor<S>& input, const Tensor<S>& kernels, const Tensor<S>& bias,
                 int stride, int dilation, int pad_left, int pad_right) {
  if (input.rank() != 2 || kernels.rank() != 3 || bias.rank() != 1)
    throw ConfigError("conv1d expects input [C,L], kernels [O,C,K], bias [O]");
  const int cin = input.dim(0), length = input.dim(1);
  const int cout = kernels.dim(0), kc = kernels.dim(1), klen = kernels.dim(2);
  if (kc != cin)
    throw ConfigError("conv1d channel mismatch: input has " + std::to_string(cin) +
                      ", kernels expect " + std::to_string(kc));
  if (bias.dim(0) != cout) throw ConfigError("conv1d bias size mismatch");
  if (stride < 1 || dilation < 1 || pad_left < 0 || pad_right < 0)
    throw ConfigError("conv1d: stride/dilation must be >= 1, padding >= 0");
  const int span = (klen - 1) * dilation + 1;
  const int padded = length + pad_left + pad_right;
  const int frames = (padded - span) / stride + 1;
  if (padded < span || frames <= 0)
    throw ConfigError("conv1d produces no frames: length " + std::to_string(length) +
                      ", span " + std::to_string(span));

  // im2col: cols [cin*klen x frames]
  const int64_t krows = static_cast<int64_t>(cin) * klen;
  std::vector<S> cols(static_cast<size_t>(krows * frames), S(0));
  const S* in = input.data();
  for (int c = 0; c < cin; ++c) {
    for (int j = 0; j < klen; ++j) {
      S* crow = cols.data() + (static_cast<int64_t>(c) * klen + j) * frames;
      for (int t = 0; t < frames; ++t) {
        const int src = t * stride + j * dilation - pad_left;
        if (src >= 0 && src < length) crow[t] = in[static_cast<int64_t>(c) * length + src];
      }
    }
  }

  std::vector<S> out(static_cast<size_t>(cout) * frames);
  const S* bv = bias.data();
  for (int o = 0; o < cout; ++o)
    std::fill_n(out.begin() + static_cast<int64_t>(o) * frames, frames, bv[o]);
  detail::gemm_acc(kernels.data(), cols.data(), out.data(), cout, static_cast<int>(krows), frames);

  auto cols_sp = std::make_shared<std::vector<S>>(std::move(cols));
  Tensor<S> in_t = input, w_t = kernels, b_t = bias;
  return Tensor<S>::from_op(
      {cout, frames}, std::move(out), {input, kernels, bias},
      [=](TensorNode<S>& node) {
        const S* go = node.grad.data();
        if (w_t.requires_grad()) {
          w_t.node()->ensure_grad();
          detail::gemm_bt_acc(go, cols_sp->data(), w_t.node()->grad.data(), cout, frames,
                              static_cast<int>(krows));
        }
        if (b_t.requires_grad()) {
          b_t.node()->ensure_grad();
          S* gb = b_t.node()->grad.data();
          for (int o = 0; o < cout; ++o) {
            S acc = S(0);
            const S* row = go + static_cast<int64_t>(o) * frames;
            for (int t = 0; t < frames; ++t) acc += row[t];
            gb[o] += acc;
          }
        }
        if (in_t.requires_grad()) {
          std::vector<S> gcols(static_cast<size_t>(krows) * frames, S(0));
          detail::gemm_at_acc(w_t.data(), go, gcols.data(), cout, static_cast<int>(krows), frames);
          in_t.node()->ensure_grad();
          S* gi = in_t.node()->grad.data();
          for (int c = 0; c < cin; ++c)
            for (int j = 0; j < klen; ++j) {
              const S* crow = gcols.data() + (static_cast<int64_t>(c) * klen + j) * frames;
              for (int t = 0; t < frames; ++t) {
                const int src = t * stride + j * dilation - pad_left;
                if (src >= 0 && src < length) gi[static_cast<int64_t>(c) * length + src] += crow[t];
              }
            }
        }
      });
}

// ---------------------------------------------------------------------------
// conv2d ("same" padding, odd square kernel, cross-correlation)
// ---------------------------------------------------------------------------

#ifdef YNET_PROF
namespace detail {
inline std::map<std::string, double>& prof_table() {
  static std::map<std::string, double> t;
  static int reg = std::atexit([] {
    for (const auto& [k, v] : prof_table()) std::fprintf(stderr, "PROF %-40s %8.2f s\n", k.c_str(), v);
  });
  (void)reg;
  return t;
}
struct ProfScope {
  std::string key;
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  ~ProfScope() {
    prof_table()[key] += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};
}  // namespace detail
#define YNET_PROF_SCOPE(k) detail::ProfScope prof_scope_{k}
#else
#define YNET_PROF_SCOPE(k)
#endif

// input [C_in x H x W] or [N x C_in x H x W]; kernels [C_out x C_in x k x k].
template <typename S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& kernels, const Tensor<S>& bias,
                 int dilation = 1) {
  if (kernels.rank() != 4) throw ConfigError("conv2d kernels must be rank 4");
  const bool batched = input.rank() == 4;
  if (!batched && input.rank() != 3) throw ConfigError("conv2d input must be rank 3 or 4");
  const int n = batched ? input.dim(0) : 1;
  const int cin = input.dim(batched ? 1 : 0);
  const int h = input.dim(batched ? 2 : 1);
  const int w = input.dim(batched ? 3 : 2);
  const int cout = kernels.dim(0), kc = kernels.dim(1), kh = kernels.dim(2), kw = kernels.dim(3);
  if (kc != cin)
    throw ConfigError("conv2d channel mismatch: input has " + std::to_string(cin) +
                      ", kernels expect " + std::to_string(kc));
  if (kh != kw || kh % 2 == 0) throw ConfigError("conv2d requires an odd square kernel");
  if (bias.rank() != 1 || bias.dim(0) != cout) throw ConfigError("conv2d bias size mismatch");
  if (dilation < 1) throw ConfigError("conv2d dilation must be >= 1");
  const int pad = dilation * (kh - 1) / 2;

  const int64_t hw = static_cast<int64_t>(h) * w;
  // Two execution strategies:
  //  - Wide feature maps use direct row-tiled convolution with a fused
  //    three-tap row kernel: input/output rows are streamed once per tile
  //    and stay cache-resident across the channel loops. (im2col would
  //    materialize and stream a k*k-times-larger matrix — prohibitive on a
  //    bandwidth-limited machine.)
  //  - Narrow maps (deep layers: many channels, rows of 4..16 columns) are
  //    dominated by per-row loop overhead in the direct form, so they go
  //    through im2col + tiled gemm, where the [cin*k*k x h*w] matrix is
  //    small enough to live in cache.
  const bool fused3 = kh == 3 && w >= 32 && 2 * dilation < w;
  const bool use_gemm = !fused3 && kh != 1;
  const int64_t krows = static_cast<int64_t>(cin) * kh * kw;
  const int tile_rows = static_cast<int>(std::clamp<int64_t>(
      (256 * 1024) / (static_cast<int64_t>(2 * cin + cout) * w * static_cast<int>(sizeof(S))),
      int64_t{4}, static_cast<int64_t>(h)));
  auto im2col = [=](const S* img, S* cols) {
    for (int c = 0; c < cin; ++c)
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx) {
          S* crow = cols + (((static_cast<int64_t>(c) * kh) + ky) * kw + kx) * hw;
          const int dy = ky * dilation - pad, dx = kx * dilation - pad;
          const int x0 = std::max(0, -dx), x1 = std::max(x0, std::min(w, w - dx));
          for (int y = 0; y < h; ++y) {
            const int sy = y + dy;
            S* dst = crow + static_cast<int64_t>(y) * w;
            if (sy < 0 || sy >= h) {
              std::fill_n(dst, w, S(0));
              continue;
            }
            const S* srow = img + (static_cast<int64_t>(c) * h + sy) * w;
            if (x0 > 0) std::fill_n(dst, x0, S(0));
            for (int x = x0; x < x1; ++x) dst[x] = srow[x + dx];
            if (x1 < w) std::fill_n(dst + x1, w - x1, S(0));
          }
        }
  };

#ifdef YNET_PROF
  char prof_key[96];
  std::snprintf(prof_key, sizeof prof_key, "conv2d n%d %dx%d->%d %dx%d d%d", n, cin, kh, cout, h, w,
                dilation);
  std::string prof_fwd = std::string(prof_key) + " fwd";
  std::string prof_bwd = std::string(prof_key) + " bwd";
#endif
  std::vector<S> out(static_cast<size_t>(n) * cout * hw);
  {
    YNET_PROF_SCOPE(prof_fwd);
    const S* bv = bias.data();
    std::vector<S> cols(use_gemm ? static_cast<size_t>(krows) * hw : 0);
    for (int b = 0; b < n; ++b) {
      const S* ibase = input.data() + static_cast<int64_t>(b) * cin * hw;
      S* obase = out.data() + static_cast<int64_t>(b) * cout * hw;
      for (int o = 0; o < cout; ++o) std::fill_n(obase + static_cast<int64_t>(o) * hw, hw, bv[o]);
      if (use_gemm) {
        im2col(ibase, cols.data());
        detail::gemm_acc(kernels.data(), cols.data(), obase, cout, static_cast<int>(krows),
                         static_cast<int>(hw));
        continue;
      }
      for (int y0 = 0; y0 < h; y0 += tile_rows) {
        const int y1 = std::min(h, y0 + tile_rows);
        for (int o = 0; o < cout; ++o)
          for (int c = 0; c < cin; ++c) {
            const S* wker = kernels.data() + (static_cast<int64_t>(o) * cin + c) * kh * kw;
            for (int ky = 0; ky < kh; ++ky) {
              const int dy = ky * dilation - pad;
              const int ya = std::max(y0, -dy), yb = std::min(y1, h - dy);
              if (fused3) {
                const S w0 = wker[ky * 3], w1 = wker[ky * 3 + 1], w2 = wker[ky * 3 + 2];
                const int d = dilation;
                for (int y = ya; y < yb; ++y) {
                  const S* __restrict irow = ibase + (static_cast<int64_t>(c) * h + y + dy) * w;
                  S* __restrict orow = obase + (static_cast<int64_t>(o) * h + y) * w;
                  for (int x = 0; x < d; ++x) orow[x] += w1 * irow[x] + w2 * irow[x + d];
                  for (int x = d; x < w - d; ++x)
                    orow[x] += w0 * irow[x - d] + w1 * irow[x] + w2 * irow[x + d];
                  for (int x = w - d; x < w; ++x) orow[x] += w0 * irow[x - d] + w1 * irow[x];
                }
                continue;
              }
              for (int y = ya; y < yb; ++y) {
                const S* __restrict irow = ibase + (static_cast<int64_t>(c) * h + y + dy) * w;
                S* __restrict orow = obase + (static_cast<int64_t>(o) * h + y) * w;
                for (int kx = 0; kx < kw; ++kx) {
                  const S wv = wker[ky * kw + kx];
                  const int dx = kx * dilation - pad;
                  const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                  for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x + dx];
                }
              }
            }
          }
      }
    }
  }

  std::vector<int> oshape = batched ? std::vector<int>{n, cout, h, w} : std::vector<int>{cout, h, w};
  Tensor<S> in_t = input, w_t = kernels, b_t = bias;
  return Tensor<S>::from_op(
      std::move(oshape), std::move(out), {input, kernels, bias},
      [=](TensorNode<S>& node) {
        YNET_PROF_SCOPE(prof_bwd);
        const S* go = node.grad.data();
        const bool want_w = w_t.requires_grad();
        const bool want_i = in_t.requires_grad();
        if (want_w) w_t.node()->ensure_grad();
        if (b_t.requires_grad()) b_t.node()->ensure_grad();
        if (want_i) in_t.node()->ensure_grad();
        S* gw = want_w ? w_t.node()->grad.data() : nullptr;
        std::vector<S> cols, gcols;
        if (use_gemm && (want_w || want_i)) {
          cols.resize(static_cast<size_t>(krows) * hw);
          if (want_i) gcols.resize(static_cast<size_t>(krows) * hw);
        }
        for (int b = 0; b < n; ++b) {
          const S* gob = go + static_cast<int64_t>(b) * cout * hw;
          const S* ibase = in_t.data() + static_cast<int64_t>(b) * cin * hw;
          S* gi = want_i ? in_t.node()->grad.data() + static_cast<int64_t>(b) * cin * hw : nullptr;
          if (!want_w && !want_i) break;
          if (use_gemm) {
            if (want_w) {
              im2col(ibase, cols.data());
              detail::gemm_bt_acc(gob, cols.data(), gw, cout, static_cast<int>(hw),
                                  static_cast<int>(krows));
            }
            if (want_i) {
              std::fill(gcols.begin(), gcols.end(), S(0));
              detail::gemm_at_acc(w_t.data(), gob, gcols.data(), cout, static_cast<int>(krows),
                                  static_cast<int>(hw));
              for (int c = 0; c < cin; ++c)
                for (int ky = 0; ky < kh; ++ky)
                  for (int kx = 0; kx < kw; ++kx) {
                    const S* crow =
                        gcols.data() + (((static_cast<int64_t>(c) * kh) + ky) * kw + kx) * hw;
                    const int dy = ky * dilation - pad, dx = kx * dilation - pad;
                    const int x0 = std::max(0, -dx), x1 = std::max(x0, std::min(w, w - dx));
                    for (int y = 0; y < h; ++y) {
                      const int sy = y + dy;
                      if (sy < 0 || sy >= h) continue;
                      S* drow = gi + (static_cast<int64_t>(c) * h + sy) * w;
                      const S* srow = crow + static_cast<int64_t>(y) * w;
                      for (int x = x0; x < x1; ++x) drow[x + dx] += srow[x];
                    }
                  }
            }
            continue;
          }
          // One fused pass: for each (o, c) pair and kernel row, the same
          // tile of output-gradient rows feeds both the weight-gradient dots
          // and the input-gradient update while it is cache-hot. The
          // input-gradient row is itself a three-tap correlation of the
          // output gradient with the reflected kernel row.
          for (int y0 = 0; y0 < h; y0 += tile_rows) {
            const int y1 = std::min(h, y0 + tile_rows);
            for (int o = 0; o < cout; ++o)
              for (int c = 0; c < cin; ++c) {
                const S* wker = w_t.data() + (static_cast<int64_t>(o) * cin + c) * kh * kw;
                S* gwk = gw ? gw + (static_cast<int64_t>(o) * cin + c) * kh * kw : nullptr;
                for (int ky = 0; ky < kh; ++ky) {
                  const int dy = ky * dilation - pad;
                  const int ya = std::max(y0, -dy), yb = std::min(y1, h - dy);
                  if (fused3) {
                    const S w0 = wker[ky * 3], w1 = wker[ky * 3 + 1], w2 = wker[ky * 3 + 2];
                    const int d = dilation;
                    S a0 = S(0), a1 = S(0), a2 = S(0);
                    for (int y = ya; y < yb; ++y) {
                      const S* __restrict gorow = gob + (static_cast<int64_t>(o) * h + y) * w;
                      const int64_t srow = (static_cast<int64_t>(c) * h + y + dy) * w;
                      if (want_i) {
                        S* __restrict girow = gi + srow;
                        for (int t = 0; t < d; ++t) girow[t] += w0 * gorow[t + d] + w1 * gorow[t];
                        for (int t = d; t < w - d; ++t)
                          girow[t] += w0 * gorow[t + d] + w1 * gorow[t] + w2 * gorow[t - d];
                        for (int t = w - d; t < w; ++t)
                          girow[t] += w1 * gorow[t] + w2 * gorow[t - d];
                      }
                      if (gwk) {
                        const S* __restrict irow = ibase + srow;
                        for (int x = 0; x < d; ++x) {
                          a1 += gorow[x] * irow[x];
                          a2 += gorow[x] * irow[x + d];
                        }
                        for (int x = d; x < w - d; ++x) {
                          a0 += gorow[x] * irow[x - d];
                          a1 += gorow[x] * irow[x];
                          a2 += gorow[x] * irow[x + d];
                        }
                        for (int x = w - d; x < w; ++x) {
                          a0 += gorow[x] * irow[x - d];
                          a1 += gorow[x] * irow[x];
                        }
                      }
                    }
                    if (gwk) {
                      gwk[ky * 3] += a0;
                      gwk[ky * 3 + 1] += a1;
                      gwk[ky * 3 + 2] += a2;
                    }
                    continue;
                  }
                  for (int y = ya; y < yb; ++y) {
                    const S* __restrict gorow = gob + (static_cast<int64_t>(o) * h + y) * w;
                    const int64_t srow = (static_cast<int64_t>(c) * h + y + dy) * w;
                    for (int kx = 0; kx < kw; ++kx) {
                      const int dx = kx * dilation - pad;
                      const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                      if (want_i) {
                        const S wv = wker[ky * kw + kx];
                        S* __restrict girow = gi + srow;
                        for (int x = x0; x < x1; ++x) girow[x + dx] += wv * gorow[x];
                      }
                      if (gwk) {
                        const S* __restrict irow = ibase + srow;
                        S acc = S(0);
                        for (int x = x0; x < x1; ++x) acc += gorow[x] * irow[x + dx];
                        gwk[ky * kw + kx] += acc;
                      }
                    }
                  }
                }
              }
          }
        }
        if (b_t.requires_grad()) {
          S* gb = b_t.node()->grad.data();
          for (int b = 0; b < n; ++b)
            for (int o = 0; o < cout; ++o) {
              const S* row = go + (static_cast<int64_t>(b) * cout + o) * hw;
              S acc = S(0);
              for (int64_t i = 0; i < hw; ++i) acc += row[i];
              gb[o] += acc;
            }
        }
      });
}

// ---------------------------------------------------------------------------
// maxpool2d / upsample2x (leading dims arbitrary, last two are spatial)
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> maxpool2d(const Tensor<S>& input) {
  if (input.rank() < 2) throw ConfigError("maxpool2d needs at least 2 dims");
  const int h = input.dim(input.rank() - 2), w = input.dim(input.rank() - 1);
  if (h % 2 || w % 2)
    throw ConfigError("maxpool2d requires even spatial dims, got " + std::to_string(h) + "x" +
                      std::to_string(w));
  const int oh = h / 2, ow = w / 2;
  int64_t planes = 1;
  std::vector<int> oshape = input.shape();
  for (int i = 0; i < input.rank() - 2; ++i) planes *= input.dim(i);
  oshape[oshape.size() - 2] = oh;
  oshape[oshape.size() - 1] = ow;

  std::vector<S> out(static_cast<size_t>(planes) * oh * ow);
  auto argmax = std::make_shared<std::vector<int64_t>>(out.size());
  const S* in = input.data();
  for (int64_t p = 0; p < planes; ++p) {
    const S* plane = in + p * h * w;
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        // first occurrence wins on ties (row-major window order)
        int64_t best = static_cast<int64_t>(2 * y) * w + 2 * x;
        S bv = plane[best];
        const int64_t cand[3] = {best + 1, best + w, best + w + 1};
        for (int64_t c : cand)
          if (plane[c] > bv) {
            bv = plane[c];
            best = c;
          }
        const int64_t oi = p * oh * ow + static_cast<int64_t>(y) * ow + x;
        out[static_cast<size_t>(oi)] = bv;
        (*argmax)[static_cast<size_t>(oi)] = p * h * w + best;
      }
  }

  Tensor<S> in_t = input;
  return Tensor<S>::from_op(std::move(oshape), std::move(out), {input},
                            [=](TensorNode<S>& node) {
                              if (!in_t.requires_grad()) return;
                              in_t.node()->ensure_grad();
                              S* gi = in_t.node()->grad.data();
                              const S* go = node.grad.data();
                              for (size_t i = 0; i < argmax->size(); ++i)
                                gi[(*argmax)[i]] += go[i];
                            });
}

template <typename S>
Tensor<S> upsample2x(const Tensor<S>& input) {
  if (input.rank() < 2) throw ConfigError("upsample2x needs at least 2 dims");
  const int h = input.dim(input.rank() - 2), w = input.dim(input.rank() - 1);
  int64_t planes = 1;
  for (int i = 0; i < input.rank() - 2; ++i) planes *= input.dim(i);
  std::vector<int> oshape = input.shape();
  oshape[oshape.size() - 2] = 2 * h;
  oshape[oshape.size() - 1] = 2 * w;

  std::vector<S> out(static_cast<size_t>(planes) * 4 * h * w);
  const S* in = input.data();
  for (int64_t p = 0; p < planes; ++p)
    for (int y = 0; y < h; ++y) {
      const S* srow = in + (p * h + y) * w;
      S* d0 = out.data() + ((p * 2 * h) + 2 * y) * (2 * w);
      S* d1 = d0 + 2 * w;
      for (int x = 0; x < w; ++x) {
        d0[2 * x] = d0[2 * x + 1] = srow[x];
        d1[2 * x] = d1[2 * x + 1] = srow[x];
      }
    }

  Tensor<S> in_t = input;
  return Tensor<S>::from_op(
      std::move(oshape), std::move(out), {input}, [=](TensorNode<S>& node) {
        if (!in_t.requires_grad()) return;
        in_t.node()->ensure_grad();
        S* gi = in_t.node()->grad.data();
        const S* go = node.grad.data();
        for (int64_t p = 0; p < planes; ++p)
          for (int y = 0; y < h; ++y) {
            S* grow = gi + (p * h + y) * w;
            const S* g0 = go + ((p * 2 * h) + 2 * y) * (2 * w);
            const S* g1 = g0 + 2 * w;
            for (int x = 0; x < w; ++x)
              grow[x] += g0[2 * x] + g0[2 * x + 1] + g1[2 * x] + g1[2 * x + 1];
          }
      });
}

// ---------------------------------------------------------------------------
// batchnorm2d
// ---------------------------------------------------------------------------

template <typename S>
struct BatchNormState {
  std::vector<S> running_mean;
  std::vector<S> running_var;
  bool initialized = false;
  static constexpr S kMomentum = S(0.1);
  static constexpr S kEpsilon = S(1e-5);
};

// input [N x C x H x W]; gamma/beta [C]. Train mode uses biased batch
// variance and updates running stats; eval mode uses running stats.
template <typename S>
Tensor<S> batchnorm2d(const Tensor<S>& input, const Tensor<S>& gamma, const Tensor<S>& beta,
                      BatchNormState<S>& stats, Mode mode) {
  if (input.rank() != 4) throw ConfigError("batchnorm2d input must be [N,C,H,W]");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (gamma.rank() != 1 || gamma.dim(0) != c || beta.rank() != 1 || beta.dim(0) != c)
    throw ConfigError("batchnorm2d gamma/beta must be [C]");
  const int64_t per_ch = static_cast<int64_t>(n) * h * w;
  if (mode == Mode::Train && per_ch < 2)
    throw ConfigError("batchnorm2d train mode needs at least 2 samples per channel");
  const S eps = BatchNormState<S>::kEpsilon;

  if (stats.running_mean.empty()) {
    stats.running_mean.assign(static_cast<size_t>(c), S(0));
    stats.running_var.assign(static_cast<size_t>(c), S(1));
  }

  std::vector<S> mean(static_cast<size_t>(c)), var(static_cast<size_t>(c));
  if (mode == Mode::Train) {
    const S* in = input.data();
    for (int ch = 0; ch < c; ++ch) {
      S m = S(0);
      for (int b = 0; b < n; ++b) {
        const S* plane = in + (static_cast<int64_t>(b) * c + ch) * h * w;
        for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) m += plane[i];
      }
      m /= static_cast<S>(per_ch);
      S v = S(0);
      for (int b = 0; b < n; ++b) {
        const S* plane = in + (static_cast<int64_t>(b) * c + ch) * h * w;
        for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) {
          const S d = plane[i] - m;
          v += d * d;
        }
      }
      v /= static_cast<S>(per_ch);  // biased estimator
      mean[static_cast<size_t>(ch)] = m;
      var[static_cast<size_t>(ch)] = v;
      const S mom = BatchNormState<S>::kMomentum;
      stats.running_mean[static_cast<size_t>(ch)] =
          (S(1) - mom) * stats.running_mean[static_cast<size_t>(ch)] + mom * m;
      stats.running_var[static_cast<size_t>(ch)] =
          (S(1) - mom) * stats.running_var[static_cast<size_t>(ch)] + mom * v;
    }
    stats.initialized = true;
  } else {
    if (!stats.initialized) {
      std::fprintf(stderr,
                   "ynet: warning: batchnorm eval before any training batch; "
                   "using identity statistics\n");
      std::fill(mean.begin(), mean.end(), S(0));
      std::fill(var.begin(), var.end(), S(1));
    } else {
      mean = stats.running_mean;
      var = stats.running_var;
    }
  }

  std::vector<S> invstd(static_cast<size_t>(c));
  for (int ch = 0; ch < c; ++ch)
    invstd[static_cast<size_t>(ch)] = S(1) / std::sqrt(var[static_cast<size_t>(ch)] + eps);

  std::vector<S> out(input.values().size());
  auto xhat = std::make_shared<std::vector<S>>(input.values().size());
  {
    const S* in = input.data();
    const S* g = gamma.data();
    const S* bt = beta.data();
    for (int b = 0; b < n; ++b)
      for (int ch = 0; ch < c; ++ch) {
        const int64_t off = (static_cast<int64_t>(b) * c + ch) * h * w;
        const S m = mean[static_cast<size_t>(ch)], is = invstd[static_cast<size_t>(ch)];
        const S gv = g[ch], bv = bt[ch];
        for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) {
          const S xh = (in[off + i] - m) * is;
          (*xhat)[static_cast<size_t>(off + i)] = xh;
          out[static_cast<size_t>(off + i)] = gv * xh + bv;
        }
      }
  }

  auto invstd_sp = std::make_shared<std::vector<S>>(std::move(invstd));
  const bool train = mode == Mode::Train;
  Tensor<S> in_t = input, g_t = gamma, b_t = beta;
  return Tensor<S>::from_op(
      input.shape(), std::move(out), {input, gamma, beta},
      [=](TensorNode<S>& node) {
        const S* go = node.grad.data();
        const int64_t chw = static_cast<int64_t>(h) * w;
        // per-channel reductions
        std::vector<S> sum_go(static_cast<size_t>(c), S(0));
        std::vector<S> sum_goxh(static_cast<size_t>(c), S(0));
        for (int b = 0; b < n; ++b)
          for (int ch = 0; ch < c; ++ch) {
            const int64_t off = (static_cast<int64_t>(b) * c + ch) * chw;
            S s0 = S(0), s1 = S(0);
            for (int64_t i = 0; i < chw; ++i) {
              s0 += go[off + i];
              s1 += go[off + i] * (*xhat)[static_cast<size_t>(off + i)];
            }
            sum_go[static_cast<size_t>(ch)] += s0;
            sum_goxh[static_cast<size_t>(ch)] += s1;
          }
        if (g_t.requires_grad()) {
          g_t.node()->ensure_grad();
          for (int ch = 0; ch < c; ++ch) g_t.node()->grad[static_cast<size_t>(ch)] += sum_goxh[static_cast<size_t>(ch)];
        }
        if (b_t.requires_grad()) {
          b_t.node()->ensure_grad();
          for (int ch = 0; ch < c; ++ch) b_t.node()->grad[static_cast<size_t>(ch)] += sum_go[static_cast<size_t>(ch)];
        }
        if (!in_t.requires_grad()) return;
        in_t.node()->ensure_grad();
        S* gi = in_t.node()->grad.data();
        const S* g = g_t.data();
        const S inv_m = S(1) / static_cast<S>(per_ch);
        for (int b = 0; b < n; ++b)
          for (int ch = 0; ch < c; ++ch) {
            const int64_t off = (static_cast<int64_t>(b) * c + ch) * chw;
            const S gis = g[ch] * (*invstd_sp)[static_cast<size_t>(ch)];
            if (train) {
              const S mg = sum_go[static_cast<size_t>(ch)] * inv_m;
              const S mgx = sum_goxh[static_cast<size_t>(ch)] * inv_m;
              for (int64_t i = 0; i < chw; ++i)
                gi[off + i] += gis * (go[off + i] - mg -
                                      (*xhat)[static_cast<size_t>(off + i)] * mgx);
            } else {
              for (int64_t i = 0; i < chw; ++i) gi[off + i] += gis * go[off + i];
            }
          }
      });
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

namespace detail {

template <typename S, typename F, typename DF>
Tensor<S> unary_ew(const Tensor<S>& input, F f, DF df) {
  std::vector<S> out(input.values().size());
  const S* in = input.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  Tensor<S> in_t = input;
  return Tensor<S>::from_op(input.shape(), std::move(out), {input},
                            [=](TensorNode<S>& node) {
                              if (!in_t.requires_grad()) return;
                              in_t.node()->ensure_grad();
                              S* gi = in_t.node()->grad.data();
                              const S* go = node.grad.data();
                              const S* x = in_t.data();
                              for (size_t i = 0; i < node.grad.size(); ++i)
                                gi[i] += go[i] * df(x[i]);
                            });
}

}  // namespace detail

// Derivative at the kink (x == 0 / bounds) uses the inactive branch: 0 for
// relu below, slope for leaky only when strictly negative, 0 at clamp edges.
template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  return detail::unary_ew(
      x, [](S v) { return v > S(0) ? v : S(0); }, [](S v) { return v > S(0) ? S(1) : S(0); });
}

template <typename S>
Tensor<S> leaky_relu(const Tensor<S>& x, S slope) {
  return detail::unary_ew(
      x, [slope](S v) { return v >= S(0) ? v : slope * v; },
      [slope](S v) { return v >= S(0) ? S(1) : slope; });
}

template <typename S>
Tensor<S> hardtanh(const Tensor<S>& x, S lo, S hi) {
  if (!(lo < hi)) throw ConfigError("hardtanh requires lo < hi");
  return detail::unary_ew(
      x, [lo, hi](S v) { return std::min(hi, std::max(lo, v)); },
      [lo, hi](S v) { return (v > lo && v < hi) ? S(1) : S(0); });
}

enum class ActKind { Relu, LeakyRelu, Hardtanh };

inline ActKind parse_activation(const std::string& name) {
  if (name == "relu") return ActKind::Relu;
  if (name == "leaky_relu") return ActKind::LeakyRelu;
  if (name == "hardtanh") return ActKind::Hardtanh;
  throw ConfigError("unknown activation kind: " + name);
}

template <typename S>
Tensor<S> activation(const Tensor<S>& x, ActKind kind, S slope = S(0.01), S lo = S(-1),
                     S hi = S(1)) {
  switch (kind) {
    case ActKind::Relu:
      return relu(x);
    case ActKind::LeakyRelu:
      return leaky_relu(x, slope);
    case ActKind::Hardtanh:
      return hardtanh(x, lo, hi);
  }
  throw ConfigError("unknown activation kind");
}

// ---------------------------------------------------------------------------
// concat / slice
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> concat(const std::vector<Tensor<S>>& inputs, int axis) {
  if (inputs.empty()) throw ConfigError("concat of zero tensors");
  const int rank = inputs[0].rank();
  if (axis < 0 || axis >= rank) throw ConfigError("concat axis out of range");
  std::vector<int> oshape = inputs[0].shape();
  int total = 0;
  for (const auto& t : inputs) {
    if (t.rank() != rank) throw ConfigError("concat rank mismatch");
    for (int i = 0; i < rank; ++i)
      if (i != axis && t.dim(i) != oshape[static_cast<size_t>(i)])
        throw ConfigError("concat extent mismatch on axis " + std::to_string(i) + ": " +
                          detail::shape_str(t.shape()) + " vs " +
                          detail::shape_str(inputs[0].shape()));
    total += t.dim(axis);
  }
  oshape[static_cast<size_t>(axis)] = total;

  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= oshape[static_cast<size_t>(i)];
  for (int i = axis + 1; i < rank; ++i) inner *= oshape[static_cast<size_t>(i)];

  std::vector<S> out(static_cast<size_t>(outer) * total * inner);
  int64_t row_off = 0;
  for (const auto& t : inputs) {
    const int64_t block = static_cast<int64_t>(t.dim(axis)) * inner;
    const S* src = t.data();
    for (int64_t o = 0; o < outer; ++o)
      std::copy_n(src + o * block, block,
                  out.data() + (o * total * inner) + row_off * inner);
    row_off += t.dim(axis);
  }

  std::vector<Tensor<S>> ins = inputs;
  return Tensor<S>::from_op(
      std::move(oshape), std::move(out), inputs, [=](TensorNode<S>& node) {
        const S* go = node.grad.data();
        int64_t roff = 0;
        for (auto in_t : ins) {
          const int64_t block = static_cast<int64_t>(in_t.dim(axis)) * inner;
          if (in_t.requires_grad()) {
            in_t.node()->ensure_grad();
            S* gi = in_t.node()->grad.data();
            for (int64_t o = 0; o < outer; ++o) {
              const S* src = go + (o * total * inner) + roff * inner;
              for (int64_t i = 0; i < block; ++i) gi[o * block + i] += src[i];
            }
          }
          roff += in_t.dim(axis);
        }
      });
}

template <typename S>
Tensor<S> slice(const Tensor<S>& input, int axis, int start, int len) {
  const int rank = input.rank();
  if (axis < 0 || axis >= rank) throw ConfigError("slice axis out of range");
  if (start < 0 || len <= 0 || start + len > input.dim(axis))
    throw ConfigError("slice range out of bounds");
  std::vector<int> oshape = input.shape();
  oshape[static_cast<size_t>(axis)] = len;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= input.dim(i);
  for (int i = axis + 1; i < rank; ++i) inner *= input.dim(i);
  const int full = input.dim(axis);

  std::vector<S> out(static_cast<size_t>(outer) * len * inner);
  const S* src = input.data();
  for (int64_t o = 0; o < outer; ++o)
    std::copy_n(src + (o * full + start) * inner, static_cast<int64_t>(len) * inner,
                out.data() + o * len * inner);

  Tensor<S> in_t = input;
  return Tensor<S>::from_op(std::move(oshape), std::move(out), {input},
                            [=](TensorNode<S>& node) {
                              if (!in_t.requires_grad()) return;
                              in_t.node()->ensure_grad();
                              S* gi = in_t.node()->grad.data();
                              const S* go = node.grad.data();
                              for (int64_t o = 0; o < outer; ++o)
                                for (int64_t i = 0; i < static_cast<int64_t>(len) * inner; ++i)
                                  gi[(o * full + start) * inner + i] += go[o * len * inner + i];
                            });
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& input, std::vector<int> shape) {
  if (detail::shape_numel(shape) != input.size())
    throw ConfigError("reshape element count mismatch: " + detail::shape_str(input.shape()) +
                      " -> " + detail::shape_str(shape));
  Tensor<S> in_t = input;
  return Tensor<S>::from_op(std::move(shape), input.values(), {input},
                            [=](TensorNode<S>& node) {
                              if (!in_t.requires_grad()) return;
                              in_t.node()->ensure_grad();
                              S* gi = in_t.node()->grad.data();
                              const S* go = node.grad.data();
                              for (size_t i = 0; i < node.grad.size(); ++i) gi[i] += go[i];
                            });
}

// ---------------------------------------------------------------------------
// elementwise arithmetic / reductions
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape())
    throw ConfigError("mul shape mismatch: " + detail::shape_str(a.shape()) + " vs " +
                      detail::shape_str(b.shape()));
  std::vector<S> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  Tensor<S> a_t = a, b_t = b;
  return Tensor<S>::from_op(a.shape(), std::move(out), {a, b}, [=](TensorNode<S>& node) {
    const S* go = node.grad.data();
    if (a_t.requires_grad()) {
      a_t.node()->ensure_grad();
      S* ga = a_t.node()->grad.data();
      for (size_t i = 0; i < node.grad.size(); ++i) ga[i] += go[i] * b_t.data()[i];
    }
    if (b_t.requires_grad()) {
      b_t.node()->ensure_grad();
      S* gb = b_t.node()->grad.data();
      for (size_t i = 0; i < node.grad.size(); ++i) gb[i] += go[i] * a_t.data()[i];
    }
  });
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape())
    throw ConfigError("add shape mismatch: " + detail::shape_str(a.shape()) + " vs " +
                      detail::shape_str(b.shape()));
  std::vector<S> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  Tensor<S> a_t = a, b_t = b;
  return Tensor<S>::from_op(a.shape(), std::move(out), {a, b}, [=](TensorNode<S>& node) {
    const S* go = node.grad.data();
    for (auto t : {a_t, b_t}) {
      if (!t.requires_grad()) continue;
      t.node()->ensure_grad();
      S* g = t.node()->grad.data();
      for (size_t i = 0; i < node.grad.size(); ++i) g[i] += go[i];
    }
  });
}

template <typename S>
Tensor<S> sum(const Tensor<S>& a) {
  S acc = S(0);
  for (size_t i = 0; i < a.values().size(); ++i) acc += a.data()[i];
  Tensor<S> a_t = a;
  return Tensor<S>::from_op({1}, {acc}, {a}, [=](TensorNode<S>& node) {
    if (!a_t.requires_grad()) return;
    a_t.node()->ensure_grad();
    S* ga = a_t.node()->grad.data();
    const S go = node.grad[0];
    for (size_t i = 0; i < a_t.values().size(); ++i) ga[i] += go;
  });
}

template <typename S>
Tensor<S> mse(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape())
    throw ConfigError("mse shape mismatch: " + detail::shape_str(a.shape()) + " vs " +
                      detail::shape_str(b.shape()));
  const int64_t n = a.size();
  S acc = S(0);
  for (int64_t i = 0; i < n; ++i) {
    const S d = a.data()[i] - b.data()[i];
    acc += d * d;
  }
  acc /= static_cast<S>(n);
  Tensor<S> a_t = a, b_t = b;
  return Tensor<S>::from_op({1}, {acc}, {a, b}, [=](TensorNode<S>& node) {
    const S go = node.grad[0];
    const S scale = S(2) / static_cast<S>(n);
    if (a_t.requires_grad()) {
      a_t.node()->ensure_grad();
      S* ga = a_t.node()->grad.data();
      for (int64_t i = 0; i < n; ++i) ga[i] += go * scale * (a_t.data()[i] - b_t.data()[i]);
    }
    if (b_t.requires_grad()) {
      b_t.node()->ensure_grad();
      S* gb = b_t.node()->grad.data();
      for (int64_t i = 0; i < n; ++i) gb[i] -= go * scale * (a_t.data()[i] - b_t.data()[i]);
    }
  });
}

// Inverted-scaling dropout. The mask is a constant w.r.t. the graph, so this
// is just an elementwise product with a frozen Bernoulli pattern.
template <typename S>
Tensor<S> dropout(const Tensor<S>& x, double rate, Mode mode, std::mt19937& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0,1)");
  if (mode == Mode::Eval || rate == 0.0) return x;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor<S> mask(x.shape());
  const S keep_scale = static_cast<S>(1.0 / (1.0 - rate));
  for (int64_t i = 0; i < x.size(); ++i)
    mask.data()[i] = u(rng) < rate ? S(0) : keep_scale;
  return mul(x, mask);
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

template <typename S>
void backward(const Tensor<S>& loss) {
  if (loss.size() != 1) throw UsageError("backward requires a scalar loss");
  // Topological order over the reachable graph.
  std::vector<TensorNode<S>*> order;
  std::unordered_set<TensorNode<S>*> seen;
  std::vector<std::pair<TensorNode<S>*, size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorNode<S>* p = node->parents[idx++].get();
      if (seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  // Interior gradients are scratch per call; leaves accumulate across calls.
  for (TensorNode<S>* n : order)
    if (n->backprop) n->grad.assign(n->value.size(), S(0));
  loss.node()->ensure_grad();
  loss.node()->grad[0] += S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode<S>* n = *it;
    if (n->backprop && n->requires_grad) n->backprop(*n);
  }
}

template <typename S>
void zero_grads(std::vector<Tensor<S>>& params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace ynet
