#include "chanalign/nncore/ops.hpp"

#include <cmath>
#include <stdexcept>



namespace nncore {

namespace {

void check(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// Rows when a tensor [..., C] is viewed as a 2-D matrix with C columns.
int64_t rows_of(const Tensor& x, int cols) { return x.size() / cols; }

void accum(Node* p, const Eigen::ArrayXd& g) {
  if (!p->needs_grad) return;
  p->ensure_grad();
  p->grad += g;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), "add: shape mismatch");
  Node* pa = a.node();
  Node* pb = b.node();
  Tensor out = make_node(a.shape(), {a.ptr(), b.ptr()}, [pa, pb](Node& n) {
    accum(pa, n.grad);
    accum(pb, n.grad);
  });
  out.data() = a.data() + b.data();
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), "sub: shape mismatch");
  Node* pa = a.node();
  Node* pb = b.node();
  Tensor out = make_node(a.shape(), {a.ptr(), b.ptr()}, [pa, pb](Node& n) {
    accum(pa, n.grad);
    if (pb->needs_grad) {
      pb->ensure_grad();
      pb->grad -= n.grad;
    }
  });
  out.data() = a.data() - b.data();
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), "mul: shape mismatch");
  Node* pa = a.node();
  Node* pb = b.node();
  Tensor out = make_node(a.shape(), {a.ptr(), b.ptr()}, [pa, pb](Node& n) {
    if (pa->needs_grad) accum(pa, (n.grad * pb->value).eval());
    if (pb->needs_grad) accum(pb, (n.grad * pa->value).eval());
  });
  out.data() = a.data() * b.data();
  return out;
}

Tensor scale(const Tensor& x, double c) {
  Node* px = x.node();
  Tensor out = make_node(x.shape(), {x.ptr()}, [px, c](Node& n) {
    if (px->needs_grad) accum(px, (c * n.grad).eval());
  });
  out.data() = x.data() * c;
  return out;
}

Tensor add_scalar(const Tensor& x, double c) {
  Node* px = x.node();
  Tensor out = make_node(x.shape(), {x.ptr()}, [px](Node& n) { accum(px, n.grad); });
  out.data() = x.data() + c;
  return out;
}

Tensor pow(const Tensor& x, double p) {
  Node* px = x.node();
  Tensor out = make_node(x.shape(), {x.ptr()}, [px, p](Node& n) {
    if (px->needs_grad) accum(px, (n.grad * p * px->value.pow(p - 1.0)).eval());
  });
  out.data() = x.data().pow(p);
  return out;
}

Tensor log(const Tensor& x) {
  Node* px = x.node();
  Tensor out = make_node(x.shape(), {x.ptr()}, [px](Node& n) {
    if (px->needs_grad) accum(px, (n.grad / px->value).eval());
  });
  out.data() = x.data().log();
  return out;
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  check(lo <= hi, "clamp: lo > hi");
  Node* px = x.node();
  Tensor out = make_node(x.shape(), {x.ptr()}, [px, lo, hi](Node& n) {
    if (!px->needs_grad) return;
    // Gradient passes through inside the (inclusive) interval.
    Eigen::ArrayXd mask =
        ((px->value >= lo) && (px->value <= hi)).cast<double>();
    accum(px, (n.grad * mask).eval());
  });
  out.data() = x.data().max(lo).min(hi);
  return out;
}

Tensor quick_gelu(const Tensor& x) {
  Node* px = x.node();
  Tensor out = make_node(x.shape(), {x.ptr()}, [px](Node& n) {
    if (!px->needs_grad) return;
    Eigen::ArrayXd s = 1.0 / (1.0 + (-1.702 * px->value).exp());
    accum(px, (n.grad * (s + px->value * 1.702 * s * (1.0 - s))).eval());
  });
  Eigen::ArrayXd s = 1.0 / (1.0 + (-1.702 * x.data()).exp());
  out.data() = x.data() * s;
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Node* px = x.node();
  Tensor out = make_node(x.shape(), {x.ptr()}, [px](Node& n) {
    if (px->needs_grad) accum(px, (n.grad * n.value * (1.0 - n.value)).eval());
  });
  out.data() = 1.0 / (1.0 + (-x.data()).exp());
  return out;
}

Tensor scale_by(const Tensor& x, const Tensor& s) {
  check(s.size() == 1, "scale_by: scale must be a 1-element tensor");
  Node* px = x.node();
  Node* ps = s.node();
  Tensor out = make_node(x.shape(), {x.ptr(), s.ptr()}, [px, ps](Node& n) {
    if (px->needs_grad) accum(px, (ps->value[0] * n.grad).eval());
    if (ps->needs_grad) {
      ps->ensure_grad();
      ps->grad[0] += (n.grad * px->value).sum();
    }
  });
  out.data() = x.data() * s.data()[0];
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check(a.ndim() >= 2 && b.ndim() == 2, "matmul: need a [...,K], b [K,N]");
  int k = a.dim(a.ndim() - 1);
  check(k == b.dim(0), "matmul: inner dimension mismatch");
  int n = b.dim(1);
  int64_t m = rows_of(a, k);
  std::vector<int> out_shape(a.shape().begin(), a.shape().end() - 1);
  out_shape.push_back(n);

  Node* pa = a.node();
  Node* pb = b.node();
  Tensor out = make_node(std::move(out_shape), {a.ptr(), b.ptr()}, [pa, pb, m, k, n](Node& nd) {
    ConstMatMap g(nd.grad.data(), m, n);
    if (pa->needs_grad) {
      pa->ensure_grad();
      MatMap ga(pa->grad.data(), m, k);
      ConstMatMap vb(pb->value.data(), k, n);
      ga.noalias() += g * vb.transpose();
    }
    if (pb->needs_grad) {
      pb->ensure_grad();
      MatMap gb(pb->grad.data(), k, n);
      ConstMatMap va(pa->value.data(), m, k);
      gb.noalias() += va.transpose() * g;
    }
  });
  MatMap(out.data().data(), m, n).noalias() =
      ConstMatMap(a.data().data(), m, k) * ConstMatMap(b.data().data(), k, n);
  return out;
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  check(a.ndim() == 3 && b.ndim() == 3, "bmm: need 3-D inputs");
  int g = a.dim(0), m = a.dim(1), k = a.dim(2);
  check(b.dim(0) == g && b.dim(1) == k, "bmm: shape mismatch");
  int n = b.dim(2);

  Node* pa = a.node();
  Node* pb = b.node();
  Tensor out = make_node({g, m, n}, {a.ptr(), b.ptr()}, [pa, pb, g, m, k, n](Node& nd) {
    for (int i = 0; i < g; i++) {
      ConstMatMap gi(nd.grad.data() + static_cast<int64_t>(i) * m * n, m, n);
      if (pa->needs_grad) {
        pa->ensure_grad();
        MatMap gai(pa->grad.data() + static_cast<int64_t>(i) * m * k, m, k);
        ConstMatMap vbi(pb->value.data() + static_cast<int64_t>(i) * k * n, k, n);
        gai.noalias() += gi * vbi.transpose();
      }
      if (pb->needs_grad) {
        pb->ensure_grad();
        MatMap gbi(pb->grad.data() + static_cast<int64_t>(i) * k * n, k, n);
        ConstMatMap vai(pa->value.data() + static_cast<int64_t>(i) * m * k, m, k);
        gbi.noalias() += vai.transpose() * gi;
      }
    }
  });
  for (int i = 0; i < g; i++) {
    MatMap(out.data().data() + static_cast<int64_t>(i) * m * n, m, n).noalias() =
        ConstMatMap(a.data().data() + static_cast<int64_t>(i) * m * k, m, k) *
        ConstMatMap(b.data().data() + static_cast<int64_t>(i) * k * n, k, n);
  }
  return out;
}

Tensor transpose2d(const Tensor& x) {
  check(x.ndim() == 2, "transpose2d: need 2-D input");
  int m = x.dim(0), n = x.dim(1);
  Node* px = x.node();
  Tensor out = make_node({n, m}, {x.ptr()}, [px, m, n](Node& nd) {
    if (!px->needs_grad) return;
    px->ensure_grad();
    MatMap gx(px->grad.data(), m, n);
    ConstMatMap g(nd.grad.data(), n, m);
    gx += g.transpose();
  });
  MatMap(out.data().data(), n, m) = ConstMatMap(x.data().data(), m, n).transpose();
  return out;
}

Tensor transpose_last2(const Tensor& x) {
  check(x.ndim() == 3, "transpose_last2: need 3-D input");
  int g = x.dim(0), m = x.dim(1), n = x.dim(2);
  Node* px = x.node();
  Tensor out = make_node({g, n, m}, {x.ptr()}, [px, g, m, n](Node& nd) {
    if (!px->needs_grad) return;
    px->ensure_grad();
    for (int i = 0; i < g; i++) {
      MatMap gx(px->grad.data() + static_cast<int64_t>(i) * m * n, m, n);
      ConstMatMap gi(nd.grad.data() + static_cast<int64_t>(i) * m * n, n, m);
      gx += gi.transpose();
    }
  });
  for (int i = 0; i < g; i++) {
    MatMap(out.data().data() + static_cast<int64_t>(i) * m * n, n, m) =
        ConstMatMap(x.data().data() + static_cast<int64_t>(i) * m * n, m, n).transpose();
  }
  return out;
}

namespace {

void permute_0213_into(const double* src, double* dst, int a, int b, int c, int d) {
  // dst[i,k,j,:] = src[i,j,k,:]
  for (int i = 0; i < a; i++)
    for (int j = 0; j < b; j++)
      for (int k = 0; k < c; k++) {
        const double* s = src + (((static_cast<int64_t>(i) * b + j) * c + k) * d);
        double* t = dst + (((static_cast<int64_t>(i) * c + k) * b + j) * d);
        std::copy(s, s + d, t);
      }
}

}  // namespace

Tensor permute_0213(const Tensor& x) {
  check(x.ndim() == 4, "permute_0213: need 4-D input");
  int a = x.dim(0), b = x.dim(1), c = x.dim(2), d = x.dim(3);
  Node* px = x.node();
  Tensor out = make_node({a, c, b, d}, {x.ptr()}, [px, a, b, c, d](Node& nd) {
    if (!px->needs_grad) return;
    px->ensure_grad();
    // The permutation is an involution on (dim1, dim2).
    Eigen::ArrayXd tmp(nd.grad.size());
    permute_0213_into(nd.grad.data(), tmp.data(), a, c, b, d);
    px->grad += tmp;
  });
  permute_0213_into(x.data().data(), out.data().data(), a, b, c, d);
  return out;
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
  check(numel(shape) == x.size(), "reshape: element count mismatch");
  Node* px = x.node();
  Tensor out = make_node(std::move(shape), {x.ptr()}, [px](Node& nd) { accum(px, nd.grad); });
  out.data() = x.data();
  return out;
}

Tensor slice_last(const Tensor& x, int c0, int c1) {
  int cols = x.dim(x.ndim() - 1);
  check(0 <= c0 && c0 < c1 && c1 <= cols, "slice_last: bad range");
  int64_t rows = rows_of(x, cols);
  int w = c1 - c0;
  std::vector<int> out_shape(x.shape().begin(), x.shape().end() - 1);
  out_shape.push_back(w);
  Node* px = x.node();
  Tensor out = make_node(std::move(out_shape), {x.ptr()}, [px, rows, cols, c0, w](Node& nd) {
    if (!px->needs_grad) return;
    px->ensure_grad();
    for (int64_t r = 0; r < rows; r++)
      Eigen::Map<Eigen::ArrayXd>(px->grad.data() + r * cols + c0, w) +=
          Eigen::Map<const Eigen::ArrayXd>(nd.grad.data() + r * w, w);
  });
  for (int64_t r = 0; r < rows; r++)
    Eigen::Map<Eigen::ArrayXd>(out.data().data() + r * w, w) =
        Eigen::Map<const Eigen::ArrayXd>(x.data().data() + r * cols + c0, w);
  return out;
}

Tensor concat_tokens(const Tensor& a, const Tensor& b) {
  check(a.ndim() == 3 && b.ndim() == 3 && a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2),
        "concat_tokens: incompatible shapes");
  int bs = a.dim(0), s1 = a.dim(1), s2 = b.dim(1), d = a.dim(2);
  Node* pa = a.node();
  Node* pb = b.node();
  Tensor out = make_node({bs, s1 + s2, d}, {a.ptr(), b.ptr()}, [pa, pb, bs, s1, s2, d](Node& nd) {
    int64_t stride = static_cast<int64_t>(s1 + s2) * d;
    for (int i = 0; i < bs; i++) {
      if (pa->needs_grad) {
        pa->ensure_grad();
        Eigen::Map<Eigen::ArrayXd>(pa->grad.data() + static_cast<int64_t>(i) * s1 * d, s1 * d) +=
            Eigen::Map<const Eigen::ArrayXd>(nd.grad.data() + i * stride, s1 * d);
      }
      if (pb->needs_grad) {
        pb->ensure_grad();
        Eigen::Map<Eigen::ArrayXd>(pb->grad.data() + static_cast<int64_t>(i) * s2 * d, s2 * d) +=
            Eigen::Map<const Eigen::ArrayXd>(nd.grad.data() + i * stride + s1 * d, s2 * d);
      }
    }
  });
  int64_t stride = static_cast<int64_t>(s1 + s2) * d;
  for (int i = 0; i < bs; i++) {
    std::copy(a.data().data() + static_cast<int64_t>(i) * s1 * d,
              a.data().data() + static_cast<int64_t>(i + 1) * s1 * d,
              out.data().data() + i * stride);
    std::copy(b.data().data() + static_cast<int64_t>(i) * s2 * d,
              b.data().data() + static_cast<int64_t>(i + 1) * s2 * d,
              out.data().data() + i * stride + s1 * d);
  }
  return out;
}

Tensor slice_tokens(const Tensor& x, int s0, int s1) {
  check(x.ndim() == 3, "slice_tokens: need 3-D input");
  int bs = x.dim(0), s = x.dim(1), d = x.dim(2);
  check(0 <= s0 && s0 < s1 && s1 <= s, "slice_tokens: bad range");
  int w = s1 - s0;
  Node* px = x.node();
  Tensor out = make_node({bs, w, d}, {x.ptr()}, [px, bs, s, d, s0, w](Node& nd) {
    if (!px->needs_grad) return;
    px->ensure_grad();
    for (int i = 0; i < bs; i++)
      Eigen::Map<Eigen::ArrayXd>(
          px->grad.data() + (static_cast<int64_t>(i) * s + s0) * d, static_cast<int64_t>(w) * d) +=
          Eigen::Map<const Eigen::ArrayXd>(nd.grad.data() + static_cast<int64_t>(i) * w * d,
                                           static_cast<int64_t>(w) * d);
  });
  for (int i = 0; i < bs; i++)
    Eigen::Map<Eigen::ArrayXd>(out.data().data() + static_cast<int64_t>(i) * w * d,
                               static_cast<int64_t>(w) * d) =
        Eigen::Map<const Eigen::ArrayXd>(x.data().data() + (static_cast<int64_t>(i) * s + s0) * d,
                                         static_cast<int64_t>(w) * d);
  return out;
}

Tensor slice_token(const Tensor& x, int s) {
  Tensor t = slice_tokens(x, s, s + 1);
  return reshape(t, {x.dim(0), x.dim(2)});
}

Tensor expand_token(const Tensor& t, int batch) {
  check(t.ndim() == 1, "expand_token: need 1-D input");
  int d = t.dim(0);
  Node* pt = t.node();
  Tensor out = make_node({batch, 1, d}, {t.ptr()}, [pt, batch, d](Node& nd) {
    if (!pt->needs_grad) return;
    pt->ensure_grad();
    for (int i = 0; i < batch; i++)
      pt->grad += Eigen::Map<const Eigen::ArrayXd>(nd.grad.data() + static_cast<int64_t>(i) * d, d);
  });
  for (int i = 0; i < batch; i++)
    Eigen::Map<Eigen::ArrayXd>(out.data().data() + static_cast<int64_t>(i) * d, d) = t.data();
  return out;
}

Tensor bias_add(const Tensor& x, const Tensor& b) {
  int cols = x.dim(x.ndim() - 1);
  check(b.ndim() == 1 && b.dim(0) == cols, "bias_add: bias shape mismatch");
  int64_t rows = rows_of(x, cols);
  Node* px = x.node();
  Node* pb = b.node();
  Tensor out = make_node(x.shape(), {x.ptr(), b.ptr()}, [px, pb, rows, cols](Node& nd) {
    accum(px, nd.grad);
    if (pb->needs_grad) {
      pb->ensure_grad();
      ConstMatMap g(nd.grad.data(), rows, cols);
      pb->grad += g.colwise().sum().array().transpose();
    }
  });
  MatMap o(out.data().data(), rows, cols);
  o = ConstMatMap(x.data().data(), rows, cols);
  o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data().data(), cols);
  return out;
}

Tensor pos_add(const Tensor& x, const Tensor& p) {
  check(x.ndim() == 3 && p.ndim() == 2 && x.dim(1) == p.dim(0) && x.dim(2) == p.dim(1),
        "pos_add: shape mismatch");
  int bs = x.dim(0);
  int64_t block = static_cast<int64_t>(x.dim(1)) * x.dim(2);
  Node* px = x.node();
  Node* pp = p.node();
  Tensor out = make_node(x.shape(), {x.ptr(), p.ptr()}, [px, pp, bs, block](Node& nd) {
    accum(px, nd.grad);
    if (pp->needs_grad) {
      pp->ensure_grad();
      for (int i = 0; i < bs; i++)
        pp->grad += Eigen::Map<const Eigen::ArrayXd>(nd.grad.data() + i * block, block);
    }
  });
  for (int i = 0; i < bs; i++)
    Eigen::Map<Eigen::ArrayXd>(out.data().data() + i * block, block) =
        Eigen::Map<const Eigen::ArrayXd>(x.data().data() + i * block, block) +
        Eigen::Map<const Eigen::ArrayXd>(p.data().data(), block);
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  int cols = x.dim(x.ndim() - 1);
  check(gain.ndim() == 1 && gain.dim(0) == cols && bias.ndim() == 1 && bias.dim(0) == cols,
        "layer_norm: affine shape mismatch");
  int64_t rows = rows_of(x, cols);

  auto xhat = std::make_shared<Eigen::ArrayXd>(x.size());
  auto inv_std = std::make_shared<Eigen::ArrayXd>(rows);
  {
    ConstMatMap xm(x.data().data(), rows, cols);
    MatMap xh(xhat->data(), rows, cols);
    Eigen::VectorXd mu = xm.rowwise().mean();
    xh = xm.colwise() - mu;
    *inv_std = 1.0 / ((xh.array().square().rowwise().mean()) + eps).sqrt();
    xh.array().colwise() *= *inv_std;
  }

  Node* px = x.node();
  Node* pg = gain.node();
  Node* pb = bias.node();
  Tensor out =
      make_node(x.shape(), {x.ptr(), gain.ptr(), bias.ptr()},
                [px, pg, pb, rows, cols, xhat, inv_std](Node& nd) {
                  ConstMatMap g(nd.grad.data(), rows, cols);
                  ConstMatMap xh(xhat->data(), rows, cols);
                  if (pg->needs_grad) {
                    pg->ensure_grad();
                    pg->grad += (g.array() * xh.array()).colwise().sum().transpose();
                  }
                  if (pb->needs_grad) {
                    pb->ensure_grad();
                    pb->grad += g.colwise().sum().array().transpose();
                  }
                  if (px->needs_grad) {
                    px->ensure_grad();
                    MatMap gx(px->grad.data(), rows, cols);
                    Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> dxh =
                        g.array().rowwise() * pg->value.transpose();
                    Eigen::ArrayXd m1 = dxh.rowwise().mean();
                    Eigen::ArrayXd m2 = (dxh * xh.array()).rowwise().mean();
                    dxh.colwise() -= m1;
                    dxh -= xh.array().colwise() * m2;
                    gx.array() += dxh.colwise() * inv_std->array();
                  }
                });
  {
    MatMap o(out.data().data(), rows, cols);
    ConstMatMap xh(xhat->data(), rows, cols);
    o = xh;
    o.array().rowwise() *= gain.data().transpose();
    o.array().rowwise() += bias.data().transpose();
  }
  return out;
}

Tensor softmax_last(const Tensor& x) {
  int cols = x.dim(x.ndim() - 1);
  int64_t rows = rows_of(x, cols);
  Node* px = x.node();
  Tensor out = make_node(x.shape(), {x.ptr()}, [px, rows, cols](Node& nd) {
    if (!px->needs_grad) return;
    px->ensure_grad();
    ConstMatMap g(nd.grad.data(), rows, cols);
    ConstMatMap y(nd.value.data(), rows, cols);
    MatMap gx(px->grad.data(), rows, cols);
    Eigen::ArrayXd dots = (g.array() * y.array()).rowwise().sum();
    gx.array() += (g.array().colwise() - dots) * y.array();
  });
  ConstMatMap xm(x.data().data(), rows, cols);
  MatMap o(out.data().data(), rows, cols);
  o = (xm.colwise() - xm.rowwise().maxCoeff()).array().exp();
  Eigen::ArrayXd sums = o.array().rowwise().sum();
  o.array().colwise() /= sums;
  return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
  check(logits.ndim() == 2, "softmax_cross_entropy: need 2-D logits");
  int n = logits.dim(0), k = logits.dim(1);
  check(static_cast<int>(targets.size()) == n, "softmax_cross_entropy: target count mismatch");
  for (int t : targets) check(0 <= t && t < k, "softmax_cross_entropy: target out of range");

  auto probs = std::make_shared<Eigen::ArrayXd>(logits.size());
  double total = 0.0;
  {
    ConstMatMap lm(logits.data().data(), n, k);
    for (int r = 0; r < n; r++) {
      double mx = lm.row(r).maxCoeff();
      Eigen::ArrayXd e = (lm.row(r).array() - mx).exp();
      double z = e.sum();
      Eigen::Map<Eigen::ArrayXd>(probs->data() + static_cast<int64_t>(r) * k, k) = e / z;
      total += std::log(z) + mx - lm(r, targets[static_cast<size_t>(r)]);
    }
  }

  Node* pl = logits.node();
  auto tgt = std::make_shared<std::vector<int>>(targets);
  Tensor out = make_node({1}, {logits.ptr()}, [pl, n, k, probs, tgt](Node& nd) {
    if (!pl->needs_grad) return;
    pl->ensure_grad();
    double g = nd.grad[0] / n;
    MatMap gl(pl->grad.data(), n, k);
    ConstMatMap p(probs->data(), n, k);
    gl += g * p;
    for (int r = 0; r < n; r++) gl(r, (*tgt)[static_cast<size_t>(r)]) -= g;
  });
  out.data()[0] = total / n;
  return out;
}

Tensor sum(const Tensor& x) {
  Node* px = x.node();
  Tensor out = make_node({1}, {x.ptr()}, [px](Node& nd) {
    if (!px->needs_grad) return;
    px->ensure_grad();
    px->grad += nd.grad[0];
  });
  out.data()[0] = x.data().sum();
  return out;
}

Tensor mean(const Tensor& x) {
  Node* px = x.node();
  int64_t n = x.size();
  Tensor out = make_node({1}, {x.ptr()}, [px, n](Node& nd) {
    if (!px->needs_grad) return;
    px->ensure_grad();
    px->grad += nd.grad[0] / static_cast<double>(n);
  });
  out.data()[0] = x.data().mean();
  return out;
}

Tensor l2_normalize_rows(const Tensor& x) {
  check(x.ndim() == 2, "l2_normalize_rows: need 2-D input");
  int n = x.dim(0), d = x.dim(1);
  auto norms = std::make_shared<Eigen::ArrayXd>(n);
  {
    ConstMatMap xm(x.data().data(), n, d);
    for (int r = 0; r < n; r++) {
      double nr = xm.row(r).norm();
      check(nr > 0.0, "l2_normalize_rows: zero row");
      (*norms)[r] = nr;
    }
  }
  Node* px = x.node();
  Tensor out = make_node(x.shape(), {x.ptr()}, [px, n, d, norms](Node& nd) {
    if (!px->needs_grad) return;
    px->ensure_grad();
    ConstMatMap g(nd.grad.data(), n, d);
    ConstMatMap y(nd.value.data(), n, d);
    MatMap gx(px->grad.data(), n, d);
    for (int r = 0; r < n; r++) {
      double dot = (g.row(r).array() * y.row(r).array()).sum();
      gx.row(r).array() += (g.row(r).array() - y.row(r).array() * dot) / (*norms)[r];
    }
  });
  ConstMatMap xm(x.data().data(), n, d);
  MatMap o(out.data().data(), n, d);
  for (int r = 0; r < n; r++) o.row(r) = xm.row(r) / (*norms)[r];
  return out;
}

namespace {

// Bijective index map between image [C,H,W] and patch-token layout
// [S, C*ph*pw]; tokens scan the patch grid row-major, entries inside a
// token are (c, py, px) ordered.
std::shared_ptr<std::vector<int64_t>> patch_index_map(int c, int h, int w, int ph, int pw) {
  int gh = h / ph, gw = w / pw;
  auto map = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(c) * h * w);
  int64_t token_len = static_cast<int64_t>(c) * ph * pw;
  for (int gy = 0; gy < gh; gy++)
    for (int gx = 0; gx < gw; gx++) {
      int64_t token = static_cast<int64_t>(gy) * gw + gx;
      for (int ci = 0; ci < c; ci++)
        for (int py = 0; py < ph; py++)
          for (int px = 0; px < pw; px++) {
            int64_t img = (static_cast<int64_t>(ci) * h + (gy * ph + py)) * w + (gx * pw + px);
            int64_t tok = token * token_len + (static_cast<int64_t>(ci) * ph + py) * pw + px;
            (*map)[static_cast<size_t>(img)] = tok;
          }
    }
  return map;
}

}  // namespace

Tensor im2row(const Tensor& x, int ph, int pw) {
  check(x.ndim() == 4, "im2row: need [B,C,H,W] input");
  int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  check(h % ph == 0 && w % pw == 0, "im2row: patch size must divide spatial dims");
  int s = (h / ph) * (w / pw);
  int p = c * ph * pw;
  auto map = patch_index_map(c, h, w, ph, pw);
  int64_t plane = static_cast<int64_t>(c) * h * w;

  Node* px = x.node();
  Tensor out = make_node({b, s, p}, {x.ptr()}, [px, b, plane, map](Node& nd) {
    if (!px->needs_grad) return;
    px->ensure_grad();
    for (int i = 0; i < b; i++) {
      const double* g = nd.grad.data() + i * plane;
      double* gx = px->grad.data() + i * plane;
      for (int64_t j = 0; j < plane; j++) gx[j] += g[(*map)[static_cast<size_t>(j)]];
    }
  });
  for (int i = 0; i < b; i++) {
    const double* src = x.data().data() + i * plane;
    double* dst = out.data().data() + i * plane;
    for (int64_t j = 0; j < plane; j++) dst[(*map)[static_cast<size_t>(j)]] = src[j];
  }
  return out;
}

Tensor row2im(const Tensor& x, int channels, int height, int width, int ph, int pw) {
  check(x.ndim() == 3, "row2im: need [B,S,P] input");
  int b = x.dim(0);
  check(height % ph == 0 && width % pw == 0, "row2im: patch size must divide spatial dims");
  int s = (height / ph) * (width / pw);
  int p = channels * ph * pw;
  check(x.dim(1) == s && x.dim(2) == p, "row2im: token layout mismatch");
  auto map = patch_index_map(channels, height, width, ph, pw);
  int64_t plane = static_cast<int64_t>(channels) * height * width;

  Node* px = x.node();
  Tensor out = make_node({b, channels, height, width}, {x.ptr()}, [px, b, plane, map](Node& nd) {
    if (!px->needs_grad) return;
    px->ensure_grad();
    for (int i = 0; i < b; i++) {
      const double* g = nd.grad.data() + i * plane;
      double* gx = px->grad.data() + i * plane;
      for (int64_t j = 0; j < plane; j++) gx[(*map)[static_cast<size_t>(j)]] += g[j];
    }
  });
  for (int i = 0; i < b; i++) {
    const double* src = x.data().data() + i * plane;
    double* dst = out.data().data() + i * plane;
    for (int64_t j = 0; j < plane; j++) dst[j] = src[(*map)[static_cast<size_t>(j)]];
  }
  return out;
}

}  // namespace nncore

