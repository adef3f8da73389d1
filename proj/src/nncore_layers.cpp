#include "chanalign/nncore/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace nncore {

Tensor ParameterStore::create(const std::string& name, std::vector<int> shape, Init init,
                              double init_scale) {
  if (index_.count(name)) throw std::invalid_argument("ParameterStore: duplicate name " + name);
  Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
  switch (init) {
    case Init::Zeros:
      break;
    case Init::Ones:
      t.data().setConstant(1.0);
      break;
    case Init::TruncNormal: {
      std::normal_distribution<double> dist(0.0, init_scale);
      for (int64_t i = 0; i < t.size(); i++) {
        double v;
        do {
          v = dist(rng_);
        } while (std::abs(v) > 2.0 * init_scale);
        t.data()[i] = v;
      }
      break;
    }
  }
  index_[name] = items_.size();
  items_.emplace_back(name, t);
  return t;
}

Tensor ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("ParameterStore: unknown name " + name);
  return items_[it->second].second;
}

int64_t ParameterStore::total_parameters(const std::string& prefix) const {
  int64_t n = 0;
  for (const auto& [name, t] : items_)
    if (name.rfind(prefix, 0) == 0) n += t.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [name, t] : items_)
    if (t.grad().size() > 0) t.grad().setZero();
}

void ParameterStore::set_requires_grad(bool on, const std::string& prefix) {
  for (auto& [name, t] : items_) {
    if (name.rfind(prefix, 0) != 0) continue;
    t.node()->requires_grad = on;
    t.node()->needs_grad = on;
  }
}

bool ParameterStore::all_grads_zero() const {
  for (const auto& [name, t] : items_)
    if (t.grad().size() > 0 && (t.grad() != 0.0).any()) return false;
  return true;
}

std::vector<unsigned char> ParameterStore::raw_bytes() const {
  std::vector<unsigned char> out;
  for (const auto& [name, t] : items_) {
    const auto* p = reinterpret_cast<const unsigned char*>(t.data().data());
    out.insert(out.end(), p, p + t.size() * sizeof(double));
  }
  return out;
}

Linear::Linear(ParameterStore& ps, const std::string& prefix, int in, int out) {
  w = ps.create(prefix + ".w", {in, out}, Init::TruncNormal);
  b = ps.create(prefix + ".b", {out}, Init::Zeros);
}

LayerNorm::LayerNorm(ParameterStore& ps, const std::string& prefix, int dim) {
  gain = ps.create(prefix + ".gain", {dim}, Init::Ones);
  bias = ps.create(prefix + ".bias", {dim}, Init::Zeros);
}

MultiHeadAttention::MultiHeadAttention(ParameterStore& ps, const std::string& prefix, int dim,
                                       int heads_)
    : heads(heads_) {
  if (dim % heads != 0)
    throw std::invalid_argument("MultiHeadAttention: head count must divide width");
  qkv = Linear(ps, prefix + ".qkv", dim, 3 * dim);
  proj = Linear(ps, prefix + ".proj", dim, dim);
}

Tensor MultiHeadAttention::forward(const Tensor& x) const {
  if (x.ndim() != 3) throw std::invalid_argument("MultiHeadAttention: need [B,S,D] input");
  int b = x.dim(0), s = x.dim(1), d = x.dim(2);
  int hd = d / heads;

  Tensor fused = qkv.forward(x);  // [B,S,3D]
  auto split_heads = [&](const Tensor& t) {
    return reshape(permute_0213(reshape(t, {b, s, heads, hd})), {b * heads, s, hd});
  };
  Tensor q = split_heads(slice_last(fused, 0, d));
  Tensor k = split_heads(slice_last(fused, d, 2 * d));
  Tensor v = split_heads(slice_last(fused, 2 * d, 3 * d));

  Tensor att = softmax_last(scale(bmm(q, transpose_last2(k)), 1.0 / std::sqrt(double(hd))));
  Tensor ctx = bmm(att, v);  // [B*H, S, hd]
  ctx = reshape(permute_0213(reshape(ctx, {b, heads, s, hd})), {b, s, d});
  return proj.forward(ctx);
}

Rab::Rab(ParameterStore& ps, const std::string& prefix, int dim, int heads, int ffn_mult) {
  ln1 = LayerNorm(ps, prefix + ".ln1", dim);
  attn = MultiHeadAttention(ps, prefix + ".attn", dim, heads);
  ln2 = LayerNorm(ps, prefix + ".ln2", dim);
  ff1 = Linear(ps, prefix + ".ff1", dim, ffn_mult * dim);
  ff2 = Linear(ps, prefix + ".ff2", ffn_mult * dim, dim);
}

Tensor Rab::forward(const Tensor& x) const {
  Tensor h = add(x, attn.forward(ln1.forward(x)));
  Tensor f = ff2.forward(quick_gelu(ff1.forward(ln2.forward(h))));
  return add(h, f);
}

PatchEmbed2d::PatchEmbed2d(ParameterStore& ps, const std::string& prefix, int in_ch, int ph_,
                           int pw_, int dim)
    : ph(ph_), pw(pw_) {
  proj = Linear(ps, prefix + ".proj", in_ch * ph * pw, dim);
}

}  // namespace nncore
