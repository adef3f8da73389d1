#pragma once

#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "chanalign/nncore/ops.hpp"
#include "chanalign/nncore/tensor.hpp"

namespace nncore {

enum class Init { Zeros, Ones, TruncNormal };

// Named parameter registry with deterministic (insertion) iteration order.
class ParameterStore {
 public:
  explicit ParameterStore(uint64_t seed = 0) : rng_(seed) {}

  Tensor create(const std::string& name, std::vector<int> shape, Init init,
                double init_scale = 0.02);
  Tensor get(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) > 0; }

  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  int64_t total_parameters(const std::string& prefix = "") const;

  void zero_grad();
  void set_requires_grad(bool on, const std::string& prefix = "");
  bool all_grads_zero() const;

  // Raw little-endian parameter bytes, for bitwise equality checks.
  std::vector<unsigned char> raw_bytes() const;

 private:
  std::mt19937_64 rng_;
  std::vector<std::pair<std::string, Tensor>> items_;
  std::unordered_map<std::string, size_t> index_;
};

// token_linear: y = x W + b on the last dim.
struct Linear {
  Tensor w, b;
  Linear() = default;
  Linear(ParameterStore& ps, const std::string& prefix, int in, int out);
  Tensor forward(const Tensor& x) const { return bias_add(matmul(x, w), b); }
};

struct LayerNorm {
  Tensor gain, bias;
  LayerNorm() = default;
  LayerNorm(ParameterStore& ps, const std::string& prefix, int dim);
  Tensor forward(const Tensor& x) const { return layer_norm(x, gain, bias); }
};

// Self-attention over token sequences [B, S, D].
struct MultiHeadAttention {
  Linear qkv, proj;
  int heads = 1;
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& ps, const std::string& prefix, int dim, int heads);
  Tensor forward(const Tensor& x) const;
};

// Pre-norm residual attention block: x + MHA(LN(x)), then + FFN(LN(.)).
// The FFN is linear -> quickGELU -> linear with 4x expansion.
struct Rab {
  LayerNorm ln1, ln2;
  MultiHeadAttention attn;
  Linear ff1, ff2;
  Rab() = default;
  Rab(ParameterStore& ps, const std::string& prefix, int dim, int heads, int ffn_mult = 4);
  Tensor forward(const Tensor& x) const;
};

// Strided-convolution patch embedding: [B,C,H,W] -> [B, S, D] tokens.
struct PatchEmbed2d {
  Linear proj;
  int ph = 1, pw = 1;
  PatchEmbed2d() = default;
  PatchEmbed2d(ParameterStore& ps, const std::string& prefix, int in_ch, int ph, int pw, int dim);
  Tensor forward(const Tensor& x) const { return proj.forward(im2row(x, ph, pw)); }
};

}  // namespace nncore
