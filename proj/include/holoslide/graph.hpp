#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>

#include "holoslide/nn.hpp"

namespace holoslide {

// Named parameter tensors plus Adam moment state.
template <typename T>
struct ParamStore {
  struct Entry {
    std::string name;
    Tensor<T> value;
    Tensor<T> m, v;  // Adam moments, allocated on first update
    bool trainable = true;
  };

  std::vector<Entry> entries;
  std::map<std::string, std::size_t> index;

  Tensor<T>& add(const std::string& name, Tensor<T> value) {
    index.emplace(name, entries.size());
    entries.push_back(Entry{name, std::move(value), {}, {}, true});
    return entries.back().value;
  }
  Entry& entry(const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) fail(Errc::ConfigError, "unknown parameter " + name);
    return entries[it->second];
  }
  const Entry& entry(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) fail(Errc::ConfigError, "unknown parameter " + name);
    return entries[it->second];
  }
  Tensor<T>& value(const std::string& name) { return entry(name).value; }
  const Tensor<T>& value(const std::string& name) const { return entry(name).value; }
  bool all_finite() const {
    for (const Entry& e : entries)
      if (!e.value.all_finite()) return false;
    return true;
  }
};

// Reverse-mode tape. Nodes are appended in forward order; parents always have
// smaller ids, so one reverse sweep propagates every allocated gradient.
template <typename T>
class Tape {
 public:
  using BackFn = std::function<void(Tape&)>;

  int leaf(Tensor<T> value, bool needs_grad) {
    nodes_.push_back(Node{std::move(value), {}, nullptr, needs_grad});
    return int(nodes_.size()) - 1;
  }
  int push(Tensor<T> value, bool needs_grad, BackFn back) {
    nodes_.push_back(Node{std::move(value), {}, std::move(back), needs_grad});
    return int(nodes_.size()) - 1;
  }

  const Tensor<T>& val(int id) const { return nodes_[std::size_t(id)].value; }
  bool needs(int id) const { return nodes_[std::size_t(id)].needs; }

  Tensor<T>& grad(int id) {
    Node& n = nodes_[std::size_t(id)];
    if (!n.grad.defined()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }
  bool grad_defined(int id) const { return nodes_[std::size_t(id)].grad.defined(); }

  void backward(int root) {
    if (val(root).size() != 1) fail(Errc::ShapeError, "backward root must be scalar");
    grad(root)[0] = T(1);
    for (int id = root; id >= 0; --id) {
      Node& n = nodes_[std::size_t(id)];
      if (n.back && n.grad.defined()) n.back(*this);
    }
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    BackFn back;
    bool needs;
  };
  std::vector<Node> nodes_;
};

// The two engines behind the single model composition: TapeCtx records the
// graph for training, PlainCtx evaluates forward only with a small working
// set. Both produce identical values for identical inputs.
template <typename T>
struct PlainCtx {
  using Ref = std::shared_ptr<const Tensor<T>>;
  const ParamStore<T>* params = nullptr;

  static Ref wrap(Tensor<T> t) { return std::make_shared<const Tensor<T>>(std::move(t)); }
  const Tensor<T>& v(const Ref& r) const { return *r; }

  Ref constant(Tensor<T> t) { return wrap(std::move(t)); }
  Ref param(const std::string& name) {
    // aliases the stored tensor; the store outlives the forward pass
    return Ref(Ref{}, &params->value(name));
  }

  Ref matmul(Ref a, Ref b) { return wrap(nn::matmul(*a, *b)); }
  Ref add_bias(Ref x, Ref b) { return wrap(nn::add_bias(*x, *b)); }
  Ref add(Ref a, Ref b) { return wrap(nn::add(*a, *b)); }
  Ref relu(Ref x) { return wrap(nn::relu(*x)); }
  Ref layer_norm(Ref x, Ref g, Ref b) { return wrap(nn::layer_norm(*x, *g, *b, nullptr)); }
  Ref avg_pool2d(Ref x, std::size_t s) { return wrap(nn::avg_pool2d(*x, s)); }
  Ref upsample_nearest(Ref x, std::size_t s, std::size_t oh, std::size_t ow) {
    return wrap(nn::upsample_nearest(*x, s, oh, ow));
  }
  Ref space_to_depth2(Ref x) { return wrap(nn::space_to_depth2(*x)); }
  Ref relu_attention(Ref q, Ref k, Ref v, T eps) {
    return wrap(nn::relu_linear_attention(*q, *k, *v, eps, nullptr));
  }
  Ref softmax_attention(Ref q, Ref k, Ref v) {
    return wrap(nn::softmax_attention(*q, *k, *v, nullptr));
  }
  Ref embedding_tokens(Ref table, const Tensor<std::int32_t>& idx, Ref /*vq_value*/) {
    return wrap(nn::embedding(*table, idx));
  }
  Ref add_pos2d(Ref x, Ref prow, Ref pcol, std::size_t h, std::size_t w) {
    return wrap(nn::add_pos2d(*x, *prow, *pcol, h, w));
  }
  Ref col_slice(Ref x, std::size_t c0, std::size_t c1) {
    return wrap(nn::col_slice(*x, c0, c1));
  }
  Ref concat_cols(const std::vector<Ref>& parts) {
    std::size_t n = parts[0]->dim(0), total = 0;
    for (const Ref& p : parts) total += p->dim(1);
    Tensor<T> out({n, total});
    std::size_t off = 0;
    for (const Ref& p : parts) {
      const std::size_t c = p->dim(1);
      for (std::size_t i = 0; i < n; ++i)
        std::copy_n(p->data() + i * c, c, out.data() + i * total + off);
      off += c;
    }
    return wrap(std::move(out));
  }
  Ref weighted_sum(const std::vector<Ref>& items, Ref w) {
    Tensor<T> out(items[0]->shape());
    for (std::size_t s = 0; s < items.size(); ++s)
      num::axpy((*w)[s], items[s]->data(), out.data(), out.size());
    return wrap(std::move(out));
  }
  Ref blocks_to_pixels(Ref x, std::size_t hh, std::size_t ww, std::size_t block,
                       std::size_t channels) {
    return wrap(nn::blocks_to_pixels(*x, hh, ww, block, channels));
  }
  Ref crop2d(Ref x, std::size_t h, std::size_t w) { return wrap(nn::crop2d(*x, h, w)); }
  Ref sigmoid(Ref x) { return wrap(nn::sigmoid(*x)); }
  Ref reshape(Ref x, std::vector<std::size_t> shape) {
    return wrap(x->reshaped(std::move(shape)));
  }

  struct VqOut {
    Ref quantized;
    Tensor<std::int32_t> indices;
  };
  VqOut vq_quantize_st(Ref latent, Ref codebook, T /*beta*/) {
    const std::size_t n = latent->dim(0), d = latent->dim(1);
    const std::size_t count = codebook->dim(0);
    if (codebook->dim(1) != d) fail(Errc::ShapeError, "codebook dimension mismatch");
    Tensor<std::int32_t> idx({n});
    Tensor<T> zq({n, d});
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best;
      T dist;
      num::nearest_code(latent->data() + i * d, codebook->data(), count, d, &best, &dist);
      idx[i] = std::int32_t(best);
      std::copy_n(codebook->data() + best * d, d, zq.data() + i * d);
    }
    return VqOut{wrap(std::move(zq)), std::move(idx)};
  }

  Ref dice_bce(Ref probs, Ref gt, T lambda) {
    Tensor<T> out({1});
    out[0] = nn::dice_bce_loss(*probs, *gt, lambda);
    return wrap(std::move(out));
  }
  Ref mse(Ref a, Ref b) {
    Tensor<T> out({1});
    out[0] = nn::mse_loss(*a, *b);
    return wrap(std::move(out));
  }
};

template <typename T>
struct TapeCtx {
  using Ref = int;
  Tape<T>* tape = nullptr;
  ParamStore<T>* params = nullptr;
  bool train_tokenizer = true;
  std::map<std::string, int> param_leaves;

  const Tensor<T>& v(Ref r) const { return tape->val(r); }

  Ref constant(Tensor<T> t) { return tape->leaf(std::move(t), false); }
  Ref param(const std::string& name) {
    auto it = param_leaves.find(name);
    if (it != param_leaves.end()) return it->second;
    const int id = tape->leaf(params->value(name), true);
    param_leaves.emplace(name, id);
    return id;
  }
  // gradient of a parameter leaf after backward (zeros if untouched)
  Tensor<T> param_grad(const std::string& name) {
    auto it = param_leaves.find(name);
    if (it == param_leaves.end() || !tape->grad_defined(it->second))
      return Tensor<T>(params->value(name).shape());
    return tape->grad(it->second);
  }

  Ref matmul(Ref a, Ref b) {
    Tensor<T> out = nn::matmul(tape->val(a), tape->val(b));
    const bool needs = tape->needs(a) || tape->needs(b);
    const int self = int(tape->node_count());
    return tape->push(std::move(out), needs, [=](Tape<T>& t) {
      nn::matmul_bwd(t.val(a), t.val(b), t.grad(self), t.needs(a) ? &t.grad(a) : nullptr,
                     t.needs(b) ? &t.grad(b) : nullptr);
    });
  }

  Ref add_bias(Ref x, Ref b) {
    Tensor<T> out = nn::add_bias(tape->val(x), tape->val(b));
    const bool needs = tape->needs(x) || tape->needs(b);
    const std::size_t m = tape->val(b).size();
    const int self = int(tape->node_count());
    return tape->push(std::move(out), needs, [=](Tape<T>& t) {
      nn::add_bias_bwd(t.grad(self), m, t.needs(x) ? &t.grad(x) : nullptr,
                       t.needs(b) ? &t.grad(b) : nullptr);
    });
  }

  Ref add(Ref a, Ref b) {
    Tensor<T> out = nn::add(tape->val(a), tape->val(b));
    const bool needs = tape->needs(a) || tape->needs(b);
    const int self = int(tape->node_count());
    return tape->push(std::move(out), needs, [=](Tape<T>& t) {
      const Tensor<T>& g = t.grad(self);
      if (t.needs(a)) num::axpy(T(1), g.data(), t.grad(a).data(), g.size());
      if (t.needs(b)) num::axpy(T(1), g.data(), t.grad(b).data(), g.size());
    });
  }

  Ref relu(Ref x) {
    Tensor<T> out = nn::relu(tape->val(x));
    const int self = int(tape->node_count());
    return tape->push(std::move(out), tape->needs(x), [=](Tape<T>& t) {
      if (t.needs(x))
        num::relu_backward(t.val(x).data(), t.grad(self).data(), t.grad(x).data(),
                           t.val(x).size());
    });
  }

  Ref layer_norm(Ref x, Ref g, Ref b) {
    Tensor<T> xhat;
    Tensor<T> out = nn::layer_norm(tape->val(x), tape->val(g), tape->val(b), &xhat);
    const bool needs = tape->needs(x) || tape->needs(g) || tape->needs(b);
    auto saved = std::make_shared<Tensor<T>>(std::move(xhat));
    const int self = int(tape->node_count());
    return tape->push(std::move(out), needs, [=](Tape<T>& t) {
      nn::layer_norm_bwd(t.val(x), t.val(g), *saved, t.grad(self),
                         t.needs(x) ? &t.grad(x) : nullptr, t.needs(g) ? &t.grad(g) : nullptr,
                         t.needs(b) ? &t.grad(b) : nullptr);
    });
  }

  Ref avg_pool2d(Ref x, std::size_t s) {
    const auto& xv = tape->val(x);
    const std::size_t h = xv.dim(0), w = xv.dim(1), c = xv.dim(2);
    Tensor<T> out = nn::avg_pool2d(xv, s);
    const int self = int(tape->node_count());
    return tape->push(std::move(out), tape->needs(x), [=](Tape<T>& t) {
      if (t.needs(x)) nn::avg_pool2d_bwd(h, w, c, s, t.grad(self), &t.grad(x));
    });
  }

  Ref upsample_nearest(Ref x, std::size_t s, std::size_t oh, std::size_t ow) {
    Tensor<T> out = nn::upsample_nearest(tape->val(x), s, oh, ow);
    const int self = int(tape->node_count());
    return tape->push(std::move(out), tape->needs(x), [=](Tape<T>& t) {
      if (t.needs(x)) nn::upsample_nearest_bwd(s, t.grad(self), &t.grad(x));
    });
  }

  Ref space_to_depth2(Ref x) {
    const auto& xv = tape->val(x);
    const std::size_t h = xv.dim(0), w = xv.dim(1), c = xv.dim(2);
    Tensor<T> out = nn::space_to_depth2(xv);
    const int self = int(tape->node_count());
    return tape->push(std::move(out), tape->needs(x), [=](Tape<T>& t) {
      if (t.needs(x)) nn::space_to_depth2_bwd(h, w, c, t.grad(self), &t.grad(x));
    });
  }

  Ref relu_attention(Ref q, Ref k, Ref v, T eps) {
    auto aux = std::make_shared<nn::ReluAttnAux<T>>();
    Tensor<T> out = nn::relu_linear_attention(tape->val(q), tape->val(k), tape->val(v), eps,
                                              aux.get());
    const bool needs = tape->needs(q) || tape->needs(k) || tape->needs(v);
    const int self = int(tape->node_count());
    return tape->push(std::move(out), needs, [=](Tape<T>& t) {
      nn::relu_linear_attention_bwd(t.val(q), t.val(k), t.val(v), t.val(self), *aux,
                                    t.grad(self), t.needs(q) ? &t.grad(q) : nullptr,
                                    t.needs(k) ? &t.grad(k) : nullptr,
                                    t.needs(v) ? &t.grad(v) : nullptr);
    });
  }

  Ref softmax_attention(Ref q, Ref k, Ref v) {
    auto probs = std::make_shared<Tensor<T>>();
    Tensor<T> out = nn::softmax_attention(tape->val(q), tape->val(k), tape->val(v), probs.get());
    const bool needs = tape->needs(q) || tape->needs(k) || tape->needs(v);
    const int self = int(tape->node_count());
    return tape->push(std::move(out), needs, [=](Tape<T>& t) {
      nn::softmax_attention_bwd(t.val(q), t.val(k), t.val(v), *probs, t.grad(self),
                                t.needs(q) ? &t.grad(q) : nullptr,
                                t.needs(k) ? &t.grad(k) : nullptr,
                                t.needs(v) ? &t.grad(v) : nullptr);
    });
  }

  Ref embedding_tokens(Ref table, const Tensor<std::int32_t>& idx, Ref vq_value) {
    Tensor<T> out = nn::embedding(tape->val(table), idx);
    auto indices = std::make_shared<Tensor<std::int32_t>>(idx);
    const bool needs = tape->needs(table) || (vq_value >= 0 && tape->needs(vq_value));
    const int self = int(tape->node_count());
    return tape->push(std::move(out), needs, [=](Tape<T>& t) {
      if (t.needs(table)) nn::embedding_bwd(*indices, t.grad(self), &t.grad(table));
      // Indices carry no gradient, but touching the quantizer node lets the
      // codebook commitment pull fire when it would otherwise be dead code.
      if (vq_value >= 0 && t.needs(vq_value)) t.grad(vq_value);
    });
  }

  Ref add_pos2d(Ref x, Ref prow, Ref pcol, std::size_t h, std::size_t w) {
    Tensor<T> out = nn::add_pos2d(tape->val(x), tape->val(prow), tape->val(pcol), h, w);
    const bool needs = tape->needs(x) || tape->needs(prow) || tape->needs(pcol);
    const std::size_t c = tape->val(prow).dim(1);
    const int self = int(tape->node_count());
    return tape->push(std::move(out), needs, [=](Tape<T>& t) {
      nn::add_pos2d_bwd(t.grad(self), h, w, c, t.needs(x) ? &t.grad(x) : nullptr,
                        t.needs(prow) ? &t.grad(prow) : nullptr,
                        t.needs(pcol) ? &t.grad(pcol) : nullptr);
    });
  }

  Ref col_slice(Ref x, std::size_t c0, std::size_t c1) {
    const std::size_t c = tape->val(x).dim(1);
    Tensor<T> out = nn::col_slice(tape->val(x), c0, c1);
    const int self = int(tape->node_count());
    return tape->push(std::move(out), tape->needs(x), [=](Tape<T>& t) {
      if (t.needs(x)) nn::col_slice_bwd(t.grad(self), c, c0, &t.grad(x));
    });
  }

  Ref concat_cols(const std::vector<Ref>& parts) {
    const std::size_t n = tape->val(parts[0]).dim(0);
    std::size_t total = 0;
    bool needs = false;
    for (Ref p : parts) {
      total += tape->val(p).dim(1);
      needs = needs || tape->needs(p);
    }
    Tensor<T> out({n, total});
    std::size_t off = 0;
    std::vector<std::pair<Ref, std::size_t>> layout;
    for (Ref p : parts) {
      const std::size_t c = tape->val(p).dim(1);
      for (std::size_t i = 0; i < n; ++i)
        std::copy_n(tape->val(p).data() + i * c, c, out.data() + i * total + off);
      layout.emplace_back(p, off);
      off += c;
    }
    const int self = int(tape->node_count());
    return tape->push(std::move(out), needs, [=](Tape<T>& t) {
      const Tensor<T>& g = t.grad(self);
      for (const auto& [p, o] : layout) {
        if (!t.needs(p)) continue;
        const std::size_t c = t.val(p).dim(1);
        Tensor<T>& dp = t.grad(p);
        for (std::size_t i = 0; i < n; ++i)
          num::axpy(T(1), g.data() + i * total + o, dp.data() + i * c, c);
      }
    });
  }

  Ref weighted_sum(const std::vector<Ref>& items, Ref w) {
    Tensor<T> out(tape->val(items[0]).shape());
    bool needs = tape->needs(w);
    for (std::size_t s = 0; s < items.size(); ++s) {
      num::axpy(tape->val(w)[s], tape->val(items[s]).data(), out.data(), out.size());
      needs = needs || tape->needs(items[s]);
    }
    std::vector<Ref> saved = items;
    const int self = int(tape->node_count());
    return tape->push(std::move(out), needs, [=](Tape<T>& t) {
      const Tensor<T>& g = t.grad(self);
      for (std::size_t s = 0; s < saved.size(); ++s) {
        if (t.needs(saved[s]))
          num::axpy(t.val(w)[s], g.data(), t.grad(saved[s]).data(), g.size());
        if (t.needs(w)) t.grad(w)[s] += num::dot(g.data(), t.val(saved[s]).data(), g.size());
      }
    });
  }

  Ref blocks_to_pixels(Ref x, std::size_t hh, std::size_t ww, std::size_t block,
                       std::size_t channels) {
    Tensor<T> out = nn::blocks_to_pixels(tape->val(x), hh, ww, block, channels);
    const int self = int(tape->node_count());
    return tape->push(std::move(out), tape->needs(x), [=](Tape<T>& t) {
      if (t.needs(x)) nn::blocks_to_pixels_bwd(t.grad(self), hh, ww, block, channels, &t.grad(x));
    });
  }

  Ref crop2d(Ref x, std::size_t h, std::size_t w) {
    Tensor<T> out = nn::crop2d(tape->val(x), h, w);
    const int self = int(tape->node_count());
    return tape->push(std::move(out), tape->needs(x), [=](Tape<T>& t) {
      if (t.needs(x)) nn::crop2d_bwd(t.grad(self), &t.grad(x));
    });
  }

  Ref sigmoid(Ref x) {
    Tensor<T> out = nn::sigmoid(tape->val(x));
    const int self = int(tape->node_count());
    return tape->push(std::move(out), tape->needs(x), [=](Tape<T>& t) {
      if (t.needs(x)) nn::sigmoid_bwd(t.val(self), t.grad(self), &t.grad(x));
    });
  }

  Ref reshape(Ref x, std::vector<std::size_t> shape) {
    Tensor<T> out = tape->val(x).reshaped(shape);
    auto shp = std::make_shared<std::vector<std::size_t>>(tape->val(x).shape());
    const int self = int(tape->node_count());
    return tape->push(std::move(out), tape->needs(x), [=](Tape<T>& t) {
      if (t.needs(x))
        num::axpy(T(1), t.grad(self).data(), t.grad(x).data(), t.grad(self).size());
    });
  }

  struct VqOut {
    Ref quantized;
    Tensor<std::int32_t> indices;
  };
  VqOut vq_quantize_st(Ref latent, Ref codebook, T beta) {
    const Tensor<T>& z = tape->val(latent);
    const Tensor<T>& cb = tape->val(codebook);
    const std::size_t n = z.dim(0), d = z.dim(1), count = cb.dim(0);
    if (cb.dim(1) != d) fail(Errc::ShapeError, "codebook dimension mismatch");
    Tensor<std::int32_t> idx({n});
    Tensor<T> zq({n, d});
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best;
      T dist;
      num::nearest_code(z.data() + i * d, cb.data(), count, d, &best, &dist);
      idx[i] = std::int32_t(best);
      std::copy_n(cb.data() + best * d, d, zq.data() + i * d);
    }
    auto indices = std::make_shared<Tensor<std::int32_t>>(idx);
    const bool tok = train_tokenizer;
    const bool needs = tape->needs(latent) || tape->needs(codebook);
    const int self = int(tape->node_count());
    const int id = tape->push(std::move(zq), needs, [=](Tape<T>& t) {
      const Tensor<T>& g = t.grad(self);
      // straight-through: the upstream gradient passes to the latent unchanged
      if (t.needs(latent)) num::axpy(T(1), g.data(), t.grad(latent).data(), g.size());
      // commitment pull on the assigned codebook rows
      if (tok && t.needs(codebook)) {
        Tensor<T>& dcb = t.grad(codebook);
        const Tensor<T>& zv = t.val(latent);
        const Tensor<T>& zqv = t.val(self);
        for (std::size_t i = 0; i < n; ++i) {
          T* row = dcb.data() + std::size_t((*indices)[i]) * d;
          for (std::size_t j = 0; j < d; ++j)
            row[j] += beta * (zqv[i * d + j] - zv[i * d + j]);
        }
      }
    });
    return VqOut{id, std::move(idx)};
  }

  Ref dice_bce(Ref probs, Ref gt, T lambda) {
    Tensor<T> out({1});
    out[0] = nn::dice_bce_loss(tape->val(probs), tape->val(gt), lambda);
    const int self = int(tape->node_count());
    return tape->push(std::move(out), tape->needs(probs), [=](Tape<T>& t) {
      if (t.needs(probs))
        nn::dice_bce_loss_bwd(t.val(probs), t.val(gt), lambda, t.grad(self)[0], &t.grad(probs));
    });
  }

  Ref mse(Ref a, Ref b) {
    Tensor<T> out({1});
    out[0] = nn::mse_loss(tape->val(a), tape->val(b));
    const bool needs = tape->needs(a) || tape->needs(b);
    const int self = int(tape->node_count());
    return tape->push(std::move(out), needs, [=](Tape<T>& t) {
      if (t.needs(a)) nn::mse_loss_bwd(t.val(a), t.val(b), t.grad(self)[0], &t.grad(a));
      if (t.needs(b)) nn::mse_loss_bwd(t.val(b), t.val(a), t.grad(self)[0], &t.grad(b));
    });
  }
};

}  // namespace holoslide
