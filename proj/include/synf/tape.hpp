#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "synf/params.hpp"

namespace synf {

class Tape;

// Value plus a handle into the tape. id < 0 marks a constant (no node).
// Implicitly constructible from double so mixed expressions read naturally.
// Default construction is trivial (uninitialized) so the hot path can place
// large scratch arrays on the stack for free.
struct Var {
  double v;
  int32_t id;
  Tape* tape;

  Var() = default;
  Var(double value) : v(value), id(-1), tape(nullptr) {}  // NOLINT: implicit
  bool is_const() const { return id < 0; }
};

namespace detail {

enum class Op : uint8_t {
  kLeaf,        // a0 = flat param slot, or -1 for a plain input
  kGeneric,     // up to 2 inline args with precomputed partials
  kPoly,        // n args in the poly pools, a0 = pool offset
  kBlockSlot,   // output of a block op; the owner (last output) backprops
  kQuad,        // bilinear gather over 4 param corners, a0 = record index
  kOct,         // trilinear gather over 8 param corners, a0 = record index
  kLinear,      // y = W x + b over param W, b; a0 = record index
  kPlaneStack,  // fused six-plane bilinear gather + product, a0 = record
};

struct Node {
  Op op = Op::kGeneric;
  uint8_t n = 0;
  int32_t a0 = -1;
  int32_t a1 = -1;
  double p0 = 0.0;
  double p1 = 0.0;
};

// out[c] = w00*P[c00+c] + w01*P[c01+c] + w10*P[c10+c] + w11*P[c11+c].
// When frac >= 0 the column weights depend on a variable fraction f:
//   w*0 = s* * (1 - f),  w*1 = s* * f
// and the backward pass re-derives d(out)/d(f) from the stored param values.
struct QuadRec {
  int64_t c00, c01, c10, c11;
  double w00, w01, w10, w11;
  double sa = 0.0, sb = 0.0;
  int32_t frac = -1;
  int32_t first_out = 0;
  int32_t dim = 0;
};

struct OctRec {
  int64_t c[8];
  double w[8];
  int32_t first_out = 0;
  int32_t dim = 0;
};

struct LinearRec {
  int64_t w_slot = 0;  // row-major [n_out][n_in]
  int64_t b_slot = -1;
  int32_t n_in = 0, n_out = 0;
  int32_t x_off = 0;  // into x_ids_/x_vals_ pools
  int32_t first_out = 0;
};

// The whole six-plane gather-and-fuse for one sample as a single op:
// out[c] = prod_p F_p[c] with F_p[c] the bilinear blend on plane p. Planes
// 3..5 carry time on their second axis and share one fraction variable.
// Forward saves the per-plane features so backward can form the product
// partials without re-gathering.
struct PlaneStackRec {
  int64_t corner[6][4];  // channel-0 slots: c00, c01, c10, c11
  double w[6][4];        // blend weights at forward time
  double sa[3], sb[3];   // row weights of the time planes
  int32_t frac = -1;     // shared time fraction node, or -1 when saturated
  int32_t first_out = 0;
  int32_t dim = 0;
  int32_t feat_off = 0;  // into the feature pool: 6*dim saved values
};

}  // namespace detail

// Reverse-mode tape for one ray (or one small forward pass). Records the
// operation graph during forward evaluation with local partials; backward is
// a single reverse sweep that accumulates parameter gradients into a caller
// supplied flat buffer. Reset between rays; capacity is retained.
class Tape {
 public:
  explicit Tape(const ParameterStore* store) : store_(store) {}

  void reset() {
    nodes_.clear();
    poly_ids_.clear();
    poly_partials_.clear();
    quads_.clear();
    octs_.clear();
    linears_.clear();
    plane_stacks_.clear();
    plane_feats_.clear();
    x_ids_.clear();
    x_vals_.clear();
  }

  size_t size() const { return nodes_.size(); }
  const ParameterStore& store() const { return *store_; }

  // Differentiable input leaf (not a parameter; grad queryable after backward).
  Var input(double v) {
    detail::Node nd;
    nd.op = detail::Op::kLeaf;
    nd.a0 = -1;
    return push(nd, v);
  }

  // Parameter leaf reading the store's current value.
  Var param(int64_t slot) {
    detail::Node nd;
    nd.op = detail::Op::kLeaf;
    nd.a0 = static_cast<int32_t>(slot);
    return push(nd, store_->data()[slot]);
  }

  Var make1(double val, Var a, double pa) {
    if (a.id < 0) return Var(val);
    detail::Node nd;
    nd.n = 1;
    nd.a0 = a.id;
    nd.p0 = pa;
    return push(nd, val);
  }

  Var make2(double val, Var a, double pa, Var b, double pb) {
    detail::Node nd;
    if (a.id >= 0 && b.id >= 0) {
      nd.n = 2;
      nd.a0 = a.id;
      nd.p0 = pa;
      nd.a1 = b.id;
      nd.p1 = pb;
    } else if (a.id >= 0) {
      nd.n = 1;
      nd.a0 = a.id;
      nd.p0 = pa;
    } else if (b.id >= 0) {
      nd.n = 1;
      nd.a0 = b.id;
      nd.p0 = pb;
    } else {
      return Var(val);
    }
    return push(nd, val);
  }

  // Product of n factors as one node; partial for factor j is the product of
  // the others (prefix*suffix, so zeros are handled exactly).
  Var product(const Var* f, int n) {
    double suffix[16];
    double acc = 1.0;
    for (int i = n - 1; i >= 0; --i) {
      suffix[i] = acc;
      acc *= f[i].v;
    }
    detail::Node nd;
    nd.op = detail::Op::kPoly;
    nd.a0 = static_cast<int32_t>(poly_ids_.size());
    double prefix = 1.0;
    for (int i = 0; i < n; ++i) {
      if (f[i].id >= 0) {
        poly_ids_.push_back(f[i].id);
        poly_partials_.push_back(prefix * suffix[i]);
        ++nd.n;
      }
      prefix *= f[i].v;
    }
    // prefix is the left-to-right product: matches the double-mode order.
    if (nd.n == 0) return Var(prefix);
    return push(nd, prefix);
  }

  Var make3(double val, Var a, double pa, Var b, double pb, Var c, double pc) {
    const Var* vs[3] = {&a, &b, &c};
    const double ps[3] = {pa, pb, pc};
    detail::Node nd;
    nd.op = detail::Op::kPoly;
    nd.a0 = static_cast<int32_t>(poly_ids_.size());
    for (int k = 0; k < 3; ++k) {
      if (vs[k]->id < 0) continue;
      poly_ids_.push_back(vs[k]->id);
      poly_partials_.push_back(ps[k]);
      ++nd.n;
    }
    if (nd.n == 0) return Var(val);
    return push(nd, val);
  }

  // Bilinear gather with constant weights (spatial planes; x is not trainable).
  void quad_const(int64_t c00, int64_t c01, int64_t c10, int64_t c11,
                  double w00, double w01, double w10, double w11, int dim,
                  Var* out) {
    detail::QuadRec rec;
    rec.c00 = c00;
    rec.c01 = c01;
    rec.c10 = c10;
    rec.c11 = c11;
    rec.w00 = w00;
    rec.w01 = w01;
    rec.w10 = w10;
    rec.w11 = w11;
    rec.frac = -1;
    emit_quad(rec, dim, out);
  }

  // Bilinear gather where the second axis fraction is a tape variable
  // (time-carrying planes; d(out)/d(frac) flows back into the time offset).
  void quad_timevar(int64_t c00, int64_t c01, int64_t c10, int64_t c11,
                    double sa, double sb, Var frac, int dim, Var* out) {
    detail::QuadRec rec;
    rec.c00 = c00;
    rec.c01 = c01;
    rec.c10 = c10;
    rec.c11 = c11;
    const double f = frac.v;
    rec.w00 = sa * (1.0 - f);
    rec.w01 = sa * f;
    rec.w10 = sb * (1.0 - f);
    rec.w11 = sb * f;
    rec.sa = sa;
    rec.sb = sb;
    rec.frac = frac.id;  // may be -1 when the fraction saturated to a constant
    emit_quad(rec, dim, out);
  }

  void oct_const(const int64_t corners[8], const double weights[8], int dim,
                 Var* out) {
    detail::OctRec rec;
    for (int k = 0; k < 8; ++k) {
      rec.c[k] = corners[k];
      rec.w[k] = weights[k];
    }
    rec.dim = dim;
    rec.first_out = emit_block_slots(dim, out);
    const double* pv = store_->data();
    for (int c = 0; c < dim; ++c) {
      double acc = 0.0;
      for (int k = 0; k < 8; ++k) acc += rec.w[k] * pv[rec.c[k] + c];
      out[c].v = acc;
    }
    nodes_.back().op = detail::Op::kOct;
    nodes_.back().a0 = static_cast<int32_t>(octs_.size());
    octs_.push_back(rec);
  }

  // y = W x + b. Inputs may mix tape variables and constants.
  void linear(int64_t w_slot, int64_t b_slot, int n_in, int n_out,
              const Var* x, Var* y) {
    detail::LinearRec rec;
    rec.w_slot = w_slot;
    rec.b_slot = b_slot;
    rec.n_in = n_in;
    rec.n_out = n_out;
    rec.x_off = static_cast<int32_t>(x_ids_.size());
    for (int i = 0; i < n_in; ++i) {
      x_ids_.push_back(x[i].id);
      x_vals_.push_back(x[i].v);
    }
    rec.first_out = emit_block_slots(n_out, y);
    const double* pv = store_->data();
    const double* xv = x_vals_.data() + rec.x_off;
    for (int o = 0; o < n_out; ++o) {
      const double* wrow = pv + w_slot + static_cast<int64_t>(o) * n_in;
      double acc = b_slot >= 0 ? pv[b_slot + o] : 0.0;
      for (int i = 0; i < n_in; ++i) acc += wrow[i] * xv[i];
      y[o].v = acc;
    }
    nodes_.back().op = detail::Op::kLinear;
    nodes_.back().a0 = static_cast<int32_t>(linears_.size());
    linears_.push_back(rec);
  }

  // Fused six-plane sample: the caller provides cell corners and weights per
  // plane (time planes via row weights + the shared fraction variable).
  void plane_stack(const detail::PlaneStackRec& proto, int dim, Var* out) {
    detail::PlaneStackRec rec = proto;
    rec.dim = dim;
    rec.feat_off = static_cast<int32_t>(plane_feats_.size());
    plane_feats_.resize(plane_feats_.size() + 6 * dim);
    double* feats = plane_feats_.data() + rec.feat_off;
    const double* pv = store_->data();
    for (int p = 0; p < 6; ++p) {
      double* fp = feats + p * dim;
      for (int c = 0; c < dim; ++c) {
        fp[c] = rec.w[p][0] * pv[rec.corner[p][0] + c] +
                rec.w[p][1] * pv[rec.corner[p][1] + c] +
                rec.w[p][2] * pv[rec.corner[p][2] + c] +
                rec.w[p][3] * pv[rec.corner[p][3] + c];
      }
    }
    rec.first_out = emit_block_slots(dim, out);
    for (int c = 0; c < dim; ++c) {
      out[c].v = feats[c] * feats[dim + c] * feats[2 * dim + c] *
                 feats[3 * dim + c] * feats[4 * dim + c] * feats[5 * dim + c];
    }
    nodes_.back().op = detail::Op::kPlaneStack;
    nodes_.back().a0 = static_cast<int32_t>(plane_stacks_.size());
    plane_stacks_.push_back(rec);
  }

  // Reverse sweep from `loss`, seeding d(loss)/d(loss) = seed. Parameter
  // gradients are accumulated (+=) into grad_buf, which must have
  // store.total_size() entries. Node order fixes the accumulation order, so
  // results are bit-reproducible.
  void backward(Var loss, double seed, std::span<double> grad_buf) {
    assert(loss.id >= 0 && loss.tape == this);
    grads_.assign(nodes_.size(), 0.0);
    grads_[loss.id] = seed;
    const double* pv = store_->data();
    double* gb = grad_buf.data();
    for (int32_t i = loss.id; i >= 0; --i) {
      const detail::Node& nd = nodes_[i];
      switch (nd.op) {
        case detail::Op::kBlockSlot:
          break;
        case detail::Op::kLeaf: {
          const double g = grads_[i];
          if (g != 0.0 && nd.a0 >= 0) gb[nd.a0] += g;
          break;
        }
        case detail::Op::kGeneric: {
          const double g = grads_[i];
          if (g == 0.0) break;
          if (nd.n >= 1) grads_[nd.a0] += nd.p0 * g;
          if (nd.n == 2) grads_[nd.a1] += nd.p1 * g;
          break;
        }
        case detail::Op::kPoly: {
          const double g = grads_[i];
          if (g == 0.0) break;
          for (int k = 0; k < nd.n; ++k)
            grads_[poly_ids_[nd.a0 + k]] += poly_partials_[nd.a0 + k] * g;
          break;
        }
        case detail::Op::kQuad: {
          const detail::QuadRec& r = quads_[nd.a0];
          double fgrad = 0.0;
          for (int c = 0; c < r.dim; ++c) {
            const double g = grads_[r.first_out + c];
            if (g == 0.0) continue;
            gb[r.c00 + c] += r.w00 * g;
            gb[r.c01 + c] += r.w01 * g;
            gb[r.c10 + c] += r.w10 * g;
            gb[r.c11 + c] += r.w11 * g;
            if (r.frac >= 0)
              fgrad += g * (r.sa * (pv[r.c01 + c] - pv[r.c00 + c]) +
                            r.sb * (pv[r.c11 + c] - pv[r.c10 + c]));
          }
          if (r.frac >= 0 && fgrad != 0.0) grads_[r.frac] += fgrad;
          break;
        }
        case detail::Op::kOct: {
          const detail::OctRec& r = octs_[nd.a0];
          for (int c = 0; c < r.dim; ++c) {
            const double g = grads_[r.first_out + c];
            if (g == 0.0) continue;
            for (int k = 0; k < 8; ++k) gb[r.c[k] + c] += r.w[k] * g;
          }
          break;
        }
        case detail::Op::kPlaneStack: {
          const detail::PlaneStackRec& r = plane_stacks_[nd.a0];
          const double* feats = plane_feats_.data() + r.feat_off;
          double fgrad = 0.0;
          for (int c = 0; c < r.dim; ++c) {
            const double g = grads_[r.first_out + c];
            if (g == 0.0) continue;
            // Product partials per plane via prefix/suffix (exact with zeros).
            double suffix[6];
            double acc = 1.0;
            for (int p = 5; p >= 0; --p) {
              suffix[p] = acc;
              acc *= feats[p * r.dim + c];
            }
            double prefix = 1.0;
            for (int p = 0; p < 6; ++p) {
              const double dp = g * prefix * suffix[p];
              prefix *= feats[p * r.dim + c];
              if (dp == 0.0) continue;
              gb[r.corner[p][0] + c] += dp * r.w[p][0];
              gb[r.corner[p][1] + c] += dp * r.w[p][1];
              gb[r.corner[p][2] + c] += dp * r.w[p][2];
              gb[r.corner[p][3] + c] += dp * r.w[p][3];
              if (p >= 3 && r.frac >= 0) {
                const int tp = p - 3;
                fgrad += dp * (r.sa[tp] * (pv[r.corner[p][1] + c] -
                                           pv[r.corner[p][0] + c]) +
                               r.sb[tp] * (pv[r.corner[p][3] + c] -
                                           pv[r.corner[p][2] + c]));
              }
            }
          }
          if (r.frac >= 0 && fgrad != 0.0) grads_[r.frac] += fgrad;
          break;
        }
        case detail::Op::kLinear: {
          const detail::LinearRec& r = linears_[nd.a0];
          const int32_t* xid = x_ids_.data() + r.x_off;
          const double* xv = x_vals_.data() + r.x_off;
          for (int o = 0; o < r.n_out; ++o) {
            const double g = grads_[r.first_out + o];
            if (g == 0.0) continue;
            if (r.b_slot >= 0) gb[r.b_slot + o] += g;
            const int64_t row = r.w_slot + static_cast<int64_t>(o) * r.n_in;
            const double* wrow = pv + row;
            double* grow = gb + row;
            for (int i2 = 0; i2 < r.n_in; ++i2) {
              grow[i2] += g * xv[i2];
              if (xid[i2] >= 0) grads_[xid[i2]] += g * wrow[i2];
            }
          }
          break;
        }
      }
    }
  }

  // d(loss)/d(x) for a tape variable, valid after backward().
  double grad_of(Var x) const { return x.id >= 0 ? grads_[x.id] : 0.0; }

 private:
  Var push(const detail::Node& nd, double val) {
    nodes_.push_back(nd);
    Var r;
    r.v = val;
    r.id = static_cast<int32_t>(nodes_.size()) - 1;
    r.tape = this;
    return r;
  }

  // Appends `dim` consecutive BlockSlot nodes and hands out their ids; the
  // caller fills values and re-tags the last node as the block owner.
  int32_t emit_block_slots(int dim, Var* out) {
    const size_t first = nodes_.size();
    nodes_.resize(first + dim);
    for (int c = 0; c < dim; ++c) {
      detail::Node& nd = nodes_[first + c];
      nd.op = detail::Op::kBlockSlot;
      nd.n = 0;
      out[c].id = static_cast<int32_t>(first + c);
      out[c].tape = this;
    }
    return static_cast<int32_t>(first);
  }

  void emit_quad(detail::QuadRec rec, int dim, Var* out) {
    rec.dim = dim;
    rec.first_out = emit_block_slots(dim, out);
    const double* pv = store_->data();
    for (int c = 0; c < dim; ++c) {
      out[c].v = rec.w00 * pv[rec.c00 + c] + rec.w01 * pv[rec.c01 + c] +
                 rec.w10 * pv[rec.c10 + c] + rec.w11 * pv[rec.c11 + c];
    }
    nodes_.back().op = detail::Op::kQuad;
    nodes_.back().a0 = static_cast<int32_t>(quads_.size());
    quads_.push_back(rec);
  }

  const ParameterStore* store_;
  std::vector<detail::Node> nodes_;
  std::vector<double> grads_;
  std::vector<int32_t> poly_ids_;
  std::vector<double> poly_partials_;
  std::vector<detail::QuadRec> quads_;
  std::vector<detail::OctRec> octs_;
  std::vector<detail::LinearRec> linears_;
  std::vector<detail::PlaneStackRec> plane_stacks_;
  std::vector<double> plane_feats_;
  std::vector<int32_t> x_ids_;
  std::vector<double> x_vals_;
};

namespace detail {
inline Tape* pick(const Var& a, const Var& b) {
  return a.tape ? a.tape : b.tape;
}
}  // namespace detail

inline Var operator+(Var a, Var b) {
  Tape* t = detail::pick(a, b);
  if (!t) return Var(a.v + b.v);
  return t->make2(a.v + b.v, a, 1.0, b, 1.0);
}
inline Var operator-(Var a, Var b) {
  Tape* t = detail::pick(a, b);
  if (!t) return Var(a.v - b.v);
  return t->make2(a.v - b.v, a, 1.0, b, -1.0);
}
inline Var operator*(Var a, Var b) {
  Tape* t = detail::pick(a, b);
  if (!t) return Var(a.v * b.v);
  return t->make2(a.v * b.v, a, b.v, b, a.v);
}
inline Var operator/(Var a, Var b) {
  Tape* t = detail::pick(a, b);
  if (!t) return Var(a.v / b.v);
  return t->make2(a.v / b.v, a, 1.0 / b.v, b, -a.v / (b.v * b.v));
}
inline Var operator-(Var a) {
  if (!a.tape) return Var(-a.v);
  return a.tape->make1(-a.v, a, -1.0);
}
inline Var& operator+=(Var& a, Var b) { return a = a + b; }

inline Var sin(Var a) {
  if (!a.tape) return Var(std::sin(a.v));
  return a.tape->make1(std::sin(a.v), a, std::cos(a.v));
}
inline Var cos(Var a) {
  if (!a.tape) return Var(std::cos(a.v));
  return a.tape->make1(std::cos(a.v), a, -std::sin(a.v));
}
inline Var exp(Var a) {
  const double e = std::exp(a.v);
  if (!a.tape) return Var(e);
  return a.tape->make1(e, a, e);
}
inline Var log(Var a) {
  if (!a.tape) return Var(std::log(a.v));
  return a.tape->make1(std::log(a.v), a, 1.0 / a.v);
}
inline Var sqrt(Var a) {
  const double s = std::sqrt(a.v);
  if (!a.tape) return Var(s);
  return a.tape->make1(s, a, 0.5 / s);
}
inline Var tanh(Var a) {
  const double th = std::tanh(a.v);
  if (!a.tape) return Var(th);
  return a.tape->make1(th, a, 1.0 - th * th);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline Var sigmoid(Var a) {
  const double s = sigmoid(a.v);
  if (!a.tape) return Var(s);
  return a.tape->make1(s, a, s * (1.0 - s));
}

inline double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}
inline Var softplus(Var a) {
  const double s = softplus(a.v);
  if (!a.tape) return Var(s);
  return a.tape->make1(s, a, sigmoid(a.v));
}

inline double lerp(double a, double b, double w) { return a + w * (b - a); }
inline Var lerp(Var a, Var b, Var w) {
  Tape* t = a.tape ? a.tape : (b.tape ? b.tape : w.tape);
  const double val = a.v + w.v * (b.v - a.v);
  if (!t) return Var(val);
  return t->make3(val, a, 1.0 - w.v, b, w.v, w, b.v - a.v);
}

// a*b + c as a single node.
inline double madd(double a, double b, double c) { return a * b + c; }
inline Var madd(Var a, Var b, Var c) {
  Tape* t = a.tape ? a.tape : (b.tape ? b.tape : c.tape);
  const double val = a.v * b.v + c.v;
  if (!t) return Var(val);
  return t->make3(val, a, b.v, b, a.v, c, 1.0);
}

inline double value_of(double x) { return x; }
inline double value_of(const Var& x) { return x.v; }

}  // namespace synf
