#include "vaot/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace vaot {

const Tape::Node& Tape::node(NodeId id) const {
  check(id >= 0 && id < static_cast<NodeId>(nodes_.size()), "tape: bad node id");
  return nodes_[id];
}

Tape::Node& Tape::node(NodeId id) {
  check(id >= 0 && id < static_cast<NodeId>(nodes_.size()), "tape: bad node id");
  return nodes_[id];
}

NodeId Tape::leaf(Tensor v, bool requires_grad) {
  check(v.all_finite(), "tape: leaf holds non-finite values");
  Node n;
  n.tag = requires_grad ? "leaf" : "const";
  n.value = std::move(v);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size()) - 1;
}

NodeId Tape::emit(const char* tag, Tensor value, std::vector<NodeId> inputs, VjpFn vjp) {
  Node n;
  n.tag = tag;
  n.value = std::move(value);
  n.inputs = std::move(inputs);
  n.vjp = std::move(vjp);
  for (NodeId i : n.inputs) n.requires_grad |= node(i).requires_grad;
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size()) - 1;
}

std::vector<NodeId> Tape::walk(NodeId root, const std::vector<char>& need) {
  const NodeId n0 = static_cast<NodeId>(need.size());
  std::vector<NodeId> gmap(n0, -1);
  gmap[root] = constant(Tensor::scalar(1.0));
  for (NodeId id = root; id >= 0; --id) {
    if (gmap[id] < 0) continue;
    std::vector<NodeId> inputs = nodes_[id].inputs;
    if (inputs.empty()) continue;
    std::vector<char> nd(inputs.size(), 0);
    bool any = false;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      nd[i] = need[inputs[i]];
      any |= (nd[i] != 0);
    }
    if (!any) continue;
    VjpFn vjp = nodes_[id].vjp;
    check(static_cast<bool>(vjp), std::string("tape: op '") + nodes_[id].tag +
                                      "' has no vjp but gradient was requested");
    std::vector<NodeId> gin(inputs.size(), -1);
    vjp(*this, id, gmap[id], nd, gin);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (gin[i] < 0) continue;
      NodeId inp = inputs[i];
      gmap[inp] = gmap[inp] < 0 ? gin[i] : vaot::add(*this, gmap[inp], gin[i]);
    }
  }
  return gmap;
}

void Tape::backward(NodeId root) {
  check(!backward_done_, "tape: backward called twice without reset_grads");
  check(value(root).is_scalar(), "tape: backward root must be scalar");
  const NodeId n0 = static_cast<NodeId>(nodes_.size());
  std::vector<char> need(n0, 0);
  for (NodeId id = 0; id < n0; ++id) need[id] = nodes_[id].requires_grad;
  std::vector<NodeId> gmap = walk(root, need);
  // grads are stored for requires-grad leaves (and the root itself);
  // intermediate gradients stay reachable as nodes via backward_graph.
  for (NodeId id = 0; id < n0; ++id) {
    Node& nd = nodes_[id];
    bool is_leaf = nd.inputs.empty();
    if (!(nd.requires_grad && (is_leaf || id == root))) continue;
    nd.grad = gmap[id] >= 0 ? value(gmap[id]) : Tensor::zeros(nd.value.shape());
    nd.has_grad = true;
  }
  if (!nodes_[root].has_grad) {
    nodes_[root].grad = Tensor::scalar(1.0);
    nodes_[root].has_grad = true;
  }
  backward_done_ = true;
}

std::vector<NodeId> Tape::backward_graph(NodeId root, const std::vector<NodeId>& wrt) {
  check(value(root).is_scalar(), "tape: backward_graph root must be scalar");
  const NodeId n0 = static_cast<NodeId>(nodes_.size());
  std::vector<char> need(n0, 0);
  NodeId lo = n0;
  for (NodeId w : wrt) {
    check(w >= 0 && w < n0, "tape: backward_graph wrt id out of range");
    need[w] = 1;
    lo = std::min(lo, w);
  }
  for (NodeId id = lo; id < n0; ++id) {
    if (need[id]) continue;
    for (NodeId i : nodes_[id].inputs)
      if (need[i]) {
        need[id] = 1;
        break;
      }
  }
  std::vector<NodeId> gmap = walk(root, need);
  std::vector<NodeId> out;
  out.reserve(wrt.size());
  for (NodeId w : wrt)
    out.push_back(gmap[w] >= 0 ? gmap[w] : constant(Tensor::zeros(value(w).shape())));
  return out;
}

void Tape::reset_grads() {
  for (Node& n : nodes_) {
    n.grad = Tensor();
    n.has_grad = false;
  }
  backward_done_ = false;
}

const Tensor& Tape::grad(NodeId id) const {
  const Node& n = node(id);
  check(n.has_grad, "tape: grad not populated for this node (run backward first)");
  return n.grad;
}

// ---------------------------------------------------------------------------
// elementwise helpers

static void check_same_shape(const Tape& t, NodeId a, NodeId b, const char* op) {
  check(t.value(a).same_shape(t.value(b)),
        std::string(op) + ": shape mismatch " + shape_str(t.value(a).shape()) + " vs " +
            shape_str(t.value(b).shape()));
}

template <class F>
static Tensor map_values(const Tensor& a, F f) {
  Tensor out = a;
  out.flat() = a.flat().unaryExpr(f);
  return out;
}

NodeId add(Tape& t, NodeId a, NodeId b) {
  check_same_shape(t, a, b, "add");
  Tensor v = t.value(a);
  v.flat() += t.value(b).flat();
  return t.emit("add", std::move(v), {a, b},
                [](Tape& tt, NodeId, NodeId g, const std::vector<char>& need,
                   std::vector<NodeId>& gin) {
                  if (need[0]) gin[0] = g;
                  if (need[1]) gin[1] = g;
                });
}

NodeId sub(Tape& t, NodeId a, NodeId b) {
  check_same_shape(t, a, b, "sub");
  Tensor v = t.value(a);
  v.flat() -= t.value(b).flat();
  return t.emit("sub", std::move(v), {a, b},
                [](Tape& tt, NodeId, NodeId g, const std::vector<char>& need,
                   std::vector<NodeId>& gin) {
                  if (need[0]) gin[0] = g;
                  if (need[1]) gin[1] = scalar_mul(tt, g, -1.0);
                });
}

NodeId mul(Tape& t, NodeId a, NodeId b) {
  check_same_shape(t, a, b, "mul");
  Tensor v = t.value(a);
  v.flat() *= t.value(b).flat();
  return t.emit("mul", std::move(v), {a, b},
                [a, b](Tape& tt, NodeId, NodeId g, const std::vector<char>& need,
                       std::vector<NodeId>& gin) {
                  if (need[0]) gin[0] = mul(tt, g, b);
                  if (need[1]) gin[1] = mul(tt, g, a);
                });
}

NodeId div(Tape& t, NodeId a, NodeId b) {
  check_same_shape(t, a, b, "div");
  Tensor v = t.value(a);
  v.flat() /= t.value(b).flat();
  return t.emit("div", std::move(v), {a, b},
                [a, b](Tape& tt, NodeId self, NodeId g, const std::vector<char>& need,
                       std::vector<NodeId>& gin) {
                  if (need[0]) gin[0] = div(tt, g, b);
                  if (need[1]) gin[1] = scalar_mul(tt, mul(tt, g, div(tt, self, b)), -1.0);
                });
}

NodeId scalar_mul(Tape& t, NodeId a, double c) {
  Tensor v = t.value(a);
  v.flat() *= c;
  return t.emit("scalar_mul", std::move(v), {a},
                [c](Tape& tt, NodeId, NodeId g, const std::vector<char>& need,
                    std::vector<NodeId>& gin) {
                  if (need[0]) gin[0] = scalar_mul(tt, g, c);
                });
}

NodeId add_scalar(Tape& t, NodeId a, double c) {
  Tensor v = t.value(a);
  v.flat() += c;
  return t.emit("add_scalar", std::move(v), {a},
                [](Tape& tt, NodeId, NodeId g, const std::vector<char>& need,
                   std::vector<NodeId>& gin) {
                  if (need[0]) gin[0] = g;
                });
}

// mask-based vjp: gradient is g times a piecewise-constant mask of the input
static Tape::VjpFn mask_vjp(Tensor mask) {
  auto m = std::make_shared<Tensor>(std::move(mask));
  return [m](Tape& tt, NodeId, NodeId g, const std::vector<char>& need,
             std::vector<NodeId>& gin) {
    if (need[0]) gin[0] = mul(tt, g, tt.constant(*m));
  };
}

NodeId relu(Tape& t, NodeId a) {
  const Tensor& x = t.value(a);
  Tensor v = map_values(x, [](double u) { return u > 0.0 ? u : 0.0; });
  Tensor m = map_values(x, [](double u) { return u > 0.0 ? 1.0 : 0.0; });
  return t.emit("relu", std::move(v), {a}, mask_vjp(std::move(m)));
}

NodeId leaky_relu(Tape& t, NodeId a, double alpha) {
  const Tensor& x = t.value(a);
  Tensor v = map_values(x, [alpha](double u) { return u > 0.0 ? u : alpha * u; });
  Tensor m = map_values(x, [alpha](double u) { return u > 0.0 ? 1.0 : alpha; });
  return t.emit("leaky_relu", std::move(v), {a}, mask_vjp(std::move(m)));
}

NodeId clamp01(Tape& t, NodeId a) {
  const Tensor& x = t.value(a);
  Tensor v = map_values(x, [](double u) { return u < 0.0 ? 0.0 : (u > 1.0 ? 1.0 : u); });
  Tensor m = map_values(x, [](double u) { return (u >= 0.0 && u <= 1.0) ? 1.0 : 0.0; });
  return t.emit("clamp01", std::move(v), {a}, mask_vjp(std::move(m)));
}

NodeId clamp_min(Tape& t, NodeId a, double c) {
  const Tensor& x = t.value(a);
  Tensor v = map_values(x, [c](double u) { return u < c ? c : u; });
  Tensor m = map_values(x, [c](double u) { return u >= c ? 1.0 : 0.0; });
  return t.emit("clamp_min", std::move(v), {a}, mask_vjp(std::move(m)));
}

NodeId sigmoid(Tape& t, NodeId a) {
  Tensor v = map_values(t.value(a), [](double u) { return 1.0 / (1.0 + std::exp(-u)); });
  return t.emit("sigmoid", std::move(v), {a},
                [](Tape& tt, NodeId self, NodeId g, const std::vector<char>& need,
                   std::vector<NodeId>& gin) {
                  if (!need[0]) return;
                  NodeId one_minus = add_scalar(tt, scalar_mul(tt, self, -1.0), 1.0);
                  gin[0] = mul(tt, g, mul(tt, self, one_minus));
                });
}

NodeId tanh01(Tape& t, NodeId a) {
  Tensor v = map_values(t.value(a), [](double u) { return 0.5 * (std::tanh(u) + 1.0); });
  return t.emit("tanh01", std::move(v), {a},
                [](Tape& tt, NodeId self, NodeId g, const std::vector<char>& need,
                   std::vector<NodeId>& gin) {
                  if (!need[0]) return;
                  // d/du tanh01 = 2 o (1 - o)
                  NodeId one_minus = add_scalar(tt, scalar_mul(tt, self, -1.0), 1.0);
                  gin[0] = mul(tt, g, scalar_mul(tt, mul(tt, self, one_minus), 2.0));
                });
}

NodeId sqrt(Tape& t, NodeId a) {
  check(t.value(a).flat().minCoeff() >= 0.0, "sqrt: negative input");
  Tensor v = map_values(t.value(a), [](double u) { return std::sqrt(u); });
  return t.emit("sqrt", std::move(v), {a},
                [](Tape& tt, NodeId self, NodeId g, const std::vector<char>& need,
                   std::vector<NodeId>& gin) {
                  if (!need[0]) return;
                  gin[0] = mul(tt, g, scalar_mul(tt, recip(tt, self), 0.5));
                });
}

// 1/x with recip(0) = 0; used by sqrt's backward so a zero gradient norm
// yields a zero (not infinite) penalty gradient.
NodeId recip(Tape& t, NodeId a) {
  Tensor v = map_values(t.value(a), [](double u) { return u == 0.0 ? 0.0 : 1.0 / u; });
  return t.emit("recip", std::move(v), {a},
                [](Tape& tt, NodeId self, NodeId g, const std::vector<char>& need,
                   std::vector<NodeId>& gin) {
                  if (!need[0]) return;
                  gin[0] = scalar_mul(tt, mul(tt, g, mul(tt, self, self)), -1.0);
                });
}

NodeId pow_const(Tape& t, NodeId a, double p) {
  check(t.value(a).flat().minCoeff() >= 0.0, "pow_const: negative base");
  Tensor v = map_values(t.value(a), [p](double u) { return std::pow(u, p); });
  return t.emit("pow_const", std::move(v), {a},
                [a, p](Tape& tt, NodeId, NodeId g, const std::vector<char>& need,
                       std::vector<NodeId>& gin) {
                  if (!need[0]) return;
                  gin[0] = mul(tt, g, scalar_mul(tt, pow_const(tt, a, p - 1.0), p));
                });
}

NodeId max_ew(Tape& t, NodeId a, NodeId b) {
  check_same_shape(t, a, b, "max_ew");
  const Tensor& xa = t.value(a);
  const Tensor& xb = t.value(b);
  Tensor v = xa;
  Tensor m = xa;
  for (Eigen::Index i = 0; i < v.numel(); ++i) {
    bool take_a = xa.flat()[i] >= xb.flat()[i];
    v.flat()[i] = take_a ? xa.flat()[i] : xb.flat()[i];
    m.flat()[i] = take_a ? 1.0 : 0.0;
  }
  auto mp = std::make_shared<Tensor>(std::move(m));
  return t.emit("max_ew", std::move(v), {a, b},
                [mp](Tape& tt, NodeId, NodeId g, const std::vector<char>& need,
                     std::vector<NodeId>& gin) {
                  if (need[0]) gin[0] = mul(tt, g, tt.constant(*mp));
                  if (need[1]) {
                    Tensor inv = *mp;
                    inv.flat() = 1.0 - inv.flat();
                    gin[1] = mul(tt, g, tt.constant(std::move(inv)));
                  }
                });
}

// ---------------------------------------------------------------------------
// reductions / broadcasts

NodeId sum(Tape& t, NodeId a) {
  // fixed row-major accumulation, no vectorized reordering
  const Eigen::ArrayXd& d = t.value(a).flat();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < d.size(); ++i) acc += d[i];
  std::vector<int> shape = t.value(a).shape();
  return t.emit("sum", Tensor::scalar(acc), {a},
                [shape](Tape& tt, NodeId, NodeId g, const std::vector<char>& need,
                        std::vector<NodeId>& gin) {
                  if (need[0]) gin[0] = broadcast_to(tt, g, shape);
                });
}

NodeId mean(Tape& t, NodeId a) {
  const Eigen::ArrayXd& d = t.value(a).flat();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < d.size(); ++i) acc += d[i];
  double n = static_cast<double>(d.size());
  std::vector<int> shape = t.value(a).shape();
  // divide (rather than multiply by 1/n) so mean of n equal values is exact
  return t.emit("mean", Tensor::scalar(acc / n), {a},
                [shape, n](Tape& tt, NodeId, NodeId g, const std::vector<char>& need,
                           std::vector<NodeId>& gin) {
                  if (need[0]) gin[0] = broadcast_to(tt, scalar_mul(tt, g, 1.0 / n), shape);
                });
}

NodeId broadcast_to(Tape& t, NodeId s, std::vector<int> shape) {
  check(t.value(s).is_scalar(), "broadcast_to: source must be scalar");
  Tensor v = Tensor::zeros(shape);
  v.flat() = t.value(s).scalar_value();
  return t.emit("broadcast_to", std::move(v), {s},
                [](Tape& tt, NodeId, NodeId g, const std::vector<char>& need,
                   std::vector<NodeId>& gin) {
                  if (need[0]) gin[0] = sum(tt, g);
                });
}

NodeId scale_by(Tape& t, NodeId a, NodeId s) {
  check(t.value(s).is_scalar(), "scale_by: scale must be scalar");
  Tensor v = t.value(a);
  v.flat() *= t.value(s).scalar_value();
  return t.emit("scale_by", std::move(v), {a, s},
                [a, s](Tape& tt, NodeId, NodeId g, const std::vector<char>& need,
                       std::vector<NodeId>& gin) {
                  if (need[0]) gin[0] = scale_by(tt, g, s);
                  if (need[1]) gin[1] = sum(tt, mul(tt, g, a));
                });
}

NodeId reshape(Tape& t, NodeId a, std::vector<int> shape) {
  Tensor v = Tensor::from_flat(shape, t.value(a).flat());
  std::vector<int> old = t.value(a).shape();
  return t.emit("reshape", std::move(v), {a},
                [old](Tape& tt, NodeId, NodeId g, const std::vector<char>& need,
                      std::vector<NodeId>& gin) {
                  if (need[0]) gin[0] = reshape(tt, g, old);
                });
}

// ---------------------------------------------------------------------------
// convolution (cross-correlation) and its two adjoints. The three ops are
// mutually closed under differentiation, which is what makes the gradient
// penalty trainable.

namespace {

struct TapSpan {
  int o0 = 0, n = 0, i0 = 0;
};

TapSpan tap_span(int out_n, int in_n, int k_off, int pad, int stride) {
  int shift = k_off - pad;  // i = o*stride + shift
  int lo = 0;
  if (shift < 0) lo = (-shift + stride - 1) / stride;
  int max_i = in_n - 1 - shift;
  if (max_i < 0) return {};
  int hi = std::min(out_n - 1, max_i / stride);
  if (hi < lo) return {};
  return {lo, hi - lo + 1, lo * stride + shift};
}

struct ConvGeom {
  int C, H, W, F, kh, kw, py, px, stride, oh, ow;
};

ConvGeom conv_geometry(const std::vector<int>& in_shape, const std::vector<int>& k_shape,
                       int stride, Padding pad) {
  check(in_shape.size() == 3, "conv2d: input must be {C,H,W}");
  check(k_shape.size() == 4, "conv2d: kernels must be {F,C,kh,kw}");
  ConvGeom g;
  g.C = in_shape[0];
  g.H = in_shape[1];
  g.W = in_shape[2];
  g.F = k_shape[0];
  g.kh = k_shape[2];
  g.kw = k_shape[3];
  check(k_shape[1] == g.C, "conv2d: input channels do not match kernel channels");
  check(g.kh % 2 == 1 && g.kw % 2 == 1, "conv2d: kernel spatial dims must be odd");
  check(stride >= 1, "conv2d: stride must be >= 1");
  g.stride = stride;
  switch (pad.kind) {
    case Padding::Kind::Same:
      g.py = (g.kh - 1) / 2;
      g.px = (g.kw - 1) / 2;
      break;
    case Padding::Kind::Valid:
      g.py = g.px = 0;
      break;
    case Padding::Kind::Explicit:
      check(pad.amount >= 0, "conv2d: negative padding");
      g.py = g.px = pad.amount;
      break;
  }
  g.oh = (g.H + 2 * g.py - g.kh) / stride + 1;
  g.ow = (g.W + 2 * g.px - g.kw) / stride + 1;
  check(g.oh > 0 && g.ow > 0, "conv2d: output would be empty");
  return g;
}

Tensor conv_forward(const Tensor& in, const Tensor& k, const ConvGeom& g) {
  Tensor out = Tensor::zeros({g.F, g.oh, g.ow});
  const double* kd = k.data();
  for (int f = 0; f < g.F; ++f) {
    GridMap of = out.grid(f);
    for (int c = 0; c < g.C; ++c) {
      ConstGridMap ic = in.grid(c);
      for (int ky = 0; ky < g.kh; ++ky) {
        TapSpan sy = tap_span(g.oh, g.H, ky, g.py, g.stride);
        if (sy.n == 0) continue;
        for (int kx = 0; kx < g.kw; ++kx) {
          TapSpan sx = tap_span(g.ow, g.W, kx, g.px, g.stride);
          if (sx.n == 0) continue;
          double w = kd[((static_cast<Eigen::Index>(f) * g.C + c) * g.kh + ky) * g.kw + kx];
          if (g.stride == 1) {
            of.block(sy.o0, sx.o0, sy.n, sx.n) += w * ic.block(sy.i0, sx.i0, sy.n, sx.n);
          } else {
            of.block(sy.o0, sx.o0, sy.n, sx.n) +=
                w * ic(Eigen::seqN(sy.i0, sy.n, g.stride), Eigen::seqN(sx.i0, sx.n, g.stride));
          }
        }
      }
    }
  }
  return out;
}

Tensor conv_input_vjp_forward(const Tensor& gout, const Tensor& k, const ConvGeom& g) {
  Tensor din = Tensor::zeros({g.C, g.H, g.W});
  const double* kd = k.data();
  for (int f = 0; f < g.F; ++f) {
    ConstGridMap gf = gout.grid(f);
    for (int c = 0; c < g.C; ++c) {
      GridMap dc = din.grid(c);
      for (int ky = 0; ky < g.kh; ++ky) {
        TapSpan sy = tap_span(g.oh, g.H, ky, g.py, g.stride);
        if (sy.n == 0) continue;
        for (int kx = 0; kx < g.kw; ++kx) {
          TapSpan sx = tap_span(g.ow, g.W, kx, g.px, g.stride);
          if (sx.n == 0) continue;
          double w = kd[((static_cast<Eigen::Index>(f) * g.C + c) * g.kh + ky) * g.kw + kx];
          if (g.stride == 1) {
            dc.block(sy.i0, sx.i0, sy.n, sx.n) += w * gf.block(sy.o0, sx.o0, sy.n, sx.n);
          } else {
            dc(Eigen::seqN(sy.i0, sy.n, g.stride), Eigen::seqN(sx.i0, sx.n, g.stride)) +=
                w * gf.block(sy.o0, sx.o0, sy.n, sx.n);
          }
        }
      }
    }
  }
  return din;
}

Tensor conv_kernel_vjp_forward(const Tensor& gout, const Tensor& in, const ConvGeom& g) {
  Tensor dk = Tensor::zeros({g.F, g.C, g.kh, g.kw});
  double* kd = dk.data();
  for (int f = 0; f < g.F; ++f) {
    ConstGridMap gf = gout.grid(f);
    for (int c = 0; c < g.C; ++c) {
      ConstGridMap ic = in.grid(c);
      for (int ky = 0; ky < g.kh; ++ky) {
        TapSpan sy = tap_span(g.oh, g.H, ky, g.py, g.stride);
        if (sy.n == 0) continue;
        for (int kx = 0; kx < g.kw; ++kx) {
          TapSpan sx = tap_span(g.ow, g.W, kx, g.px, g.stride);
          if (sx.n == 0) continue;
          double acc;
          if (g.stride == 1) {
            acc = (gf.block(sy.o0, sx.o0, sy.n, sx.n) * ic.block(sy.i0, sx.i0, sy.n, sx.n))
                      .sum();
          } else {
            acc = (gf.block(sy.o0, sx.o0, sy.n, sx.n) *
                   ic(Eigen::seqN(sy.i0, sy.n, g.stride), Eigen::seqN(sx.i0, sx.n, g.stride))
                       .eval())
                      .sum();
          }
          kd[((static_cast<Eigen::Index>(f) * g.C + c) * g.kh + ky) * g.kw + kx] = acc;
        }
      }
    }
  }
  return dk;
}

NodeId conv_input_vjp_op(Tape& t, NodeId gout, NodeId kernels, const ConvGeom& g);
NodeId conv_kernel_vjp_op(Tape& t, NodeId gout, NodeId input, const ConvGeom& g);

NodeId conv2d_geom(Tape& t, NodeId input, NodeId kernels, const ConvGeom& g) {
  Tensor v = conv_forward(t.value(input), t.value(kernels), g);
  return t.emit("conv2d", std::move(v), {input, kernels},
                [input, kernels, g](Tape& tt, NodeId, NodeId gr, const std::vector<char>& need,
                                    std::vector<NodeId>& gin) {
                  if (need[0]) gin[0] = conv_input_vjp_op(tt, gr, kernels, g);
                  if (need[1]) gin[1] = conv_kernel_vjp_op(tt, gr, input, g);
                });
}

NodeId conv_input_vjp_op(Tape& t, NodeId gout, NodeId kernels, const ConvGeom& g) {
  Tensor v = conv_input_vjp_forward(t.value(gout), t.value(kernels), g);
  return t.emit("conv_input_vjp", std::move(v), {gout, kernels},
                [gout, kernels, g](Tape& tt, NodeId, NodeId u, const std::vector<char>& need,
                                   std::vector<NodeId>& gin) {
                  // bilinear in (gout, kernels)
                  if (need[0]) gin[0] = conv2d_geom(tt, u, kernels, g);
                  if (need[1]) gin[1] = conv_kernel_vjp_op(tt, gout, u, g);
                });
}

NodeId conv_kernel_vjp_op(Tape& t, NodeId gout, NodeId input, const ConvGeom& g) {
  Tensor v = conv_kernel_vjp_forward(t.value(gout), t.value(input), g);
  return t.emit("conv_kernel_vjp", std::move(v), {gout, input},
                [gout, input, g](Tape& tt, NodeId, NodeId u, const std::vector<char>& need,
                                 std::vector<NodeId>& gin) {
                  if (need[0]) gin[0] = conv2d_geom(tt, input, u, g);
                  if (need[1]) gin[1] = conv_input_vjp_op(tt, gout, u, g);
                });
}

}  // namespace

NodeId conv2d(Tape& t, NodeId input, NodeId kernels, int stride, Padding pad) {
  ConvGeom g = conv_geometry(t.value(input).shape(), t.value(kernels).shape(), stride, pad);
  return conv2d_geom(t, input, kernels, g);
}

// ---------------------------------------------------------------------------
// 3x3 pooling, stride 1, out-of-bounds cells excluded. Backward routes the
// upstream gradient to the selected cell; ties break to the first cell in
// row-major window order.

namespace {

NodeId pool_gather_op(Tape& t, NodeId a, std::shared_ptr<std::vector<int>> sel, int h, int w);

NodeId pool_scatter_op(Tape& t, NodeId g, std::shared_ptr<std::vector<int>> sel, int h, int w) {
  const Tensor& gv = t.value(g);
  Tensor out = Tensor::zeros({h, w});
  for (std::size_t o = 0; o < sel->size(); ++o) out.flat()[(*sel)[o]] += gv.flat()[o];
  int oh = gv.height(), ow = gv.width();
  return t.emit("pool_scatter", std::move(out), {g},
                [sel, oh, ow](Tape& tt, NodeId, NodeId u, const std::vector<char>& need,
                              std::vector<NodeId>& gin) {
                  if (need[0]) gin[0] = pool_gather_op(tt, u, sel, oh, ow);
                });
}

NodeId pool_gather_op(Tape& t, NodeId a, std::shared_ptr<std::vector<int>> sel, int h, int w) {
  const Tensor& av = t.value(a);
  Tensor out = Tensor::zeros({h, w});
  for (std::size_t o = 0; o < sel->size(); ++o) out.flat()[o] = av.flat()[(*sel)[o]];
  int ih = av.height(), iw = av.width();
  return t.emit("pool_gather", std::move(out), {a},
                [sel, ih, iw](Tape& tt, NodeId, NodeId u, const std::vector<char>& need,
                              std::vector<NodeId>& gin) {
                  if (need[0]) gin[0] = pool_scatter_op(tt, u, sel, ih, iw);
                });
}

template <bool kMax>
NodeId pool3_impl(Tape& t, NodeId a, const char* tag) {
  const Tensor& x = t.value(a);
  check(x.rank() == 2, "pool3: input must be {H,W}");
  int h = x.height(), w = x.width();
  ConstGridMap in = x.grid();
  Tensor out = Tensor::zeros({h, w});
  auto sel = std::make_shared<std::vector<int>>(static_cast<std::size_t>(h) * w);
  GridMap ov = out.grid();
  for (int y = 0; y < h; ++y) {
    for (int x2 = 0; x2 < w; ++x2) {
      double best = 0.0;
      int besti = -1;
      for (int dy = -1; dy <= 1; ++dy) {
        int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = -1; dx <= 1; ++dx) {
          int xx = x2 + dx;
          if (xx < 0 || xx >= w) continue;
          double v = in(yy, xx);
          bool better = besti < 0 || (kMax ? v > best : v < best);
          if (better) {
            best = v;
            besti = yy * w + xx;
          }
        }
      }
      ov(y, x2) = best;
      (*sel)[static_cast<std::size_t>(y) * w + x2] = besti;
    }
  }
  return t.emit(tag, std::move(out), {a},
                [sel, h, w](Tape& tt, NodeId, NodeId g, const std::vector<char>& need,
                            std::vector<NodeId>& gin) {
                  if (need[0]) gin[0] = pool_scatter_op(tt, g, sel, h, w);
                });
}

}  // namespace

NodeId minpool3(Tape& t, NodeId a) { return pool3_impl<false>(t, a, "minpool3"); }
NodeId maxpool3(Tape& t, NodeId a) { return pool3_impl<true>(t, a, "maxpool3"); }

// ---------------------------------------------------------------------------
// downsample2: average non-overlapping 2x2 blocks, truncating odd tails.

namespace {

NodeId down2_spread_op(Tape& t, NodeId g, int h, int w) {
  const Tensor& gv = t.value(g);
  int oh = gv.height(), ow = gv.width();
  Tensor out = Tensor::zeros({h, w});
  GridMap o = out.grid();
  ConstGridMap gm = gv.grid();
  for (int y = 0; y < 2 * oh; ++y)
    for (int x = 0; x < 2 * ow; ++x) o(y, x) = 0.25 * gm(y / 2, x / 2);
  return t.emit("down2_spread", std::move(out), {g},
                [](Tape& tt, NodeId, NodeId u, const std::vector<char>& need,
                   std::vector<NodeId>& gin) {
                  if (need[0]) gin[0] = downsample2(tt, u);
                });
}

}  // namespace

NodeId downsample2(Tape& t, NodeId a) {
  const Tensor& x = t.value(a);
  check(x.rank() == 2, "downsample2: input must be {H,W}");
  int h = x.height(), w = x.width();
  int oh = h / 2, ow = w / 2;
  check(oh > 0 && ow > 0, "downsample2: input too small");
  Tensor out = Tensor::zeros({oh, ow});
  ConstGridMap in = x.grid();
  GridMap o = out.grid();
  for (int y = 0; y < oh; ++y)
    for (int x2 = 0; x2 < ow; ++x2)
      o(y, x2) =
          0.25 * (in(2 * y, 2 * x2) + in(2 * y, 2 * x2 + 1) + in(2 * y + 1, 2 * x2) +
                  in(2 * y + 1, 2 * x2 + 1));
  return t.emit("downsample2", std::move(out), {a},
                [h, w](Tape& tt, NodeId, NodeId g, const std::vector<char>& need,
                       std::vector<NodeId>& gin) {
                  if (need[0]) gin[0] = down2_spread_op(tt, g, h, w);
                });
}

// ---------------------------------------------------------------------------
// nearest-neighbor 2x upsampling on {C,H,W} stacks

namespace {

NodeId sum_pool2_op(Tape& t, NodeId a) {
  const Tensor& x = t.value(a);
  int c = x.channels(), h = x.height(), w = x.width();
  check(h % 2 == 0 && w % 2 == 0, "sum_pool2: dims must be even");
  Tensor out = Tensor::zeros({c, h / 2, w / 2});
  for (int ch = 0; ch < c; ++ch) {
    ConstGridMap in = x.grid(ch);
    GridMap o = out.grid(ch);
    for (int y = 0; y < h / 2; ++y)
      for (int x2 = 0; x2 < w / 2; ++x2)
        o(y, x2) = in(2 * y, 2 * x2) + in(2 * y, 2 * x2 + 1) + in(2 * y + 1, 2 * x2) +
                   in(2 * y + 1, 2 * x2 + 1);
  }
  return t.emit("sum_pool2", std::move(out), {a},
                [](Tape& tt, NodeId, NodeId g, const std::vector<char>& need,
                   std::vector<NodeId>& gin) {
                  if (need[0]) gin[0] = upsample2_nearest(tt, g);
                });
}

}  // namespace

NodeId upsample2_nearest(Tape& t, NodeId a) {
  const Tensor& x = t.value(a);
  check(x.rank() == 3, "upsample2_nearest: input must be {C,H,W}");
  int c = x.channels(), h = x.height(), w = x.width();
  Tensor out = Tensor::zeros({c, 2 * h, 2 * w});
  for (int ch = 0; ch < c; ++ch) {
    ConstGridMap in = x.grid(ch);
    GridMap o = out.grid(ch);
    for (int y = 0; y < 2 * h; ++y)
      for (int x2 = 0; x2 < 2 * w; ++x2) o(y, x2) = in(y / 2, x2 / 2);
  }
  return t.emit("upsample2_nearest", std::move(out), {a},
                [](Tape& tt, NodeId, NodeId g, const std::vector<char>& need,
                   std::vector<NodeId>& gin) {
                  if (need[0]) gin[0] = sum_pool2_op(tt, g);
                });
}

// ---------------------------------------------------------------------------
// rank-2 crop and its zero-embedding adjoint

namespace {

NodeId embed2_op(Tape& t, NodeId g, int r0, int c0, int h, int w) {
  const Tensor& gv = t.value(g);
  int ch = gv.height(), cw = gv.width();
  Tensor out = Tensor::zeros({h, w});
  out.grid().block(r0, c0, ch, cw) = gv.grid();
  return t.emit("embed2", std::move(out), {g},
                [r0, c0, ch, cw](Tape& tt, NodeId, NodeId u, const std::vector<char>& need,
                                 std::vector<NodeId>& gin) {
                  if (need[0]) gin[0] = crop2(tt, u, r0, c0, ch, cw);
                });
}

}  // namespace

NodeId crop2(Tape& t, NodeId a, int r0, int c0, int h, int w) {
  const Tensor& x = t.value(a);
  check(x.rank() == 2, "crop2: input must be {H,W}");
  int ih = x.height(), iw = x.width();
  check(r0 >= 0 && c0 >= 0 && r0 + h <= ih && c0 + w <= iw, "crop2: window out of bounds");
  Tensor out = Tensor::zeros({h, w});
  out.grid() = x.grid().block(r0, c0, h, w);
  return t.emit("crop2", std::move(out), {a},
                [r0, c0, ih, iw](Tape& tt, NodeId, NodeId g, const std::vector<char>& need,
                                 std::vector<NodeId>& gin) {
                  if (need[0]) gin[0] = embed2_op(tt, g, r0, c0, ih, iw);
                });
}

// ---------------------------------------------------------------------------
// replicate padding (rank-2)

namespace {

NodeId pad_replicate_fold_op(Tape& t, NodeId g, int r, int h, int w) {
  const Tensor& gv = t.value(g);
  Tensor out = Tensor::zeros({h, w});
  GridMap o = out.grid();
  ConstGridMap gm = gv.grid();
  for (int y = 0; y < h + 2 * r; ++y) {
    int sy = std::clamp(y - r, 0, h - 1);
    for (int x = 0; x < w + 2 * r; ++x) o(sy, std::clamp(x - r, 0, w - 1)) += gm(y, x);
  }
  return t.emit("pad_replicate_fold", std::move(out), {g},
                [r](Tape& tt, NodeId, NodeId u, const std::vector<char>& need,
                    std::vector<NodeId>& gin) {
                  if (need[0]) gin[0] = pad_replicate(tt, u, r);
                });
}

}  // namespace

NodeId pad_replicate(Tape& t, NodeId a, int r) {
  const Tensor& x = t.value(a);
  check(x.rank() == 2, "pad_replicate: input must be {H,W}");
  check(r >= 0, "pad_replicate: negative radius");
  int h = x.height(), w = x.width();
  Tensor out = Tensor::zeros({h + 2 * r, w + 2 * r});
  GridMap o = out.grid();
  ConstGridMap in = x.grid();
  for (int y = 0; y < h + 2 * r; ++y) {
    int sy = std::clamp(y - r, 0, h - 1);
    for (int x2 = 0; x2 < w + 2 * r; ++x2) o(y, x2) = in(sy, std::clamp(x2 - r, 0, w - 1));
  }
  return t.emit("pad_replicate", std::move(out), {a},
                [r, h, w](Tape& tt, NodeId, NodeId g, const std::vector<char>& need,
                          std::vector<NodeId>& gin) {
                  if (need[0]) gin[0] = pad_replicate_fold_op(tt, g, r, h, w);
                });
}

// ---------------------------------------------------------------------------
// channel ops

NodeId add_channel_bias(Tape& t, NodeId a, NodeId bias) {
  const Tensor& x = t.value(a);
  const Tensor& b = t.value(bias);
  check(x.rank() == 3, "add_channel_bias: input must be {C,H,W}");
  check(b.rank() == 1 && b.shape()[0] == x.channels(), "add_channel_bias: bias shape");
  Tensor v = x;
  for (int c = 0; c < x.channels(); ++c) v.grid(c) += b.flat()[c];
  return t.emit("add_channel_bias", std::move(v), {a, bias},
                [](Tape& tt, NodeId, NodeId g, const std::vector<char>& need,
                   std::vector<NodeId>& gin) {
                  if (need[0]) gin[0] = g;
                  if (need[1]) gin[1] = channel_sums(tt, g);
                });
}

NodeId channel_sums(Tape& t, NodeId a) {
  const Tensor& x = t.value(a);
  check(x.rank() == 3, "channel_sums: input must be {C,H,W}");
  int c = x.channels();
  Tensor v = Tensor::zeros({c});
  for (int ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    ConstGridMap g = x.grid(ch);
    for (int y = 0; y < x.height(); ++y)
      for (int x2 = 0; x2 < x.width(); ++x2) acc += g(y, x2);
    v.flat()[ch] = acc;
  }
  int h = x.height(), w = x.width();
  return t.emit("channel_sums", std::move(v), {a},
                [h, w](Tape& tt, NodeId, NodeId g, const std::vector<char>& need,
                       std::vector<NodeId>& gin) {
                  if (need[0]) gin[0] = broadcast_channels(tt, g, h, w);
                });
}

NodeId broadcast_channels(Tape& t, NodeId b, int h, int w) {
  const Tensor& bv = t.value(b);
  check(bv.rank() == 1, "broadcast_channels: input must be {C}");
  int c = bv.shape()[0];
  Tensor v = Tensor::zeros({c, h, w});
  for (int ch = 0; ch < c; ++ch) v.grid(ch) = bv.flat()[ch];
  return t.emit("broadcast_channels", std::move(v), {b},
                [](Tape& tt, NodeId, NodeId g, const std::vector<char>& need,
                   std::vector<NodeId>& gin) {
                  if (need[0]) gin[0] = channel_sums(tt, g);
                });
}

NodeId instance_norm(Tape& t, NodeId a, double eps) {
  const Tensor& x = t.value(a);
  check(x.rank() == 3, "instance_norm: input must be {C,H,W}");
  int c = x.channels(), h = x.height(), w = x.width();
  double n = static_cast<double>(h) * w;
  Tensor v = Tensor::zeros({c, h, w});
  auto inv = std::make_shared<std::vector<double>>(c);
  for (int ch = 0; ch < c; ++ch) {
    ConstGridMap in = x.grid(ch);
    double mu = in.sum() / n;
    double var = ((in - mu) * (in - mu)).sum() / n;
    double is = 1.0 / std::sqrt(var + eps);
    (*inv)[ch] = is;
    v.grid(ch) = (in - mu) * is;
  }
  return t.emit(
      "instance_norm", std::move(v), {a},
      [inv, n](Tape& tt, NodeId self, NodeId g, const std::vector<char>& need,
               std::vector<NodeId>& gin) {
        if (!need[0]) return;
        const Tensor& y = tt.value(self);
        const Tensor& gv = tt.value(g);
        Tensor dx = Tensor::zeros(y.shape());
        for (int ch = 0; ch < y.channels(); ++ch) {
          ConstGridMap yc = y.grid(ch);
          ConstGridMap gc = gv.grid(ch);
          double m1 = gc.sum() / n;
          double m2 = (gc * yc).sum() / n;
          dx.grid(ch) = (*inv)[ch] * (gc - m1 - yc * m2);
        }
        gin[0] = tt.emit("instance_norm_vjp", std::move(dx), {g}, Tape::VjpFn());
      });
}

NodeId channel_logsumexp(Tape& t, NodeId a, double temp) {
  const Tensor& x = t.value(a);
  check(x.rank() == 3, "channel_logsumexp: input must be {C,H,W}");
  check(temp > 0.0, "channel_logsumexp: temperature must be positive");
  int c = x.channels(), h = x.height(), w = x.width();
  Tensor v = Tensor::zeros({h, w});
  GridMap o = v.grid();
  for (int y = 0; y < h; ++y) {
    for (int x2 = 0; x2 < w; ++x2) {
      double m = x.grid(0)(y, x2);
      for (int ch = 1; ch < c; ++ch) m = std::max(m, x.grid(ch)(y, x2));
      double s = 0.0;
      for (int ch = 0; ch < c; ++ch) s += std::exp(temp * (x.grid(ch)(y, x2) - m));
      o(y, x2) = m + std::log(s) / temp;
    }
  }
  return t.emit(
      "channel_logsumexp", std::move(v), {a},
      [a, temp](Tape& tt, NodeId self, NodeId g, const std::vector<char>& need,
                std::vector<NodeId>& gin) {
        if (!need[0]) return;
        const Tensor& x = tt.value(a);
        const Tensor& lse = tt.value(self);
        const Tensor& gv = tt.value(g);
        Tensor dx = Tensor::zeros(x.shape());
        for (int ch = 0; ch < x.channels(); ++ch) {
          ConstGridMap xc = x.grid(ch);
          ConstGridMap l = lse.grid();
          ConstGridMap gm = gv.grid();
          dx.grid(ch) = gm * (temp * (xc - l)).exp();
        }
        gin[0] = tt.emit("channel_logsumexp_vjp", std::move(dx), {g}, Tape::VjpFn());
      });
}

}  // namespace vaot
