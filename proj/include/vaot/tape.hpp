#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vaot/tensor.hpp"

namespace vaot {

using NodeId = int;

struct Padding {
  enum class Kind { Same, Valid, Explicit };
  Kind kind = Kind::Same;
  int amount = 0;

  static Padding same() { return {Kind::Same, 0}; }
  static Padding valid() { return {Kind::Valid, 0}; }
  static Padding explicit_pad(int a) { return {Kind::Explicit, a}; }
};

// Reverse-mode tape. Nodes are appended in topological order (inputs always
// have smaller ids). The backward pass is itself expressed with tape ops, so
// gradients are ordinary nodes; differentiating through a gradient (as the
// WGAN-GP penalty requires) works without special casing, as long as every
// op on the twice-differentiated path builds its vjp from live nodes.
class Tape {
 public:
  // vjp(tape, self, gout, need, gin): fill gin[i] with a node holding
  // d(root)/d(input_i) contributions for every i with need[i]; leave -1 else.
  using VjpFn = std::function<void(Tape&, NodeId, NodeId, const std::vector<char>&,
                                   std::vector<NodeId>&)>;

  NodeId leaf(Tensor v, bool requires_grad = false);
  NodeId constant(Tensor v) { return leaf(std::move(v), false); }
  NodeId constant(double v) { return leaf(Tensor::scalar(v), false); }

  NodeId emit(const char* tag, Tensor value, std::vector<NodeId> inputs, VjpFn vjp);

  const Tensor& value(NodeId id) const { return node(id).value; }
  const char* tag(NodeId id) const { return node(id).tag; }
  bool requires_grad(NodeId id) const { return node(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Populates grad() for every requires-grad node reachable from root.
  // Calling twice without reset_grads() is an error.
  void backward(NodeId root);

  // Builds gradient NODES of root w.r.t. each wrt entry and returns their
  // ids (a zeros node when root does not depend on the entry). Composable:
  // the returned nodes can feed further ops and a later backward().
  std::vector<NodeId> backward_graph(NodeId root, const std::vector<NodeId>& wrt);

  void reset_grads();
  const Tensor& grad(NodeId id) const;
  bool has_grad(NodeId id) const { return node(id).has_grad; }

 private:
  struct Node {
    const char* tag;
    Tensor value;
    Tensor grad;
    std::vector<NodeId> inputs;
    VjpFn vjp;
    bool requires_grad = false;
    bool has_grad = false;
  };

  const Node& node(NodeId id) const;
  Node& node(NodeId id);
  std::vector<NodeId> walk(NodeId root, const std::vector<char>& need);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// ---- elementwise / scalar ops ------------------------------------------
NodeId add(Tape& t, NodeId a, NodeId b);
NodeId sub(Tape& t, NodeId a, NodeId b);
NodeId mul(Tape& t, NodeId a, NodeId b);
NodeId div(Tape& t, NodeId a, NodeId b);
NodeId scalar_mul(Tape& t, NodeId a, double c);
NodeId add_scalar(Tape& t, NodeId a, double c);
NodeId relu(Tape& t, NodeId a);
NodeId leaky_relu(Tape& t, NodeId a, double alpha);
NodeId sigmoid(Tape& t, NodeId a);
NodeId tanh01(Tape& t, NodeId a);
NodeId clamp01(Tape& t, NodeId a);
NodeId clamp_min(Tape& t, NodeId a, double c);
NodeId sqrt(Tape& t, NodeId a);
NodeId recip(Tape& t, NodeId a);
NodeId pow_const(Tape& t, NodeId a, double p);
NodeId max_ew(Tape& t, NodeId a, NodeId b);  // ties route gradient to a

// ---- reductions / broadcasts -------------------------------------------
NodeId sum(Tape& t, NodeId a);
NodeId mean(Tape& t, NodeId a);
NodeId broadcast_to(Tape& t, NodeId s, std::vector<int> shape);
NodeId scale_by(Tape& t, NodeId a, NodeId s);  // tensor times scalar node
NodeId reshape(Tape& t, NodeId a, std::vector<int> shape);

// ---- spatial ops ---------------------------------------------------------
NodeId conv2d(Tape& t, NodeId input, NodeId kernels, int stride, Padding pad);
NodeId minpool3(Tape& t, NodeId a);
NodeId maxpool3(Tape& t, NodeId a);
NodeId downsample2(Tape& t, NodeId a);
NodeId upsample2_nearest(Tape& t, NodeId a);
NodeId crop2(Tape& t, NodeId a, int r0, int c0, int h, int w);
NodeId pad_replicate(Tape& t, NodeId a, int r);

// ---- channel ops (rank-3 stacks) ----------------------------------------
NodeId add_channel_bias(Tape& t, NodeId a, NodeId bias);
NodeId channel_sums(Tape& t, NodeId a);
NodeId broadcast_channels(Tape& t, NodeId b, int h, int w);
NodeId instance_norm(Tape& t, NodeId a, double eps = 1e-5);
NodeId channel_logsumexp(Tape& t, NodeId a, double temp);

}  // namespace vaot
