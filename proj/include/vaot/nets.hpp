#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vaot/tape.hpp"

namespace vaot {

// Ordered, named parameter tensors. Order is the contract between init,
// forward passes, the optimizer, and checkpoints.
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Tensor> tensors;

  void add(std::string name, Tensor t) {
    names.push_back(std::move(name));
    tensors.push_back(std::move(t));
  }
  int size() const { return static_cast<int>(tensors.size()); }
  long total_params() const {
    long n = 0;
    for (const Tensor& t : tensors) n += t.numel();
    return n;
  }
};

// Parameter tensors materialized as leaves on a tape.
struct BoundParams {
  std::vector<NodeId> ids;
};

BoundParams bind_params(Tape& t, const ParamSet& p, bool requires_grad);

struct GeneratorSpec {
  int stem_channels = 16;
  int mid_channels = 24;  // channels after the two stride-2 stages
  int res_blocks = 4;
};

struct CriticSpec {
  std::vector<int> channels{16, 32, 64, 128};  // four stride-2 conv layers
  double leaky_alpha = 0.2;
};

// Residual encoder-decoder enhancer; output has the input's shape and lives
// in [0,1] (tanh01 head). Requires H and W divisible by 4.
struct GeneratorNet {
  GeneratorSpec spec;
  ParamSet params;
  NodeId forward(Tape& t, const BoundParams& bp, NodeId x) const;
};

// Strided conv critic with a mean-pooled linear scalar head. No
// normalization layers anywhere (required for the gradient penalty).
struct CriticNet {
  CriticSpec spec;
  ParamSet params;
  NodeId forward(Tape& t, const BoundParams& bp, NodeId x) const;
};

ParamSet init_generator_params(const GeneratorSpec& spec, std::uint64_t seed);
ParamSet init_critic_params(const CriticSpec& spec, std::uint64_t seed);

GeneratorNet make_generator(std::uint64_t seed, GeneratorSpec spec = {});
CriticNet make_critic(std::uint64_t seed, CriticSpec spec = {});

// Convenience single-image application on a throwaway tape.
Grid apply_generator(const GeneratorNet& g, const Grid& x);

// Fixed differentiable vessel segmenter: a bank of oriented
// second-derivative-of-Gaussian matched filters (sigma in {1,2}, 8
// orientations, 15x15), smooth-maxed over orientations with log-sum-exp and
// squashed to a probability. Weights are frozen at construction; the output
// is differentiable w.r.t. the image input only.
class Segmenter {
 public:
  Segmenter();

  NodeId forward(Tape& t, NodeId x) const;  // rank-2 in, rank-2 SoftMask out
  Grid segment(const Grid& x) const;

  double gain() const { return gain_; }
  double bias() const { return bias_; }
  const Tensor& kernels() const { return kernels_; }

 private:
  Tensor kernels_;  // {16,1,15,15}
  double gain_;
  double bias_;
  double temp_;
};

}  // namespace vaot
