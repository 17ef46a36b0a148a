#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>

#include "vaot/config.hpp"
#include "vaot/endpoints.hpp"
#include "vaot/nets.hpp"
#include "vaot/rng.hpp"
#include "vaot/synth.hpp"

namespace vaot {

// lr0 * 0.5 * (1 + cos(pi * step / phase_len)); resets to lr0 at phase start.
double cosine_lr(int step, int phase_len, double lr0);

struct AdamState {
  std::vector<Tensor> m, v;
  long t = 0;
  static AdamState init_like(const ParamSet& p);
};

// WGAN-GP practice: beta1 = 0.5, beta2 = 0.9.
void adam_step(ParamSet& params, const std::vector<Tensor>& grads, AdamState& st, double lr,
               double beta1 = 0.5, double beta2 = 0.9, double eps = 1e-8);

// ---- loss builders (exposed for unit tests) -------------------------------

struct CriticLossBuild {
  NodeId total = -1;  // mean D(fake) - mean D(real) + lambda_gp * GP
  NodeId gp = -1;
  NodeId w1 = -1;  // mean D(real) - mean D(fake)
};

// fakes are detached generator outputs; us holds one interpolation
// coefficient per sample (x_tilde = u*real + (1-u)*fake).
CriticLossBuild build_critic_loss(Tape& t, const CriticNet& critic, const BoundParams& bp,
                                  const std::vector<Grid>& fakes,
                                  const std::vector<Grid>& reals,
                                  const std::vector<double>& us, double lambda_gp);

struct GenLossBuild {
  NodeId total = -1;
  NodeId c_id = -1;   // mean msssim_cost(x, G(x))
  NodeId c_idy = -1;  // identity term mean msssim_cost(y, G(y)); -1 when absent
  NodeId c_s = -1;    // SGA; -1 in phase 1
  NodeId c_e = -1;    // EVP; -1 in phase 1
  NodeId adv = -1;    // -mean D(G(x))
  std::vector<NodeId> xhat;
};

using ApplyFn = std::function<NodeId(Tape&, NodeId)>;

// fixed_anchors (one set per sample) bypasses the anchor pipeline; used by
// gradient checks, where anchors must stay constant across evaluations.
GenLossBuild build_generator_loss(Tape& t, const ApplyFn& gen_apply, const CriticNet& critic,
                                  const BoundParams& critic_bp, const std::vector<Grid>& xs,
                                  const std::vector<Grid>& ys, int phase,
                                  const TrainConfig& cfg, const Segmenter& seg,
                                  std::uint64_t anchor_seed,
                                  const std::vector<EndpointSet>* fixed_anchors = nullptr);

// ---- two-phase training loop ----------------------------------------------

class Trainer {
 public:
  Trainer(TrainConfig cfg, Dataset data);

  void step();  // n_critic critic updates followed by one generator update
  int global_step() const { return step_; }
  int phase() const { return step_ < cfg_.t1_steps ? 1 : 2; }
  bool done() const { return step_ >= cfg_.t1_steps + cfg_.t2_steps; }

  const GeneratorNet& generator() const { return gen_; }
  const CriticNet& critic_net() const { return critic_; }
  const Segmenter& segmenter() const { return seg_; }
  const TrainConfig& config() const { return cfg_; }
  const std::string& last_metrics_line() const { return last_line_; }

  void save_checkpoint(const std::filesystem::path& dir) const;
  void load_checkpoint(const std::filesystem::path& dir);

  // Full schedule: metrics.tsv (one line per step), checkpoints at the phase
  // boundary (ckpt_phase1) and completion (ckpt_final). Starts from the
  // current step, so a loaded checkpoint resumes mid-schedule.
  void run(const std::filesystem::path& out_dir, std::ostream* console = nullptr);

  static const char* metrics_header();

  // Generator-only checkpoint access for enhance/eval.
  static GeneratorNet load_generator(const std::filesystem::path& checkpoint_dir);

 private:
  void critic_update(double lr);
  void generator_update(double lr);
  std::vector<Grid> sample_batch(const std::vector<Grid>& pool, Rng& rng) const;

  TrainConfig cfg_;
  Dataset data_;
  GeneratorNet gen_;
  CriticNet critic_;
  AdamState adam_gen_, adam_critic_;
  Rng rng_batch_low_, rng_batch_high_, rng_interp_;
  Segmenter seg_;
  int step_ = 0;
  double last_ld_ = 0.0, last_gp_ = 0.0, last_w1_ = 0.0;
  std::string last_line_;
};

}  // namespace vaot
