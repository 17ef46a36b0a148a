#include "vaot/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "vaot/error.hpp"
#include "vaot/io.hpp"
#include "vaot/losses.hpp"
#include "vaot/ssim.hpp"

namespace vaot {

double cosine_lr(int step, int phase_len, double lr0) {
  check(phase_len > 0, "cosine_lr: phase_len must be positive");
  check(step >= 0 && step <= phase_len, "cosine_lr: step out of range");
  return lr0 * 0.5 * (1.0 + std::cos(3.141592653589793 * step / phase_len));
}

AdamState AdamState::init_like(const ParamSet& p) {
  AdamState st;
  for (const Tensor& t : p.tensors) {
    st.m.push_back(Tensor::zeros(t.shape().empty() ? std::vector<int>{} : t.shape()));
    st.v.push_back(Tensor::zeros(t.shape().empty() ? std::vector<int>{} : t.shape()));
  }
  return st;
}

void adam_step(ParamSet& params, const std::vector<Tensor>& grads, AdamState& st, double lr,
               double beta1, double beta2, double eps) {
  check(grads.size() == params.tensors.size(), "adam_step: gradient count mismatch");
  st.t += 1;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.t));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    Eigen::ArrayXd& p = params.tensors[i].flat();
    const Eigen::ArrayXd& g = grads[i].flat();
    Eigen::ArrayXd& m = st.m[i].flat();
    Eigen::ArrayXd& v = st.v[i].flat();
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g.square();
    p -= lr * (m / bc1) / ((v / bc2).sqrt() + eps);
  }
}

// ---------------------------------------------------------------------------

CriticLossBuild build_critic_loss(Tape& t, const CriticNet& critic, const BoundParams& bp,
                                  const std::vector<Grid>& fakes,
                                  const std::vector<Grid>& reals,
                                  const std::vector<double>& us, double lambda_gp) {
  check(!fakes.empty() && !reals.empty(), "critic_loss: batches must be non-empty");
  check(us.size() == fakes.size() && fakes.size() == reals.size(),
        "critic_loss: batch sizes must agree");
  int n = static_cast<int>(fakes.size());
  NodeId d_fake = t.constant(0.0);
  NodeId d_real = t.constant(0.0);
  NodeId gp_acc = t.constant(0.0);
  for (int i = 0; i < n; ++i) {
    d_fake = add(t, d_fake, critic.forward(t, bp, t.constant(Tensor::from_grid(fakes[i]))));
    d_real = add(t, d_real, critic.forward(t, bp, t.constant(Tensor::from_grid(reals[i]))));
    Grid interp = us[i] * reals[i] + (1.0 - us[i]) * fakes[i];
    NodeId x_tilde = t.leaf(Tensor::from_grid(interp), true);
    NodeId d_interp = critic.forward(t, bp, x_tilde);
    NodeId g = t.backward_graph(d_interp, {x_tilde})[0];
    NodeId norm = sqrt(t, sum(t, mul(t, g, g)));
    NodeId excess = add_scalar(t, norm, -1.0);
    gp_acc = add(t, gp_acc, mul(t, excess, excess));
  }
  double inv_n = 1.0 / n;
  CriticLossBuild out;
  out.gp = scalar_mul(t, gp_acc, inv_n);
  NodeId sep = scalar_mul(t, sub(t, d_fake, d_real), inv_n);
  out.w1 = scalar_mul(t, sep, -1.0);
  out.total = add(t, sep, scalar_mul(t, out.gp, lambda_gp));
  return out;
}

GenLossBuild build_generator_loss(Tape& t, const ApplyFn& gen_apply, const CriticNet& critic,
                                  const BoundParams& critic_bp, const std::vector<Grid>& xs,
                                  const std::vector<Grid>& ys, int phase,
                                  const TrainConfig& cfg, const Segmenter& seg,
                                  std::uint64_t anchor_seed,
                                  const std::vector<EndpointSet>* fixed_anchors) {
  check(phase == 1 || phase == 2, "generator_loss: phase must be 1 or 2");
  check(!xs.empty(), "generator_loss: empty batch");
  int n = static_cast<int>(xs.size());
  double inv_n = 1.0 / n;
  GenLossBuild out;

  NodeId id_acc = t.constant(0.0);
  NodeId adv_acc = t.constant(0.0);
  NodeId sga_acc = t.constant(0.0);
  NodeId evp_acc = t.constant(0.0);
  for (int i = 0; i < n; ++i) {
    NodeId x = t.constant(Tensor::from_grid(xs[i]));
    NodeId xhat = gen_apply(t, x);
    out.xhat.push_back(xhat);
    id_acc = add(t, id_acc, msssim_cost(t, x, xhat));
    adv_acc = add(t, adv_acc, critic.forward(t, critic_bp, xhat));
    if (phase == 2) {
      if (cfg.lambda_s > 0.0) {
        NodeId seg_x = seg.forward(t, x);
        NodeId seg_xhat = seg.forward(t, xhat);
        sga_acc = add(t, sga_acc, sga_loss(t, seg_x, seg_xhat, cfg.k, cfg.epsilon));
      }
      if (cfg.lambda_e > 0.0) {
        int h = static_cast<int>(xs[i].rows()), w = static_cast<int>(xs[i].cols());
        int l = std::min(cfg.window_l, std::min(h, w));
        EndpointSet anchors;
        if (fixed_anchors) {
          anchors = (*fixed_anchors)[i];
        } else {
          Grid xhat_now = tensor_to_grid(t.value(xhat));
          anchors = anchor_pipeline(xs[i], xhat_now, seg, cfg.k, 0.5, cfg.m_max,
                                    anchor_seed + static_cast<std::uint64_t>(i));
        }
        evp_acc = add(t, evp_acc, evp_loss(t, x, xhat, anchors, l));
      }
    }
  }
  out.c_id = scalar_mul(t, id_acc, inv_n);
  out.adv = scalar_mul(t, scalar_mul(t, adv_acc, inv_n), -1.0);
  NodeId total = add(t, scalar_mul(t, out.c_id, cfg.lambda1), out.adv);

  bool identity_term = (phase == 1) || cfg.keep_identity_phase2;
  if (identity_term) {
    check(!ys.empty(), "generator_loss: identity term needs high-quality batch");
    NodeId idy_acc = t.constant(0.0);
    for (const Grid& y : ys) {
      NodeId yn = t.constant(Tensor::from_grid(y));
      NodeId yhat = gen_apply(t, yn);
      idy_acc = add(t, idy_acc, msssim_cost(t, yn, yhat));
    }
    out.c_idy = scalar_mul(t, idy_acc, 1.0 / static_cast<double>(ys.size()));
    total = add(t, total, scalar_mul(t, out.c_idy, cfg.lambda2));
  }
  if (phase == 2) {
    out.c_s = scalar_mul(t, sga_acc, inv_n);
    out.c_e = scalar_mul(t, evp_acc, inv_n);
    total = add(t, total, scalar_mul(t, out.c_s, cfg.lambda_s));
    total = add(t, total, scalar_mul(t, out.c_e, cfg.lambda_e));
  }
  out.total = total;
  return out;
}

// ---------------------------------------------------------------------------

Trainer::Trainer(TrainConfig cfg, Dataset data)
    : cfg_(cfg),
      data_(std::move(data)),
      gen_(make_generator(cfg.seed)),
      critic_(make_critic(cfg.seed + 1)),
      adam_gen_(AdamState::init_like(gen_.params)),
      adam_critic_(AdamState::init_like(critic_.params)),
      rng_batch_low_(Rng::stream(cfg.seed, 0x626c6fULL)),
      rng_batch_high_(Rng::stream(cfg.seed, 0x626869ULL)),
      rng_interp_(Rng::stream(cfg.seed, 0x696e74ULL)) {
  check(!data_.low.empty() && !data_.high.empty(), "trainer: dataset is empty");
  for (const Grid& g : data_.low)
    check(g.rows() % 4 == 0 && g.cols() % 4 == 0, "trainer: image dims must be divisible by 4");
}

std::vector<Grid> Trainer::sample_batch(const std::vector<Grid>& pool, Rng& rng) const {
  std::vector<Grid> batch;
  batch.reserve(cfg_.batch);
  for (int i = 0; i < cfg_.batch; ++i)
    batch.push_back(pool[rng.uniform_int(static_cast<std::uint64_t>(pool.size()))]);
  return batch;
}

void Trainer::critic_update(double lr) {
  std::vector<Grid> xs = sample_batch(data_.low, rng_batch_low_);
  std::vector<Grid> ys = sample_batch(data_.high, rng_batch_high_);
  std::vector<Grid> fakes;
  fakes.reserve(xs.size());
  for (const Grid& x : xs) fakes.push_back(apply_generator(gen_, x));
  std::vector<double> us;
  us.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) us.push_back(rng_interp_.uniform());

  Tape t;
  BoundParams bp = bind_params(t, critic_.params, true);
  CriticLossBuild lb = build_critic_loss(t, critic_, bp, fakes, ys, us, cfg_.lambda_gp);
  double ld = t.value(lb.total).scalar_value();
  if (!std::isfinite(ld))
    throw NumericError("NaN in critic loss L_D at step " + std::to_string(step_));
  t.backward(lb.total);
  std::vector<Tensor> grads;
  grads.reserve(bp.ids.size());
  for (NodeId id : bp.ids) grads.push_back(t.grad(id));
  adam_step(critic_.params, grads, adam_critic_, lr);
  last_ld_ = ld;
  last_gp_ = t.value(lb.gp).scalar_value();
  last_w1_ = t.value(lb.w1).scalar_value();
}

void Trainer::generator_update(double lr) {
  std::vector<Grid> xs = sample_batch(data_.low, rng_batch_low_);
  std::vector<Grid> ys = sample_batch(data_.high, rng_batch_high_);

  Tape t;
  BoundParams gen_bp = bind_params(t, gen_.params, true);
  BoundParams critic_bp = bind_params(t, critic_.params, false);
  ApplyFn apply = [this, &gen_bp](Tape& tt, NodeId x) { return gen_.forward(tt, gen_bp, x); };
  std::uint64_t anchor_seed = sample_seed(cfg_.seed, "anchors", step_);
  GenLossBuild lb = build_generator_loss(t, apply, critic_, critic_bp, xs, ys, phase(), cfg_,
                                         seg_, anchor_seed);
  auto term = [&](NodeId id) { return id < 0 ? 0.0 : t.value(id).scalar_value(); };
  const char* names[] = {"L_G", "C_id", "C_idy", "C_s", "C_e", "adv"};
  NodeId ids[] = {lb.total, lb.c_id, lb.c_idy, lb.c_s, lb.c_e, lb.adv};
  for (int i = 0; i < 6; ++i)
    if (ids[i] >= 0 && !std::isfinite(t.value(ids[i]).scalar_value()))
      throw NumericError(std::string("NaN in generator term ") + names[i] + " at step " +
                         std::to_string(step_));
  t.backward(lb.total);
  std::vector<Tensor> grads;
  grads.reserve(gen_bp.ids.size());
  for (NodeId id : gen_bp.ids) grads.push_back(t.grad(id));
  adam_step(gen_.params, grads, adam_gen_, lr);

  int ph = phase();
  std::ostringstream line;
  line << step_ << '\t' << ph << '\t' << format_double(lr) << '\t' << format_double(last_ld_)
       << '\t' << format_double(last_gp_) << '\t' << format_double(term(lb.total)) << '\t'
       << format_double(term(lb.c_id)) << '\t' << format_double(term(lb.c_idy)) << '\t'
       << format_double(term(lb.c_s)) << '\t' << format_double(term(lb.c_e)) << '\t'
       << format_double(last_w1_);
  last_line_ = line.str();
}

void Trainer::step() {
  check(!done(), "trainer: schedule already complete");
  int ph = phase();
  int phase_len = ph == 1 ? cfg_.t1_steps : cfg_.t2_steps;
  int phase_step = ph == 1 ? step_ : step_ - cfg_.t1_steps;
  double lr = cosine_lr(phase_step, phase_len, cfg_.lr0);
  for (int i = 0; i < cfg_.n_critic; ++i) critic_update(lr);
  generator_update(lr);
  ++step_;
}

const char* Trainer::metrics_header() {
  return "step\tphase\tlr\tL_D\tGP\tL_G\tC_id\tC_idy\tC_s\tC_e\tW1est";
}

void Trainer::run(const std::filesystem::path& out_dir, std::ostream* console) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory: " + out_dir.string());
  int total = cfg_.t1_steps + cfg_.t2_steps;
  if (total == 0) {
    save_checkpoint(out_dir / "ckpt_final");
    return;
  }
  std::ofstream metrics(out_dir / "metrics.tsv");
  if (!metrics) throw IoError("cannot open metrics log");
  metrics << metrics_header() << "\n";
  bool phase1_saved = step_ >= cfg_.t1_steps;
  while (!done()) {
    step();
    metrics << last_line_ << "\n";
    if (!phase1_saved && step_ >= cfg_.t1_steps) {
      save_checkpoint(out_dir / "ckpt_phase1");
      phase1_saved = true;
    }
    if (console && (step_ % 25 == 0 || step_ == total)) {
      *console << "step " << step_ << "/" << total << " phase " << phase() << "\n";
      console->flush();
    }
  }
  metrics.flush();
  if (!metrics) throw IoError("metrics log write failed");
  save_checkpoint(out_dir / "ckpt_final");
}

// ---------------------------------------------------------------------------
// checkpoints: per-tensor f64 raw files plus a text index

namespace {

void save_param_group(const std::filesystem::path& dir, const std::string& prefix,
                      const ParamSet& params, const AdamState& st, std::ostream& index) {
  for (int i = 0; i < params.size(); ++i) {
    std::string stem = prefix + "_" + params.names[i];
    write_raw_tensor(dir / (stem + ".vt"), params.tensors[i], true);
    write_raw_tensor(dir / (stem + ".m.vt"), st.m[i], true);
    write_raw_tensor(dir / (stem + ".v.vt"), st.v[i], true);
    index << "tensor\t" << prefix << '\t' << params.names[i] << '\t' << stem << "\n";
  }
}

void load_param_group(const std::filesystem::path& dir, const std::string& prefix,
                      ParamSet& params, AdamState& st) {
  for (int i = 0; i < params.size(); ++i) {
    std::string stem = prefix + "_" + params.names[i];
    Tensor v = read_raw_tensor(dir / (stem + ".vt"));
    if (v.shape() != params.tensors[i].shape())
      throw IoError("checkpoint: shape mismatch for tensor '" + params.names[i] +
                    "' (got " + shape_str(v.shape()) + ", want " +
                    shape_str(params.tensors[i].shape()) + ")");
    params.tensors[i] = std::move(v);
    st.m[i] = read_raw_tensor(dir / (stem + ".m.vt"));
    st.v[i] = read_raw_tensor(dir / (stem + ".v.vt"));
  }
}

void write_rng(std::ostream& os, const char* name, const Rng& rng) {
  os << "rng\t" << name;
  for (std::uint64_t wd : rng.state()) os << '\t' << wd;
  os << "\n";
}

}  // namespace

void Trainer::save_checkpoint(const std::filesystem::path& dir) const {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory: " + dir.string());
  std::ostringstream index;
  index << "vaot-checkpoint\t1\n";
  index << "step\t" << step_ << "\n";
  index << "adam_t\tgen\t" << adam_gen_.t << "\n";
  index << "adam_t\tcritic\t" << adam_critic_.t << "\n";
  write_rng(index, "batch_low", rng_batch_low_);
  write_rng(index, "batch_high", rng_batch_high_);
  write_rng(index, "interp", rng_interp_);
  save_param_group(dir, "gen", gen_.params, adam_gen_, index);
  save_param_group(dir, "critic", critic_.params, adam_critic_, index);
  std::ofstream f(dir / "index.txt", std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint index");
  f << index.str();
}

GeneratorNet Trainer::load_generator(const std::filesystem::path& dir) {
  GeneratorNet gen = make_generator(0);
  AdamState scratch = AdamState::init_like(gen.params);
  load_param_group(dir, "gen", gen.params, scratch);
  return gen;
}

void Trainer::load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream f(dir / "index.txt");
  if (!f) throw IoError("cannot open checkpoint index: " + (dir / "index.txt").string());
  std::string line;
  bool magic_ok = false;
  while (std::getline(f, line)) {
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "vaot-checkpoint") {
      magic_ok = true;
    } else if (kind == "step") {
      ls >> step_;
    } else if (kind == "adam_t") {
      std::string which;
      long tval;
      ls >> which >> tval;
      (which == "gen" ? adam_gen_ : adam_critic_).t = tval;
    } else if (kind == "rng") {
      std::string which;
      std::array<std::uint64_t, 4> st{};
      ls >> which >> st[0] >> st[1] >> st[2] >> st[3];
      if (which == "batch_low") rng_batch_low_.set_state(st);
      else if (which == "batch_high") rng_batch_high_.set_state(st);
      else if (which == "interp") rng_interp_.set_state(st);
      else throw IoError("checkpoint: unknown rng stream '" + which + "'");
    }
    // tensor rows are resolved from the parameter sets below
  }
  if (!magic_ok) throw IoError("checkpoint: missing header");
  load_param_group(dir, "gen", gen_.params, adam_gen_);
  load_param_group(dir, "critic", critic_.params, adam_critic_);
}

}  // namespace vaot
