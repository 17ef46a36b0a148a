#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "vaot/io.hpp"
#include "vaot/trainer.hpp"

using namespace vaot;
using namespace vaot::testing;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("vaot_trainer_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

// a critic whose convs pass channel 0 through a centered delta; D is linear
// with gradient h/16 at a 4x4 pixel lattice (64x64 input)
CriticNet delta_critic(double head_weight) {
  CriticNet c = make_critic(1);
  for (auto& t : c.params.tensors) t.flat() = 0.0;
  for (int layer = 0; layer < 4; ++layer) c.params.tensors[2 * layer].flat()[4] = 1.0;
  c.params.tensors[8].flat()[0] = head_weight;
  return c;
}

Dataset tiny_dataset(int n_low = 4, int n_high = 4, int n_eval = 2, std::uint64_t seed = 7) {
  auto dir = temp_dir("data_" + std::to_string(seed) + "_" + std::to_string(n_low));
  auto manifest = make_dataset(n_low, n_high, n_eval, seed, 64, 64, dir);
  Dataset ds = load_dataset(manifest);
  std::filesystem::remove_all(dir);
  return ds;
}

TrainConfig micro_config(int t1, int t2) {
  TrainConfig cfg;
  cfg.t1_steps = t1;
  cfg.t2_steps = t2;
  cfg.n_critic = 2;
  cfg.batch = 1;
  cfg.k = 6;  // keep micro runs fast
  cfg.m_max = 16;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("cosine_lr hits lr0, lr0/2, and 0 exactly") {
  CHECK(cosine_lr(0, 100, 1e-4) == 1e-4);
  CHECK(cosine_lr(50, 100, 1e-4) == doctest::Approx(5e-5).epsilon(1e-12));
  CHECK(std::abs(cosine_lr(100, 100, 1e-4)) < 1e-20);
  CHECK_THROWS_AS(cosine_lr(101, 100, 1e-4), std::invalid_argument);
}

TEST_CASE("critic loss closed forms: zero critic, unit and double gradient norms") {
  Rng rng(31);
  std::vector<Grid> fakes{random_grid(rng, 64, 64)}, reals{random_grid(rng, 64, 64)};
  std::vector<double> us{0.37};

  // D == 0: means cancel, gradient norm 0, GP contribution exactly lambda_gp
  CriticNet zero = make_critic(3);
  for (auto& t : zero.params.tensors) t.flat() = 0.0;
  {
    Tape t;
    BoundParams bp = bind_params(t, zero.params, true);
    CriticLossBuild lb = build_critic_loss(t, zero, bp, fakes, reals, us, 10.0);
    CHECK(t.value(lb.gp).scalar_value() == 1.0);
    CHECK(t.value(lb.total).scalar_value() == 10.0);
  }
  // ||grad D|| = 1 everywhere: GP = 0 within 1e-10
  {
    CriticNet lin = delta_critic(4.0);
    Tape t;
    BoundParams bp = bind_params(t, lin.params, true);
    CriticLossBuild lb = build_critic_loss(t, lin, bp, fakes, reals, us, 10.0);
    CHECK(std::abs(t.value(lb.gp).scalar_value()) < 1e-10);
  }
  // ||grad D|| = 2: GP = (2-1)^2 = 1 per sample
  {
    CriticNet lin = delta_critic(8.0);
    Tape t;
    BoundParams bp = bind_params(t, lin.params, true);
    CriticLossBuild lb = build_critic_loss(t, lin, bp, fakes, reals, us, 10.0);
    CHECK(t.value(lb.gp).scalar_value() == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("generator loss: identity map makes the cost terms vanish") {
  Rng rng(37);
  std::vector<Grid> xs{random_grid(rng, 64, 64)}, ys{random_grid(rng, 64, 64)};
  CriticNet critic = make_critic(5);
  Segmenter seg;
  TrainConfig cfg;
  Tape t;
  BoundParams cbp = bind_params(t, critic.params, false);
  ApplyFn identity = [](Tape&, NodeId x) { return x; };
  GenLossBuild lb =
      build_generator_loss(t, identity, critic, cbp, xs, ys, 1, cfg, seg, 0);
  CHECK(t.value(lb.c_id).scalar_value() == 0.0);
  CHECK(t.value(lb.c_idy).scalar_value() == 0.0);
  // total reduces to -mean D(x)
  CHECK(t.value(lb.total).scalar_value() ==
        doctest::Approx(t.value(lb.adv).scalar_value()).epsilon(1e-12));
}

TEST_CASE("phase-2 loss with zero topology weights equals phase 1 minus identity term") {
  Rng rng(41);
  std::vector<Grid> xs{random_grid(rng, 64, 64)}, ys{random_grid(rng, 64, 64)};
  GeneratorNet gen = make_generator(9);
  CriticNet critic = make_critic(10);
  Segmenter seg;
  TrainConfig cfg;
  cfg.lambda_s = 0.0;
  cfg.lambda_e = 0.0;

  auto eval_phase = [&](int phase) {
    Tape t;
    BoundParams gbp = bind_params(t, gen.params, false);
    BoundParams cbp = bind_params(t, critic.params, false);
    ApplyFn apply = [&](Tape& tt, NodeId x) { return gen.forward(tt, gbp, x); };
    GenLossBuild lb = build_generator_loss(t, apply, critic, cbp, xs, ys, phase, cfg, seg, 0);
    double idy = lb.c_idy >= 0 ? t.value(lb.c_idy).scalar_value() : 0.0;
    return std::pair<double, double>(t.value(lb.total).scalar_value(), idy);
  };
  auto [total1, idy1] = eval_phase(1);
  auto [total2, idy2] = eval_phase(2);
  CHECK(total2 == doctest::Approx(total1 - cfg.lambda2 * idy1).epsilon(1e-9));
}

TEST_CASE("per-term breakdown sums to the total") {
  Rng rng(43);
  std::vector<Grid> xs, ys;
  for (int i = 0; i < 2; ++i) {
    auto [c, m] = gen_clean(50 + i, 64, 64);
    xs.push_back(degrade(c, DegradeParams{}, 60 + i));
    auto [c2, m2] = gen_clean(70 + i, 64, 64);
    ys.push_back(c2);
  }
  GeneratorNet gen = make_generator(11);
  CriticNet critic = make_critic(12);
  Segmenter seg;
  TrainConfig cfg;
  cfg.k = 8;
  for (int phase : {1, 2}) {
    Tape t;
    BoundParams gbp = bind_params(t, gen.params, false);
    BoundParams cbp = bind_params(t, critic.params, false);
    ApplyFn apply = [&](Tape& tt, NodeId x) { return gen.forward(tt, gbp, x); };
    GenLossBuild lb =
        build_generator_loss(t, apply, critic, cbp, xs, ys, phase, cfg, seg, 99);
    auto v = [&](NodeId id) { return id >= 0 ? t.value(id).scalar_value() : 0.0; };
    double want = cfg.lambda1 * v(lb.c_id) + cfg.lambda2 * v(lb.c_idy) +
                  (phase == 2 ? cfg.lambda_s * v(lb.c_s) + cfg.lambda_e * v(lb.c_e) : 0.0) +
                  v(lb.adv);
    CHECK(std::abs(v(lb.total) - want) < 1e-12);
  }
}

TEST_CASE("one critic step decreases the critic loss for a small enough lr") {
  Rng rng(47);
  std::vector<Grid> fakes{random_grid(rng, 64, 64), random_grid(rng, 64, 64)};
  std::vector<Grid> reals{random_grid(rng, 64, 64), random_grid(rng, 64, 64)};
  std::vector<double> us{0.2, 0.8};
  CriticNet critic = make_critic(13);

  auto loss_at = [&](const CriticNet& c) {
    Tape t;
    BoundParams bp = bind_params(t, c.params, false);
    return t.value(build_critic_loss(t, c, bp, fakes, reals, us, 10.0).total).scalar_value();
  };
  double before = loss_at(critic);

  std::vector<Tensor> grads;
  {
    Tape t;
    BoundParams bp = bind_params(t, critic.params, true);
    CriticLossBuild lb = build_critic_loss(t, critic, bp, fakes, reals, us, 10.0);
    t.backward(lb.total);
    for (NodeId id : bp.ids) grads.push_back(t.grad(id));
  }
  bool decreased = false;
  for (double lr : {1e-3, 1e-4, 1e-5, 1e-6}) {
    CriticNet stepped = critic;
    AdamState st = AdamState::init_like(stepped.params);
    adam_step(stepped.params, grads, st, lr);
    if (loss_at(stepped) < before) {
      decreased = true;
      break;
    }
  }
  CHECK(decreased);
}

TEST_CASE("trainer: T1 = T2 = 0 emits only the initial checkpoint") {
  auto out = temp_dir("zero_steps");
  Trainer tr(micro_config(0, 0), tiny_dataset());
  tr.run(out);
  CHECK(std::filesystem::exists(out / "ckpt_final" / "index.txt"));
  CHECK_FALSE(std::filesystem::exists(out / "ckpt_phase1"));
  CHECK_FALSE(std::filesystem::exists(out / "metrics.tsv"));
  std::filesystem::remove_all(out);
}

TEST_CASE("trainer: identical config and seed produce byte-identical runs") {
  auto out1 = temp_dir("det1"), out2 = temp_dir("det2");
  {
    Trainer tr(micro_config(2, 2), tiny_dataset());
    tr.run(out1);
  }
  {
    Trainer tr(micro_config(2, 2), tiny_dataset());
    tr.run(out2);
  }
  CHECK(slurp(out1 / "metrics.tsv") == slurp(out2 / "metrics.tsv"));
  CHECK(slurp(out1 / "ckpt_final" / "gen_stem.w.vt") ==
        slurp(out2 / "ckpt_final" / "gen_stem.w.vt"));
  CHECK(slurp(out1 / "ckpt_final" / "critic_conv0.w.vt") ==
        slurp(out2 / "ckpt_final" / "critic_conv0.w.vt"));
  std::filesystem::remove_all(out1);
  std::filesystem::remove_all(out2);
}

TEST_CASE("checkpoint: save -> load -> save is byte-identical") {
  auto d1 = temp_dir("ck1"), d2 = temp_dir("ck2");
  Dataset data = tiny_dataset();
  Trainer tr(micro_config(1, 1), data);
  tr.step();
  tr.save_checkpoint(d1);
  Trainer tr2(micro_config(1, 1), data);
  tr2.load_checkpoint(d1);
  tr2.save_checkpoint(d2);
  CHECK(slurp(d1 / "index.txt") == slurp(d2 / "index.txt"));
  CHECK(slurp(d1 / "gen_res0.c1.w.vt") == slurp(d2 / "gen_res0.c1.w.vt"));
  CHECK(slurp(d1 / "critic_head.w.vt") == slurp(d2 / "critic_head.w.vt"));
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}

TEST_CASE("checkpoint restore continues bit-identically") {
  Dataset data = tiny_dataset();
  TrainConfig cfg = micro_config(3, 3);

  Trainer uninterrupted(cfg, data);
  for (int i = 0; i < 5; ++i) uninterrupted.step();

  auto ck = temp_dir("midrun");
  Trainer first(cfg, data);
  for (int i = 0; i < 2; ++i) first.step();
  first.save_checkpoint(ck);
  Trainer resumed(cfg, data);
  resumed.load_checkpoint(ck);
  CHECK(resumed.global_step() == 2);
  for (int i = 0; i < 3; ++i) resumed.step();

  for (int i = 0; i < uninterrupted.generator().params.size(); ++i)
    CHECK((uninterrupted.generator().params.tensors[i].flat() ==
           resumed.generator().params.tensors[i].flat())
              .all());
  for (int i = 0; i < uninterrupted.critic_net().params.size(); ++i)
    CHECK((uninterrupted.critic_net().params.tensors[i].flat() ==
           resumed.critic_net().params.tensors[i].flat())
              .all());
  CHECK(uninterrupted.last_metrics_line() == resumed.last_metrics_line());
  std::filesystem::remove_all(ck);
}

TEST_CASE("phase-2 losses are finite at the phase-1 checkpoint") {
  Dataset data = tiny_dataset();
  TrainConfig cfg = micro_config(2, 1);
  Trainer tr(cfg, data);
  tr.step();
  tr.step();           // phase 1 done
  CHECK(tr.phase() == 2);
  tr.step();           // first phase-2 step computes SGA/EVP; throws on NaN
  CHECK(tr.global_step() == 3);
}

TEST_CASE("checkpoint into a mismatched generator spec names the tensor") {
  auto d = temp_dir("mismatch");
  Dataset data = tiny_dataset();
  Trainer tr(micro_config(1, 0), data);
  tr.save_checkpoint(d);
  Trainer tr2(micro_config(1, 0), data);
  // overwrite one tensor with wrong dims; the load must name it
  Tensor wrong = Tensor::zeros({4, 1, 3, 3});
  write_raw_tensor(d / "gen_stem.w.vt", wrong, true);
  CHECK_THROWS_WITH_AS(tr2.load_checkpoint(d), doctest::Contains("stem.w"), IoError);
  std::filesystem::remove_all(d);
}
