#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "vaot/endpoints.hpp"
#include "vaot/error.hpp"
#include "vaot/io.hpp"
#include "vaot/metrics.hpp"
#include "vaot/morphology.hpp"
#include "vaot/suites.hpp"
#include "vaot/synth.hpp"
#include "vaot/trainer.hpp"

namespace {

using namespace vaot;

Grid read_image(const std::filesystem::path& p) {
  if (p.extension() == ".pgm") return read_pgm(p);
  return tensor_to_grid(read_raw_tensor(p));
}

void write_image(const std::filesystem::path& p, const Grid& g) {
  if (p.extension() == ".pgm")
    write_pgm(p, g);
  else
    write_raw_tensor(p, Tensor::from_grid(g));
}

std::pair<int, int> parse_size(const std::string& s) {
  std::size_t x = s.find('x');
  if (x == std::string::npos) throw ConfigError("--size must look like 64x64");
  int h = 0, w = 0;
  try {
    h = std::stoi(s.substr(0, x));
    w = std::stoi(s.substr(x + 1));
  } catch (const std::exception&) {
    throw ConfigError("--size must look like 64x64");
  }
  if (h < 32 || w < 32) throw ConfigError("--size dims must be >= 32");
  if (h % 4 != 0 || w % 4 != 0) throw ConfigError("--size dims must be divisible by 4");
  return {h, w};
}

int run(int argc, char** argv) {
  CLI::App app{"vessel-aware enhancement pipeline"};
  app.require_subcommand(1);

  // gen-data
  auto* gd = app.add_subcommand("gen-data", "generate a synthetic vessel dataset");
  std::string gd_out, gd_size = "64x64";
  int gd_low = 8, gd_high = 8, gd_eval = 0;
  std::uint64_t gd_seed = 1;
  gd->add_option("--out", gd_out, "output directory")->required();
  gd->add_option("--n-low", gd_low, "degraded training images");
  gd->add_option("--n-high", gd_high, "clean training images");
  gd->add_option("--n-eval", gd_eval, "held-out eval triples");
  gd->add_option("--seed", gd_seed, "master seed");
  gd->add_option("--size", gd_size, "HxW, divisible by 4");

  // train
  auto* tr = app.add_subcommand("train", "two-phase adversarial training");
  std::string tr_config, tr_data, tr_out, tr_resume;
  tr->add_option("--config", tr_config, "config file")->required();
  tr->add_option("--data", tr_data, "dataset manifest")->required();
  tr->add_option("--out", tr_out, "output directory")->required();
  tr->add_option("--resume", tr_resume, "checkpoint directory to resume from");

  // enhance
  auto* en = app.add_subcommand("enhance", "apply a trained enhancer to one image");
  std::string en_ckpt, en_in, en_out;
  en->add_option("--ckpt", en_ckpt, "checkpoint directory")->required();
  en->add_option("--in", en_in, "input image (.pgm or .vt)")->required();
  en->add_option("--out", en_out, "output image (.pgm or .vt)")->required();

  // skeletonize
  auto* sk = app.add_subcommand("skeletonize", "soft or hard skeleton of a mask");
  std::string sk_in, sk_out;
  int sk_k = 20;
  bool sk_soft = false, sk_hard = false;
  sk->add_option("--in", sk_in, "input mask image")->required();
  sk->add_option("--k", sk_k, "iteration count");
  sk->add_flag("--soft", sk_soft, "differentiable soft skeleton");
  sk->add_flag("--hard", sk_hard, "exact set-based skeleton");
  sk->add_option("--out", sk_out, "output image")->required();

  // endpoints
  auto* ep = app.add_subcommand("endpoints", "skeleton endpoints as row/col TSV");
  std::string ep_in, ep_out;
  ep->add_option("--in", ep_in, "binary skeleton image")->required();
  ep->add_option("--out", ep_out, "output TSV")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "score a checkpoint on eval triples");
  std::string ev_ckpt, ev_data, ev_out, ev_config;
  ev->add_option("--ckpt", ev_ckpt, "checkpoint directory")->required();
  ev->add_option("--data", ev_data, "dataset manifest")->required();
  ev->add_option("--out", ev_out, "report path")->required();
  ev->add_option("--config", ev_config, "config file (defaults otherwise)");

  // grad-check
  auto* gc = app.add_subcommand("grad-check", "finite-difference gradient suites");
  std::string gc_suite = "all";
  gc->add_option("--suite", gc_suite, "primitives|composites|full|all");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  if (gd->parsed()) {
    auto [h, w] = parse_size(gd_size);
    std::filesystem::path manifest = make_dataset(gd_low, gd_high, gd_eval, gd_seed, h, w, gd_out);
    std::cout << "wrote " << manifest.string() << "\n";
    return 0;
  }

  if (tr->parsed()) {
    TrainConfig cfg = parse_config_file(tr_config);
    Dataset data = load_dataset(tr_data);
    Trainer trainer(cfg, std::move(data));
    if (!tr_resume.empty()) trainer.load_checkpoint(tr_resume);
    trainer.run(tr_out, &std::cout);
    std::cout << "final checkpoint: " << (std::filesystem::path(tr_out) / "ckpt_final").string()
              << "\n";
    return 0;
  }

  if (en->parsed()) {
    GeneratorNet gen = Trainer::load_generator(en_ckpt);
    write_image(en_out, apply_generator(gen, read_image(en_in)));
    return 0;
  }

  if (sk->parsed()) {
    if (sk_soft == sk_hard) throw ConfigError("skeletonize: pass exactly one of --soft/--hard");
    Grid in = read_image(sk_in);
    if (sk_hard) {
      BinaryMask skel = hard_skeletonize(binarize(in, 0.5), sk_k);
      write_image(sk_out, skel.grid);
    } else {
      Tape t;
      SoftMask m(in);
      SkeletonStack st = soft_skeletonize(t, t.constant(Tensor::from_grid(m.grid)), sk_k);
      write_image(sk_out, tensor_to_grid(t.value(st.unioned)));
    }
    return 0;
  }

  if (ep->parsed()) {
    EndpointSet set = detect_endpoints(binarize(read_image(ep_in), 0.5));
    std::string out;
    for (auto [r, c] : set.points)
      out += std::to_string(r) + "\t" + std::to_string(c) + "\n";
    std::ofstream f(ep_out, std::ios::binary);
    if (!f) throw IoError("cannot write " + ep_out);
    f << out;
    return 0;
  }

  if (ev->parsed()) {
    TrainConfig cfg = ev_config.empty() ? TrainConfig{} : parse_config_file(ev_config);
    GeneratorNet gen = Trainer::load_generator(ev_ckpt);
    Dataset data = load_dataset(ev_data);
    Segmenter seg;
    EvalReport rep = evaluate([&gen](const Grid& g) { return apply_generator(gen, g); },
                              data.eval, cfg, seg);
    write_report(ev_out, rep);
    std::printf("mean ssim %.4f psnr %.2f cldice %.4f dice %.4f\n", rep.mean.ssim,
                rep.mean.psnr, rep.mean.cldice, rep.mean.dice);
    return 0;
  }

  if (gc->parsed()) {
    std::vector<SuiteResult> results = run_grad_suite(gc_suite);
    bool all_pass = true;
    for (const SuiteResult& r : results) {
      std::printf("%s  %-32s max-rel-error %.3e  (tol %.0e)\n", r.pass ? "PASS" : "FAIL",
                  r.name.c_str(), r.max_rel_error, r.tol);
      all_pass &= r.pass;
    }
    return all_pass ? 0 : 4;
  }

  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
