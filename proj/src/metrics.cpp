#include "vaot/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "vaot/endpoints.hpp"
#include "vaot/io.hpp"
#include "vaot/ssim.hpp"

namespace vaot {

double cldice_metric(const BinaryMask& pred, const BinaryMask& gt, int k) {
  check(pred.grid.rows() == gt.grid.rows() && pred.grid.cols() == gt.grid.cols(),
        "cldice_metric: shape mismatch");
  BinaryMask sk_pred = hard_skeletonize(pred, k);
  BinaryMask sk_gt = hard_skeletonize(gt, k);
  double n_pred = sk_pred.grid.sum();
  double n_gt = sk_gt.grid.sum();
  if (n_pred == 0.0 || n_gt == 0.0) return (pred.empty() && gt.empty()) ? 1.0 : 0.0;
  double tprec = (sk_pred.grid * gt.grid).sum() / n_pred;
  double tsens = (sk_gt.grid * pred.grid).sum() / n_gt;
  if (tprec + tsens == 0.0) return 0.0;
  return 2.0 * tprec * tsens / (tprec + tsens);
}

ConfusionScores confusion_scores(const BinaryMask& pred, const BinaryMask& gt) {
  check(pred.grid.rows() == gt.grid.rows() && pred.grid.cols() == gt.grid.cols(),
        "confusion_scores: shape mismatch");
  double tp = 0, fp = 0, fn = 0, tn = 0;
  for (Eigen::Index y = 0; y < gt.grid.rows(); ++y)
    for (Eigen::Index x = 0; x < gt.grid.cols(); ++x) {
      bool p = pred.grid(y, x) != 0.0, g = gt.grid(y, x) != 0.0;
      if (p && g) ++tp;
      else if (p) ++fp;
      else if (g) ++fn;
      else ++tn;
    }
  ConfusionScores s;
  s.dice = (2 * tp + fp + fn) == 0.0 ? 1.0 : 2 * tp / (2 * tp + fp + fn);
  s.precision = (tp + fp) == 0.0 ? 1.0 : tp / (tp + fp);
  s.recall = (tp + fn) == 0.0 ? 1.0 : tp / (tp + fn);
  s.specificity = (tn + fp) == 0.0 ? 1.0 : tn / (tn + fp);
  return s;
}

EvalReport evaluate(const EnhanceFn& enhance, const std::vector<EvalTriple>& triples,
                    const TrainConfig& cfg, const Segmenter& seg) {
  EvalReport rep;
  for (std::size_t i = 0; i < triples.size(); ++i) {
    const EvalTriple& tr = triples[i];
    Grid enhanced = enhance(tr.degraded);
    EvalRow row;
    row.sample_id = static_cast<int>(i);
    row.ssim = ssim_value(tr.clean, enhanced);
    row.psnr = psnr(tr.clean, enhanced);
    BinaryMask pred = binarize(seg.segment(enhanced), 0.5);
    BinaryMask gt(tr.mask);
    row.cldice = cldice_metric(pred, gt, cfg.k);
    ConfusionScores cs = confusion_scores(pred, gt);
    row.dice = cs.dice;
    row.precision = cs.precision;
    row.recall = cs.recall;
    row.specificity = cs.specificity;
    int ep_pred = detect_endpoints(hard_skeletonize(pred, cfg.k)).size();
    int ep_gt = detect_endpoints(hard_skeletonize(gt, cfg.k)).size();
    row.endpoint_delta = std::abs(ep_pred - ep_gt);
    rep.rows.push_back(row);
  }
  auto fields = [](EvalRow& r) {
    return std::array<double*, 8>{&r.ssim, &r.psnr, &r.cldice, &r.dice,
                                  &r.precision, &r.recall, &r.specificity, &r.endpoint_delta};
  };
  if (!rep.rows.empty()) {
    double n = static_cast<double>(rep.rows.size());
    auto mf = fields(rep.mean);
    for (EvalRow& r : rep.rows) {
      auto rf = fields(r);
      for (int j = 0; j < 8; ++j) *mf[j] += *rf[j];
    }
    for (int j = 0; j < 8; ++j) *mf[j] /= n;
    auto sf = fields(rep.stddev);
    for (EvalRow& r : rep.rows) {
      auto rf = fields(r);
      for (int j = 0; j < 8; ++j) {
        double d = *rf[j] - *mf[j];
        *sf[j] += d * d;
      }
    }
    for (int j = 0; j < 8; ++j) *sf[j] = std::sqrt(*sf[j] / n);
  }
  return rep;
}

namespace {

void write_row(std::ostream& os, const std::string& label, const EvalRow& r) {
  os << label << '\t' << format_double(r.ssim) << '\t' << format_double(r.psnr) << '\t'
     << format_double(r.cldice) << '\t' << format_double(r.dice) << '\t'
     << format_double(r.precision) << '\t' << format_double(r.recall) << '\t'
     << format_double(r.specificity) << '\t' << format_double(r.endpoint_delta) << "\n";
}

EvalRow parse_row(const std::string& line, std::string* label) {
  std::istringstream ls(line);
  EvalRow r;
  ls >> *label >> r.ssim >> r.psnr >> r.cldice >> r.dice >> r.precision >> r.recall >>
      r.specificity >> r.endpoint_delta;
  if (!ls) throw IoError("report: malformed row: " + line);
  return r;
}

}  // namespace

void write_report(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write report: " + path.string());
  f << "sample\tssim\tpsnr\tcldice\tdice\tprecision\trecall\tspecificity\tendpoint_delta\n";
  for (const EvalRow& r : report.rows) write_row(f, std::to_string(r.sample_id), r);
  write_row(f, "mean", report.mean);
  write_row(f, "stddev", report.stddev);
}

EvalReport read_report(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open report: " + path.string());
  std::string line;
  std::getline(f, line);  // header
  EvalReport rep;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::string label;
    EvalRow r = parse_row(line, &label);
    if (label == "mean") {
      rep.mean = r;
    } else if (label == "stddev") {
      rep.stddev = r;
    } else {
      r.sample_id = std::stoi(label);
      rep.rows.push_back(r);
    }
  }
  return rep;
}

}  // namespace vaot
