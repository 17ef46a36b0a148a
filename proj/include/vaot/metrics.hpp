#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "vaot/config.hpp"
#include "vaot/morphology.hpp"
#include "vaot/nets.hpp"
#include "vaot/synth.hpp"

namespace vaot {

// Hard-skeleton topology agreement in [0,1]; 1 for identical non-empty masks.
// If either truncated skeleton is empty: 1 when both masks are empty, else 0.
double cldice_metric(const BinaryMask& pred, const BinaryMask& gt, int k);

struct ConfusionScores {
  double dice, precision, recall, specificity;
};

// Pixelwise scores. 0/0 conventions: dice of two empty masks is 1;
// precision/recall/specificity with an empty denominator are 1.
ConfusionScores confusion_scores(const BinaryMask& pred, const BinaryMask& gt);

struct EvalRow {
  int sample_id = 0;
  double ssim = 0, psnr = 0, cldice = 0, dice = 0, precision = 0, recall = 0,
         specificity = 0, endpoint_delta = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  EvalRow mean;    // sample_id unused
  EvalRow stddev;  // population standard deviation
};

using EnhanceFn = std::function<Grid(const Grid&)>;

// Runs the enhancer on each degraded image, scores SSIM/PSNR against the
// clean reference, then segments the enhanced output with the frozen
// segmenter and scores the binarized mask against ground truth.
EvalReport evaluate(const EnhanceFn& enhance, const std::vector<EvalTriple>& triples,
                    const TrainConfig& cfg, const Segmenter& seg);

void write_report(const std::filesystem::path& path, const EvalReport& report);
EvalReport read_report(const std::filesystem::path& path);

}  // namespace vaot
