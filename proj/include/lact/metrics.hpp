#pragma once

#include <cstddef>
#include <vector>

#include "lact/matrix.hpp"

namespace lact {

struct ConfusionCounts {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  std::size_t total() const { return tp + tn + fp + fn; }
};

bool is_binary(const Image& img);

/// Both images must be strictly {0, 1} and the same shape.
ConfusionCounts confusion(const Image& pred, const Image& truth);

/// Matthews correlation coefficient; 0 when any marginal is empty.
double mcc(const ConfusionCounts& c);
double mcc(const Image& pred, const Image& truth);

/// Sum of per-pair MCC over exactly three phantoms (one challenge level, max 3.0).
double score_level(const std::vector<Image>& preds, const std::vector<Image>& truths);

/// Sum of per-pair MCC over any number of pairs (the four-image tuning convention, max 4.0).
double score_sum(const std::vector<Image>& preds, const std::vector<Image>& truths);

}  // namespace lact
