#include "lact/metrics.hpp"

#include <cmath>

#include "lact/error.hpp"

namespace lact {

bool is_binary(const Image& img) {
  for (double v : img.values)
    if (v != 0.0 && v != 1.0) return false;
  return true;
}

ConfusionCounts confusion(const Image& pred, const Image& truth) {
  if (pred.rows != truth.rows || pred.cols != truth.cols)
    throw ShapeError("mcc: prediction is " + std::to_string(pred.rows) + "x" + std::to_string(pred.cols) + ", truth is " +
                     std::to_string(truth.rows) + "x" + std::to_string(truth.cols));
  if (!is_binary(pred)) throw ValueError("mcc: prediction is not binary");
  if (!is_binary(truth)) throw ValueError("mcc: truth is not binary");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred.values[i] == 1.0, t = truth.values[i] == 1.0;
    if (p && t) ++c.tp;
    else if (!p && !t) ++c.tn;
    else if (p) ++c.fp;
    else ++c.fn;
  }
  return c;
}

double mcc(const ConfusionCounts& c) {
  const double tp = static_cast<double>(c.tp), tn = static_cast<double>(c.tn);
  const double fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
  const double den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (den == 0.0) return 0.0;
  return (tp * tn - fp * fn) / std::sqrt(den);
}

double mcc(const Image& pred, const Image& truth) { return mcc(confusion(pred, truth)); }

double score_sum(const std::vector<Image>& preds, const std::vector<Image>& truths) {
  if (preds.size() != truths.size())
    throw ValueError("score: " + std::to_string(preds.size()) + " predictions for " + std::to_string(truths.size()) +
                     " truths");
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) total += mcc(preds[i], truths[i]);
  return total;
}

double score_level(const std::vector<Image>& preds, const std::vector<Image>& truths) {
  if (preds.size() != 3 || truths.size() != 3)
    throw ValueError("score_level needs exactly three prediction/truth pairs");
  return score_sum(preds, truths);
}

}  // namespace lact
