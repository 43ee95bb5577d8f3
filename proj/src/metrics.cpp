#include "batchens/metrics.hpp"

#include <cmath>
#include <sstream>

#include "batchens/error.hpp"

namespace batchens {

namespace {

// Shared simplex validation: entries ≥ 0 (NaN fails the comparison), row sums
// within 1e-6 of 1. `where` names the caller in messages.
void check_simplex(const Matrix2D& probs, const char* where) {
  if (probs.rows() == 0 || probs.cols() == 0)
    throw ArgumentError(std::string(where) + ": probability matrix is empty");
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < probs.cols(); ++j) {
      const double p = probs(i, j);
      if (!(p >= 0.0)) {
        std::ostringstream msg;
        msg << where << ": row " << i << " has negative or non-finite probability " << p;
        throw ArgumentError(msg.str());
      }
      sum += p;
    }
    if (!(std::fabs(sum - 1.0) <= 1e-6)) {
      std::ostringstream msg;
      msg << where << ": row " << i << " sums to " << sum << ", not a distribution";
      throw ArgumentError(msg.str());
    }
  }
}

void check_labels(const Matrix2D& probs, const std::vector<std::size_t>& labels,
                  const char* where) {
  if (labels.size() != probs.rows()) {
    std::ostringstream msg;
    msg << where << ": " << probs.rows() << " probability rows vs " << labels.size()
        << " labels";
    throw ShapeError(msg.str());
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= probs.cols()) {
      std::ostringstream msg;
      msg << where << ": label " << labels[i] << " at row " << i << " out of range for "
          << probs.cols() << " classes";
      throw ArgumentError(msg.str());
    }
  }
}

}  // namespace

EceBreakdown ece(const Matrix2D& probs, const std::vector<std::size_t>& labels,
                 std::size_t bins) {
  if (bins == 0) throw ArgumentError("ece: bin count must be at least 1");
  check_simplex(probs, "ece");
  check_labels(probs, labels, "ece");

  const std::size_t n = probs.rows();
  EceBreakdown out;
  out.bins = bins;
  out.bin_stats.assign(bins, EceBin{});
  std::vector<double> conf_sum(bins, 0.0);
  std::vector<double> hit_sum(bins, 0.0);

  for (std::size_t i = 0; i < n; ++i) {
    double conf = probs(i, 0);
    std::size_t arg = 0;
    for (std::size_t j = 1; j < probs.cols(); ++j) {
      if (probs(i, j) > conf) {
        conf = probs(i, j);
        arg = j;
      }
    }
    // Half-open-from-below bins ((m−1)/bins, m/bins]: the index is
    // ceil(conf·bins) − 1, clamped for conf at the extremes.
    std::size_t bin = 0;
    const double scaled = conf * static_cast<double>(bins);
    if (scaled > 0.0) bin = static_cast<std::size_t>(std::ceil(scaled)) - 1;
    if (bin >= bins) bin = bins - 1;

    out.bin_stats[bin].count += 1;
    conf_sum[bin] += conf;
    hit_sum[bin] += (arg == labels[i]) ? 1.0 : 0.0;
  }

  double total = 0.0;
  for (std::size_t m = 0; m < bins; ++m) {
    EceBin& b = out.bin_stats[m];
    if (b.count == 0) continue;
    b.mean_confidence = conf_sum[m] / static_cast<double>(b.count);
    b.mean_accuracy = hit_sum[m] / static_cast<double>(b.count);
    total += (static_cast<double>(b.count) / static_cast<double>(n)) *
             std::fabs(b.mean_accuracy - b.mean_confidence);
  }
  out.ece = total;
  return out;
}

std::vector<double> predictive_entropy(const Matrix2D& probs) {
  check_simplex(probs, "predictive_entropy");
  std::vector<double> out(probs.rows(), 0.0);
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    double h = 0.0;
    for (std::size_t j = 0; j < probs.cols(); ++j) {
      const double p = probs(i, j);
      if (p > 0.0) h -= p * std::log(p);
    }
    out[i] = h;
  }
  return out;
}

std::vector<std::size_t> histogram(const std::vector<double>& values,
                                   double bin_width) {
  if (!(bin_width > 0.0))
    throw ArgumentError("histogram: bin width must be positive");
  std::vector<std::size_t> counts;
  for (double v : values) {
    if (!(v >= 0.0)) {
      std::ostringstream msg;
      msg << "histogram: value " << v << " is negative or non-finite";
      throw ArgumentError(msg.str());
    }
    const std::size_t bin = static_cast<std::size_t>(std::floor(v / bin_width));
    if (bin >= counts.size()) counts.resize(bin + 1, 0);
    counts[bin] += 1;
  }
  return counts;
}

double disagreement(const std::vector<std::size_t>& pred_a,
                    const std::vector<std::size_t>& pred_b) {
  if (pred_a.size() != pred_b.size()) {
    std::ostringstream msg;
    msg << "disagreement: prediction lengths differ (" << pred_a.size() << " vs "
        << pred_b.size() << ")";
    throw ArgumentError(msg.str());
  }
  if (pred_a.empty()) throw ArgumentError("disagreement: empty predictions");
  std::size_t differ = 0;
  for (std::size_t i = 0; i < pred_a.size(); ++i)
    if (pred_a[i] != pred_b[i]) ++differ;
  return static_cast<double>(differ) / static_cast<double>(pred_a.size());
}

std::vector<DiversityPoint> diversity_profile(
    const std::vector<std::vector<std::size_t>>& member_predictions,
    const std::vector<std::size_t>& labels) {
  if (member_predictions.size() < 2)
    throw ArgumentError("diversity_profile: need at least 2 members, got " +
                        std::to_string(member_predictions.size()));
  if (labels.empty()) throw ArgumentError("diversity_profile: empty labels");
  for (std::size_t m = 0; m < member_predictions.size(); ++m) {
    if (member_predictions[m].size() != labels.size()) {
      std::ostringstream msg;
      msg << "diversity_profile: member " << m << " has " << member_predictions[m].size()
          << " predictions for " << labels.size() << " labels";
      throw ShapeError(msg.str());
    }
  }

  auto label_accuracy = [&](const std::vector<std::size_t>& pred) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
      if (pred[i] == labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
  };

  const std::vector<std::size_t>& base = member_predictions[0];
  const double base_acc = label_accuracy(base);
  const bool guard = (base_acc == 1.0);

  std::vector<DiversityPoint> out;
  out.reserve(member_predictions.size());
  for (std::size_t m = 0; m < member_predictions.size(); ++m) {
    DiversityPoint pt;
    pt.accuracy = (m == 0) ? base_acc : label_accuracy(member_predictions[m]);
    pt.disagreement = (m == 0) ? 0.0 : disagreement(base, member_predictions[m]);
    pt.normalization_guarded = guard;
    pt.normalized = guard ? pt.disagreement : pt.disagreement / (1.0 - base_acc);
    out.push_back(pt);
  }
  return out;
}

std::vector<DiversityPoint> diversity_profile(
    const PredictionBundle& bundle, const std::vector<std::size_t>& labels) {
  return diversity_profile(bundle.member_labels, labels);
}

std::vector<DiversityPoint> diversity_profile(
    const std::vector<Matrix2D>& sampled_probs,
    const std::vector<std::size_t>& labels) {
  std::vector<std::vector<std::size_t>> preds;
  preds.reserve(sampled_probs.size());
  for (const Matrix2D& p : sampled_probs) preds.push_back(argmax_rows(p));
  return diversity_profile(preds, labels);
}

}  // namespace batchens
