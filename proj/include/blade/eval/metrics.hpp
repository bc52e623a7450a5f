#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "blade/core/tensor.hpp"
#include "blade/data/biased_data.hpp"
#include "blade/losses.hpp"
#include "blade/train/classifier.hpp"

// Evaluation protocols: unbiased accuracy, per-group / worst-group accuracy
// over bias-alignment patterns, the severity-threshold confusion matrix, and
// feature export. Everything here is read-only over model snapshots.

namespace blade {
namespace eval {

inline std::vector<int> predict_labels(const train::Classifier<float>& model, const data::Dataset& ds,
                                       int batch = 512) {
  std::vector<int> pred(static_cast<size_t>(ds.n()));
  for (int start = 0; start < ds.n(); start += batch) {
    int stop = std::min(ds.n(), start + batch);
    std::vector<int> idx;
    for (int i = start; i < stop; ++i) idx.push_back(i);
    TensorF logits = model.logits(ds.gather(idx));
    const int k = logits.dim(1);
    for (int i = 0; i < stop - start; ++i) {
      int best = 0;
      for (int j = 1; j < k; ++j)
        if (logits[static_cast<long>(i) * k + j] > logits[static_cast<long>(i) * k + best]) best = j;
      pred[static_cast<size_t>(start + i)] = best;
    }
  }
  return pred;
}

/// Fraction of correct task predictions on a split.
inline double eval_unbiased(const train::Classifier<float>& model, const data::Dataset& ds) {
  if (ds.n() == 0) throw DataError("eval_unbiased: empty dataset");
  std::vector<int> pred = predict_labels(model, ds);
  long correct = 0;
  for (int i = 0; i < ds.n(); ++i)
    if (pred[static_cast<size_t>(i)] == ds.labels[static_cast<size_t>(i)]) ++correct;
  return static_cast<double>(correct) / ds.n();
}

struct GroupStat {
  std::string name;
  double accuracy = 0;
  long count = 0;
};

struct GroupReport {
  std::vector<GroupStat> groups;
  double overall = 0;
  double worst = 0;
  std::string worst_group;
};

/// Accuracy per bias-alignment pattern. Single-bias datasets yield two groups
/// (aligned / conflicting); two-attribute datasets yield the four
/// combinations. Empty groups are excluded with a warning.
inline GroupReport eval_groups(const train::Classifier<float>& model, const data::Dataset& ds) {
  if (ds.n() == 0) throw DataError("eval_groups: empty dataset");
  std::vector<int> pred = predict_labels(model, ds);

  auto group_id = [&](int i) {
    if (!ds.multi_bias()) return ds.aligned[static_cast<size_t>(i)] ? 0 : 1;
    return (ds.aligned[static_cast<size_t>(i)] ? 0 : 2) + (ds.aligned2[static_cast<size_t>(i)] ? 0 : 1);
  };
  std::vector<std::string> names =
      ds.multi_bias()
          ? std::vector<std::string>{"aligned_aligned", "aligned_conflicting", "conflicting_aligned",
                                     "conflicting_conflicting"}
          : std::vector<std::string>{"aligned", "conflicting"};

  std::vector<long> correct(names.size(), 0), total(names.size(), 0);
  long correct_all = 0;
  for (int i = 0; i < ds.n(); ++i) {
    int g = group_id(i);
    ++total[static_cast<size_t>(g)];
    if (pred[static_cast<size_t>(i)] == ds.labels[static_cast<size_t>(i)]) {
      ++correct[static_cast<size_t>(g)];
      ++correct_all;
    }
  }

  GroupReport rep;
  rep.overall = static_cast<double>(correct_all) / ds.n();
  rep.worst = 2.0;
  for (size_t g = 0; g < names.size(); ++g) {
    if (total[g] == 0) {
      std::cerr << "[eval] warning: group '" << names[g] << "' is empty, excluded from the report\n";
      continue;
    }
    GroupStat st;
    st.name = names[g];
    st.count = total[g];
    st.accuracy = static_cast<double>(correct[g]) / static_cast<double>(total[g]);
    if (st.accuracy < rep.worst) {
      rep.worst = st.accuracy;
      rep.worst_group = st.name;
    }
    rep.groups.push_back(st);
  }
  return rep;
}

/// Per-sample bias-conflicting severities from the current pair of models,
/// computed in inference mode on original images.
inline std::vector<float> compute_severities(const train::Classifier<float>& model_b,
                                             const train::Classifier<float>& model_d, const data::Dataset& ds,
                                             int batch = 512) {
  std::vector<float> w(static_cast<size_t>(ds.n()));
  const int k = model_b.n_classes();
  for (int start = 0; start < ds.n(); start += batch) {
    int stop = std::min(ds.n(), start + batch);
    std::vector<int> idx;
    for (int i = start; i < stop; ++i) idx.push_back(i);
    TensorF imgs = ds.gather(idx);
    TensorF lb = model_b.logits(imgs);
    TensorF ld = model_d.logits(imgs);
    for (int i = 0; i < stop - start; ++i) {
      int y = ds.labels[static_cast<size_t>(start + i)];
      VecX<float> rb = ConstMatMap<float>(lb.data() + static_cast<long>(i) * k, 1, k).row(0).transpose();
      VecX<float> rd = ConstMatMap<float>(ld.data() + static_cast<long>(i) * k, 1, k).row(0).transpose();
      w[static_cast<size_t>(start + i)] = bcs_weight(ce_loss<float>(rb, y), ce_loss<float>(rd, y));
    }
  }
  return w;
}

struct BcsConfusion {
  long aligned_pred_aligned = 0;
  long aligned_pred_conflicting = 0;
  long conflicting_pred_aligned = 0;
  long conflicting_pred_conflicting = 0;

  long total() const {
    return aligned_pred_aligned + aligned_pred_conflicting + conflicting_pred_aligned + conflicting_pred_conflicting;
  }
  double precision() const {
    long p = aligned_pred_conflicting + conflicting_pred_conflicting;
    return p == 0 ? 0.0 : static_cast<double>(conflicting_pred_conflicting) / static_cast<double>(p);
  }
  double recall() const {
    long a = conflicting_pred_aligned + conflicting_pred_conflicting;
    return a == 0 ? 0.0 : static_cast<double>(conflicting_pred_conflicting) / static_cast<double>(a);
  }
};

/// Thresholds the severity at `threshold` to predict conflicting samples and
/// tallies the 2x2 confusion against the ground-truth alignment flags.
inline BcsConfusion bcs_confusion(const train::Classifier<float>& model_b, const train::Classifier<float>& model_d,
                                  const data::Dataset& ds, double threshold = 0.5) {
  std::vector<float> w = compute_severities(model_b, model_d, ds);
  BcsConfusion cm;
  for (int i = 0; i < ds.n(); ++i) {
    bool actual_conflicting = ds.aligned[static_cast<size_t>(i)] == 0;
    bool pred_conflicting = w[static_cast<size_t>(i)] >= threshold;
    if (actual_conflicting)
      (pred_conflicting ? cm.conflicting_pred_conflicting : cm.conflicting_pred_aligned)++;
    else
      (pred_conflicting ? cm.aligned_pred_conflicting : cm.aligned_pred_aligned)++;
  }
  return cm;
}

/// Train-split accuracy split by bias alignment (the mechanism probe for the
/// bias-sensitive model).
struct AlignmentAccuracy {
  double aligned = 0, conflicting = 0;
  long n_aligned = 0, n_conflicting = 0;
};

inline AlignmentAccuracy eval_alignment_accuracy(const train::Classifier<float>& model, const data::Dataset& ds) {
  std::vector<int> pred = predict_labels(model, ds);
  AlignmentAccuracy r;
  long ca = 0, cc = 0;
  for (int i = 0; i < ds.n(); ++i) {
    bool ok = pred[static_cast<size_t>(i)] == ds.labels[static_cast<size_t>(i)];
    if (ds.aligned[static_cast<size_t>(i)]) {
      ++r.n_aligned;
      ca += ok;
    } else {
      ++r.n_conflicting;
      cc += ok;
    }
  }
  r.aligned = r.n_aligned ? static_cast<double>(ca) / r.n_aligned : 0.0;
  r.conflicting = r.n_conflicting ? static_cast<double>(cc) / r.n_conflicting : 0.0;
  return r;
}

/// One l2-normalized feature row per sample, followed by the task label and
/// bias label(s), comma-separated.
inline MatX<float> feature_matrix(const train::Classifier<float>& model, const data::Dataset& ds, int batch = 512) {
  const int d = model.feature_dim();
  MatX<float> out(ds.n(), d);
  for (int start = 0; start < ds.n(); start += batch) {
    int stop = std::min(ds.n(), start + batch);
    std::vector<int> idx;
    for (int i = start; i < stop; ++i) idx.push_back(i);
    TensorF feat = model.features(ds.gather(idx), nullptr);
    MatX<float> block = ConstMatMap<float>(feat.data(), stop - start, d);
    out.middleRows(start, stop - start) = l2_normalize_rows(block);
  }
  return out;
}

inline void export_features(const train::Classifier<float>& model, const data::Dataset& ds,
                            const std::string& path) {
  MatX<float> feats = feature_matrix(model, ds);
  std::filesystem::create_directories(std::filesystem::path(path).parent_path());
  std::ofstream os(path);
  if (!os) throw TrainError("cannot write feature export: " + path);
  for (int i = 0; i < ds.n(); ++i) {
    for (int j = 0; j < feats.cols(); ++j) os << feats(i, j) << ",";
    os << ds.labels[static_cast<size_t>(i)] << "," << ds.bias[static_cast<size_t>(i)];
    if (ds.multi_bias()) os << "," << ds.bias2[static_cast<size_t>(i)];
    os << "\n";
  }
  if (!os) throw TrainError("short write on feature export: " + path);
}

}  // namespace eval
}  // namespace blade
