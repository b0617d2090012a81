#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "epd/dataset.hpp"
#include "epd/model.hpp"

namespace epd {

struct ClassRecall {
  int64_t gt_count = 0;
  int64_t hits = 0;
  double recall = 0.0;
};

struct GroupRecall {
  double head = 0.0, body = 0.0, tail = 0.0;
};

struct MetricsReport {
  std::vector<int64_t> k_values;
  std::map<int64_t, double> r_at_k;
  std::map<int64_t, double> mr_at_k;
  std::map<int64_t, std::map<int64_t, ClassRecall>> per_class;  // K -> class -> stats
  std::map<int64_t, GroupRecall> groups;
  double mean_metric = 0.0;
  bool graph_constraint = true;
  int64_t images_evaluated = 0;
};

// Hit flags over gt.relations for one image at one K. Ranking: predictions
// sorted by confidence descending, ties by (subj, obj, class) ascending; under
// the graph constraint only the best prediction per ordered pair survives.
// A ground-truth relation (predicate > 0) is hit when some top-K prediction
// matches (subj, obj, predicate) exactly.
std::vector<char> topk_hits(const ImageRecord& gt, const ImagePredictions& preds,
                            int64_t k, bool graph_constraint);

// Mean per-image recall over images with at least one positive GT relation.
double recall_at_k(const std::vector<const ImageRecord*>& images,
                   const PredictionSet& preds, int64_t k, bool graph_constraint);

// Per-class recall pooled across images: hits_c / gt_c.
std::map<int64_t, ClassRecall> per_class_recall_at_k(
    const std::vector<const ImageRecord*>& images, const PredictionSet& preds,
    int64_t k, bool graph_constraint);

// Unweighted mean over classes with GT support.
double mean_recall_from(const std::map<int64_t, ClassRecall>& per_class);

// Unweighted mean of per-class recalls within each partition block; classes
// absent from the partition raise DataError. Blocks with no supported class
// report 0.
GroupRecall group_recall(const std::map<int64_t, ClassRecall>& per_class,
                         const PredicatePartition& partition);

// Arithmetic mean of all supplied recall and mean-recall values.
double mean_metric(const std::vector<double>& r_values,
                   const std::vector<double>& mr_values);

MetricsReport evaluate_predictions(const std::vector<const ImageRecord*>& images,
                                   const PredictionSet& preds,
                                   const std::vector<int64_t>& k_values,
                                   const PredicatePartition& partition,
                                   bool graph_constraint);

std::string report_to_json(const MetricsReport& r);
std::string report_to_csv(const MetricsReport& r, const PredicatePartition& partition);

}  // namespace epd
