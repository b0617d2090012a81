#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "epd/config.hpp"
#include "epd/dataset.hpp"
#include "epd/head.hpp"

namespace epd {

struct ParamRef {
  std::string name;
  NumArray* value = nullptr;
  bool learnable = true;
};

// Full predicate-classification model: encoders plus the ensemble head, tied
// to the predicate partition computed from the training split.
struct Model {
  RunConfig cfg;
  EncoderParams enc;
  EpdHead head;
  PredicatePartition partition;
  SubsetAssignment subsets;

  static Model init(const RunConfig& cfg, const PredicatePartition& partition);

  // Every persistent array in a fixed order; running stats are included with
  // learnable=false (checkpointed, never touched by the optimizer).
  std::vector<ParamRef> param_refs();
};

// Flattened minibatch: objects and relations stacked across images.
struct Batch {
  NumArray vis;    // [n_obj x d_v]
  NumArray bbox;   // [n_obj x 4]
  std::vector<int64_t> obj_labels;
  NumArray unions;  // [n_rel x d_v]
  std::vector<int64_t> subj, obj;  // indices into the stacked object rows
  std::vector<int64_t> rel_labels;
  // original per-image pair ids, for mapping predictions back
  std::vector<std::pair<int64_t, int64_t>> pair_ids;

  int64_t n_objects() const { return static_cast<int64_t>(obj_labels.size()); }
  int64_t n_relations() const { return static_cast<int64_t>(rel_labels.size()); }
};

// positives_only drops class-0 relations (training); otherwise every
// annotated pair becomes a candidate (evaluation).
Batch build_batch(const Dataset& ds, std::span<const int64_t> image_indices,
                  bool positives_only);

struct ModelBind {
  EncoderBind enc;
  HeadBind head;
  std::vector<std::pair<std::string, int>> params;  // name -> node id
};

ModelBind bind_model(Graph& g, const Model& m);

struct ForwardNodes {
  int obj_logits = -1;
  int p_feats = -1;
  BranchLogits z;
};

// Runs the full PredCls pipeline on a batch. Ground-truth labels feed the
// semantic path; the object classifier is still trained when object_loss is
// on. Requires n_relations >= 1.
ForwardNodes model_forward(Graph& g, Model& m, const ModelBind& bind,
                           const Batch& batch, BnMode mode);

struct StepLosses {
  LossBreakdown breakdown;
  int total_node = -1;
};

// Builds the training objective for the configured decoder mode. In single
// mode the l_md/l_ad1/l_ad2 slots hold the head/body/tail block means.
StepLosses compute_losses(Graph& g, Model& m, const ForwardNodes& fwd,
                          const Batch& batch);

// One SGD step over a batch of images; returns the loss breakdown.
LossBreakdown train_step(Model& m, const Batch& batch);

struct Prediction {
  int64_t subj = 0;
  int64_t obj = 0;
  int64_t cls = 0;
  double conf = 0.0;
};
using ImagePredictions = std::vector<Prediction>;

struct PredictionSet {
  std::vector<ImagePredictions> per_image;  // aligned with the dataset
};

// Eval-mode scores for every candidate pair of every image: one entry per
// positive class with its masked-softmax probability. Images are processed
// independently (parallel-safe against frozen parameters).
PredictionSet predict_dataset(Model& m, const Dataset& ds,
                              const std::array<float, 3>& lambda);

// Per-branch score breakdown for one annotated pair of one image.
std::vector<ExplainPanel> explain_pair(Model& m, const ImageRecord& rec,
                                       const DatasetHeader& header, int64_t subj,
                                       int64_t obj, int64_t top_n);

}  // namespace epd
