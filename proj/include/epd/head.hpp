#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "epd/autograd.hpp"
#include "epd/config.hpp"
#include "epd/encoders.hpp"

namespace epd {

// Three-branch predicate decoding head. The pair expansion and (by default)
// the decoder stack are shared; the three batch-norm branches and the single
// classifier give each decoder its own view of the shared trunk.
struct EpdHead {
  NumArray pair_w, pair_b;        // 2*d_p -> d_v (output dim must match the
                                  // union feature for the elementwise product)
  std::vector<AffineStack> fpd;   // size 1 when shared, 3 when independent
  BatchNormState bn_md, bn_ad1, bn_ad2;  // d_h channels each, never shared
  NumArray cls_w, cls_b;          // d_h -> num_predicate_classes

  bool shared_fpd() const { return fpd.size() == 1; }
};

EpdHead make_head(const RunConfig& cfg, Rng& rng);

struct HeadBind {
  int pair_w = -1, pair_b = -1;
  std::vector<StackBind> fpd;
  int g_md = -1, b_md = -1, g_ad1 = -1, b_ad1 = -1, g_ad2 = -1, b_ad2 = -1;
  int cls_w = -1, cls_b = -1;
};

HeadBind bind_head(Graph& g, const EpdHead& head,
                   std::vector<std::pair<std::string, int>>& out_nodes);

struct BranchFeatures {
  int md = -1, ad1 = -1, ad2 = -1;
  int trunk = -1;  // shared trunk before batch norm (shared-stack case)
};

// Shared trunk t = F(W_pair([p_i; p_j]) * u), then one batch-norm branch per
// decoder. Every relation flows through all branches; masking is applied only
// in the losses. With bn disabled all branch features alias the trunk.
BranchFeatures decode_branches(Graph& g, const HeadBind& hb, EpdHead& head,
                               int p_i, int p_j, int unions, BnMode mode,
                               Activation act, bool bn_enabled);

// Single-decoder path: the gated trunk through the main branch's batch norm
// (or raw when bn is disabled), then the shared classifier.
int decode_single(Graph& g, const HeadBind& hb, EpdHead& head, int p_i, int p_j,
                  int unions, BnMode mode, Activation act, bool bn_enabled);

// Shared classifier over one branch's features.
int classify(Graph& g, const HeadBind& hb, int features);

struct BranchLogits {
  int md = -1, ad1 = -1, ad2 = -1;
};

struct SubsetLosses {
  int l_md = -1, l_ad1 = -1, l_ad2 = -1;  // scalar nodes (constant 0 when empty)
  int64_t n_md = 0, n_ad1 = 0, n_ad2 = 0;  // instances contributing per subset
};

// Mean CE per decoder over the batch instances whose label lies in the
// decoder's class subset; instances outside a subset contribute no gradient
// to that branch, and an empty subset yields a constant zero.
SubsetLosses decoder_losses(Graph& g, const BranchLogits& z,
                            const std::vector<int64_t>& labels,
                            const SubsetAssignment& assign);

// z_sum = l_md*z_md + l_ad1*z_ad1 + l_ad2*z_ad2; zero weights drop out so
// (1,0,0) returns the main branch bitwise.
int aggregate_logits(Graph& g, const BranchLogits& z, const std::array<float, 3>& lambda);

// Mean CE of the aggregated logits over all batch instances.
int aggregated_loss(Graph& g, int z_sum, const std::vector<int64_t>& labels);

// (1-gamma)*(l_md + alpha*l_ad1 + beta*l_ad2) + gamma*l_agg [+ l_obj].
// Zero-weight components drop out, so gamma == 1 returns l_agg exactly.
int total_loss(Graph& g, const SubsetLosses& parts, int l_agg, int l_obj,
               float alpha, float beta, float gamma);

// Head/body/tail coefficients of the single-decoder composition:
// (1, (1+alpha)(1-gamma), (1+alpha+beta)(1-gamma)).
std::array<double, 3> single_decoder_coefficients(double alpha, double beta,
                                                  double gamma);

// Single-decoder re-weighted objective: block-mean CE terms scaled by the
// coefficients above. Returns the scalar node; block instance counts go to
// out_counts (head, body, tail) and the unscaled block-mean loss nodes to
// out_blocks when requested.
int single_decoder_loss(Graph& g, int z, const std::vector<int64_t>& labels,
                        const PredicatePartition& partition, float alpha, float beta,
                        float gamma, std::array<int64_t, 3>* out_counts,
                        std::array<int, 3>* out_blocks = nullptr);

// Per-batch loss components in double, plus subset instance counts.
struct LossBreakdown {
  double l_md = 0, l_ad1 = 0, l_ad2 = 0, l_agg = 0, l_obj = 0, l_total = 0;
  int64_t n_md = 0, n_ad1 = 0, n_ad2 = 0;
};

// ---- inference-side helpers (plain arrays, no tape) ----

// Weighted combination of logit rows renormalized over the included branches:
// softmax((sum_i l_i z_i) / (sum_i l_i)) with class 0 excluded from the
// normalization; entry 0 of the result is 0.
NumArray masked_softmax_positive(const NumArray& z_row);

struct ExplainEntry {
  int64_t cls = 0;
  double score = 0.0;
};
using ExplainPanel = std::vector<ExplainEntry>;

// Three panels: main decoder only, main + first auxiliary, all three.
// Partial combinations renormalize the weights over the included branches.
std::vector<ExplainPanel> explain_panels(const NumArray& z_md, const NumArray& z_ad1,
                                         const NumArray& z_ad2,
                                         const std::array<float, 3>& lambda,
                                         int64_t top_n);

}  // namespace epd
