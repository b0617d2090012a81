#include "epd/head.hpp"

#include <algorithm>
#include <cmath>

namespace epd {

EpdHead make_head(const RunConfig& cfg, Rng& rng) {
  EpdHead h;
  h.pair_w = init_affine_weight(2 * cfg.d_p, cfg.d_v, rng);
  h.pair_b = NumArray::zeros({cfg.d_v});
  const int n_stacks = cfg.shared_fpd ? 1 : 3;
  for (int i = 0; i < n_stacks; ++i) h.fpd.push_back(make_stack(cfg.d_v, cfg.d_h, rng));
  h.bn_md = BatchNormState::init(cfg.d_h);
  h.bn_ad1 = BatchNormState::init(cfg.d_h);
  h.bn_ad2 = BatchNormState::init(cfg.d_h);
  h.cls_w = init_affine_weight(cfg.d_h, cfg.num_predicate_classes, rng);
  h.cls_b = NumArray::zeros({cfg.num_predicate_classes});
  return h;
}

HeadBind bind_head(Graph& g, const EpdHead& head,
                   std::vector<std::pair<std::string, int>>& out_nodes) {
  HeadBind b;
  b.pair_w = g.leaf(head.pair_w);
  b.pair_b = g.leaf(head.pair_b);
  out_nodes.emplace_back("head.pair.w", b.pair_w);
  out_nodes.emplace_back("head.pair.b", b.pair_b);
  for (size_t i = 0; i < head.fpd.size(); ++i) {
    const std::string prefix =
        head.fpd.size() == 1 ? std::string("head.fpd")
                             : "head.fpd" + std::to_string(i);
    StackBind sb;
    sb.w1 = g.leaf(head.fpd[i].w1);
    sb.b1 = g.leaf(head.fpd[i].b1);
    sb.w2 = g.leaf(head.fpd[i].w2);
    sb.b2 = g.leaf(head.fpd[i].b2);
    out_nodes.emplace_back(prefix + ".w1", sb.w1);
    out_nodes.emplace_back(prefix + ".b1", sb.b1);
    out_nodes.emplace_back(prefix + ".w2", sb.w2);
    out_nodes.emplace_back(prefix + ".b2", sb.b2);
    b.fpd.push_back(sb);
  }
  b.g_md = g.leaf(head.bn_md.gamma);
  b.b_md = g.leaf(head.bn_md.beta);
  b.g_ad1 = g.leaf(head.bn_ad1.gamma);
  b.b_ad1 = g.leaf(head.bn_ad1.beta);
  b.g_ad2 = g.leaf(head.bn_ad2.gamma);
  b.b_ad2 = g.leaf(head.bn_ad2.beta);
  out_nodes.emplace_back("head.bn_md.gamma", b.g_md);
  out_nodes.emplace_back("head.bn_md.beta", b.b_md);
  out_nodes.emplace_back("head.bn_ad1.gamma", b.g_ad1);
  out_nodes.emplace_back("head.bn_ad1.beta", b.b_ad1);
  out_nodes.emplace_back("head.bn_ad2.gamma", b.g_ad2);
  out_nodes.emplace_back("head.bn_ad2.beta", b.b_ad2);
  b.cls_w = g.leaf(head.cls_w);
  b.cls_b = g.leaf(head.cls_b);
  out_nodes.emplace_back("head.cls.w", b.cls_w);
  out_nodes.emplace_back("head.cls.b", b.cls_b);
  return b;
}

namespace {

// W_pair([p_i; p_j]) * u: expand the pair, then gate by the union feature
// before the decoder stack.
int gated_pair(Graph& g, const HeadBind& hb, int p_i, int p_j, int unions) {
  const int pair = g.concat({p_i, p_j});
  const int expanded = g.affine(pair, hb.pair_w, hb.pair_b);
  return g.hadamard(expanded, unions);
}

}  // namespace

BranchFeatures decode_branches(Graph& g, const HeadBind& hb, EpdHead& head,
                               int p_i, int p_j, int unions, BnMode mode,
                               Activation act, bool bn_enabled) {
  const int gated = gated_pair(g, hb, p_i, p_j, unions);

  BranchFeatures f;
  if (head.shared_fpd()) {
    f.trunk = stack_forward(g, hb.fpd[0], gated, act);
    if (!bn_enabled) {
      f.md = f.ad1 = f.ad2 = f.trunk;
      return f;
    }
    f.md = g.batchnorm(f.trunk, hb.g_md, hb.b_md, head.bn_md, mode);
    f.ad1 = g.batchnorm(f.trunk, hb.g_ad1, hb.b_ad1, head.bn_ad1, mode);
    f.ad2 = g.batchnorm(f.trunk, hb.g_ad2, hb.b_ad2, head.bn_ad2, mode);
    return f;
  }

  const int t_md = stack_forward(g, hb.fpd[0], gated, act);
  const int t_ad1 = stack_forward(g, hb.fpd[1], gated, act);
  const int t_ad2 = stack_forward(g, hb.fpd[2], gated, act);
  f.trunk = t_md;
  if (!bn_enabled) {
    f.md = t_md;
    f.ad1 = t_ad1;
    f.ad2 = t_ad2;
    return f;
  }
  f.md = g.batchnorm(t_md, hb.g_md, hb.b_md, head.bn_md, mode);
  f.ad1 = g.batchnorm(t_ad1, hb.g_ad1, hb.b_ad1, head.bn_ad1, mode);
  f.ad2 = g.batchnorm(t_ad2, hb.g_ad2, hb.b_ad2, head.bn_ad2, mode);
  return f;
}

int decode_single(Graph& g, const HeadBind& hb, EpdHead& head, int p_i, int p_j,
                  int unions, BnMode mode, Activation act, bool bn_enabled) {
  const int gated = gated_pair(g, hb, p_i, p_j, unions);
  const int trunk = stack_forward(g, hb.fpd[0], gated, act);
  const int feat =
      bn_enabled ? g.batchnorm(trunk, hb.g_md, hb.b_md, head.bn_md, mode) : trunk;
  return g.affine(feat, hb.cls_w, hb.cls_b);
}

int classify(Graph& g, const HeadBind& hb, int features) {
  return g.affine(features, hb.cls_w, hb.cls_b);
}

namespace {

// Mean CE over the rows whose label is in the subset; nullptr mask means all.
int masked_xent(Graph& g, int z, const std::vector<int64_t>& labels,
                const std::vector<char>* mask, int64_t* out_count) {
  std::vector<int64_t> rows;
  std::vector<int64_t> subset_labels;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (!mask || (*mask)[static_cast<size_t>(labels[i])]) {
      rows.push_back(static_cast<int64_t>(i));
      subset_labels.push_back(labels[i]);
    }
  }
  if (out_count) *out_count = static_cast<int64_t>(rows.size());
  if (rows.empty()) return g.leaf(NumArray::scalar(0.0f));
  if (rows.size() == labels.size()) return g.softmax_xent(z, subset_labels);
  const int picked = g.gather(z, rows);
  return g.softmax_xent(picked, subset_labels);
}

}  // namespace

SubsetLosses decoder_losses(Graph& g, const BranchLogits& z,
                            const std::vector<int64_t>& labels,
                            const SubsetAssignment& assign) {
  SubsetLosses out;
  out.l_md = masked_xent(g, z.md, labels, &assign.in_md, &out.n_md);
  out.l_ad1 = masked_xent(g, z.ad1, labels, &assign.in_ad1, &out.n_ad1);
  out.l_ad2 = masked_xent(g, z.ad2, labels, &assign.in_ad2, &out.n_ad2);
  return out;
}

int aggregate_logits(Graph& g, const BranchLogits& z, const std::array<float, 3>& lambda) {
  if (lambda[0] < 0.0f || lambda[1] < 0.0f || lambda[2] < 0.0f)
    throw ConfigError("aggregation weights must be non-negative");
  return g.add_weighted({z.md, z.ad1, z.ad2}, {lambda[0], lambda[1], lambda[2]});
}

int aggregated_loss(Graph& g, int z_sum, const std::vector<int64_t>& labels) {
  return masked_xent(g, z_sum, labels, nullptr, nullptr);
}

int total_loss(Graph& g, const SubsetLosses& parts, int l_agg, int l_obj,
               float alpha, float beta, float gamma) {
  const float keep = 1.0f - gamma;
  std::vector<int> terms = {parts.l_md, parts.l_ad1, parts.l_ad2, l_agg};
  std::vector<float> weights = {keep, keep * alpha, keep * beta, gamma};
  if (l_obj >= 0) {
    terms.push_back(l_obj);
    weights.push_back(1.0f);
  }
  return g.add_weighted(terms, weights);
}

std::array<double, 3> single_decoder_coefficients(double alpha, double beta,
                                                  double gamma) {
  return {1.0, (1.0 + alpha) * (1.0 - gamma), (1.0 + alpha + beta) * (1.0 - gamma)};
}

int single_decoder_loss(Graph& g, int z, const std::vector<int64_t>& labels,
                        const PredicatePartition& partition, float alpha, float beta,
                        float gamma, std::array<int64_t, 3>* out_counts,
                        std::array<int, 3>* out_blocks) {
  std::vector<char> in_head(static_cast<size_t>(g.value(z).cols()), 0);
  std::vector<char> in_body = in_head, in_tail = in_head;
  for (int64_t c : partition.head) in_head[static_cast<size_t>(c)] = 1;
  for (int64_t c : partition.body) in_body[static_cast<size_t>(c)] = 1;
  for (int64_t c : partition.tail) in_tail[static_cast<size_t>(c)] = 1;

  std::array<int64_t, 3> counts{};
  const int l_h = masked_xent(g, z, labels, &in_head, &counts[0]);
  const int l_b = masked_xent(g, z, labels, &in_body, &counts[1]);
  const int l_t = masked_xent(g, z, labels, &in_tail, &counts[2]);
  if (out_counts) *out_counts = counts;
  if (out_blocks) *out_blocks = {l_h, l_b, l_t};

  const auto coef = single_decoder_coefficients(alpha, beta, gamma);
  return g.add_weighted({l_h, l_b, l_t},
                        {static_cast<float>(coef[0]), static_cast<float>(coef[1]),
                         static_cast<float>(coef[2])});
}

NumArray masked_softmax_positive(const NumArray& z_row) {
  const int64_t c = z_row.numel();
  NumArray out = NumArray::zeros({c});
  if (c < 2) return out;
  double mx = -1e300;
  for (int64_t j = 1; j < c; ++j)
    mx = std::max(mx, static_cast<double>(z_row.data[static_cast<size_t>(j)]));
  double denom = 0.0;
  std::vector<double> e(static_cast<size_t>(c), 0.0);
  for (int64_t j = 1; j < c; ++j) {
    e[static_cast<size_t>(j)] =
        std::exp(static_cast<double>(z_row.data[static_cast<size_t>(j)]) - mx);
    denom += e[static_cast<size_t>(j)];
  }
  for (int64_t j = 1; j < c; ++j)
    out.data[static_cast<size_t>(j)] = static_cast<float>(e[static_cast<size_t>(j)] / denom);
  return out;
}

std::vector<ExplainPanel> explain_panels(const NumArray& z_md, const NumArray& z_ad1,
                                         const NumArray& z_ad2,
                                         const std::array<float, 3>& lambda,
                                         int64_t top_n) {
  const int64_t c = z_md.numel();
  if (top_n < 1 || top_n > c - 1)
    throw ConfigError("top_n must be between 1 and the positive class count");

  auto combine = [&](int upto) {
    // Renormalize the weights over the included branches so panel scores stay
    // on one temperature scale.
    std::array<const NumArray*, 3> zs = {&z_md, &z_ad1, &z_ad2};
    double wsum = 0.0;
    for (int i = 0; i <= upto; ++i) wsum += lambda[static_cast<size_t>(i)];
    NumArray z = NumArray::zeros({c});
    for (int i = 0; i <= upto; ++i) {
      if (lambda[static_cast<size_t>(i)] == 0.0f) continue;
      const double w = lambda[static_cast<size_t>(i)] / wsum;
      for (int64_t j = 0; j < c; ++j)
        z.data[static_cast<size_t>(j)] +=
            static_cast<float>(w) * zs[static_cast<size_t>(i)]->data[static_cast<size_t>(j)];
    }
    return masked_softmax_positive(z);
  };

  std::vector<ExplainPanel> panels;
  for (int upto = 0; upto < 3; ++upto) {
    const NumArray dist = combine(upto);
    std::vector<ExplainEntry> entries;
    for (int64_t j = 1; j < c; ++j)
      entries.push_back({j, static_cast<double>(dist.data[static_cast<size_t>(j)])});
    std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.cls < b.cls;
    });
    entries.resize(static_cast<size_t>(top_n));
    panels.push_back(std::move(entries));
  }
  return panels;
}

}  // namespace epd
