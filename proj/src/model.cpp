#include "epd/model.hpp"

#include <cmath>
#include <map>

#include "epd/rng.hpp"

namespace epd {

Model Model::init(const RunConfig& cfg, const PredicatePartition& partition) {
  cfg.validate();
  if (partition.num_positive_classes() != cfg.num_predicate_classes - 1)
    throw DataError("partition does not cover the predicate vocabulary");
  Model m;
  m.cfg = cfg;
  Rng rng(derive_seed(cfg.seed, 0x1217));
  m.enc = make_encoder_params(cfg, rng);
  m.head = make_head(cfg, rng);
  m.partition = partition;
  m.subsets = assign_subsets(partition, cfg.subset_mode, cfg.num_predicate_classes);
  return m;
}

std::vector<ParamRef> Model::param_refs() {
  std::vector<ParamRef> v;
  auto add = [&](const std::string& name, NumArray* a, bool learnable = true) {
    v.push_back({name, a, learnable});
  };
  add("enc.spatial.w", &enc.spatial_w);
  add("enc.spatial.b", &enc.spatial_b);
  add("enc.semantic_table", &enc.semantic_table);
  add("enc.object.w1", &enc.object_encoder.w1);
  add("enc.object.b1", &enc.object_encoder.b1);
  add("enc.object.w2", &enc.object_encoder.w2);
  add("enc.object.b2", &enc.object_encoder.b2);
  add("enc.obj_cls.w", &enc.obj_cls_w);
  add("enc.obj_cls.b", &enc.obj_cls_b);
  add("enc.predicate.w1", &enc.predicate_encoder.w1);
  add("enc.predicate.b1", &enc.predicate_encoder.b1);
  add("enc.predicate.w2", &enc.predicate_encoder.w2);
  add("enc.predicate.b2", &enc.predicate_encoder.b2);
  add("head.pair.w", &head.pair_w);
  add("head.pair.b", &head.pair_b);
  for (size_t i = 0; i < head.fpd.size(); ++i) {
    const std::string prefix =
        head.fpd.size() == 1 ? std::string("head.fpd") : "head.fpd" + std::to_string(i);
    add(prefix + ".w1", &head.fpd[i].w1);
    add(prefix + ".b1", &head.fpd[i].b1);
    add(prefix + ".w2", &head.fpd[i].w2);
    add(prefix + ".b2", &head.fpd[i].b2);
  }
  auto add_bn = [&](const std::string& name, BatchNormState& s) {
    add(name + ".gamma", &s.gamma);
    add(name + ".beta", &s.beta);
    add(name + ".running_mean", &s.running_mean, false);
    add(name + ".running_var", &s.running_var, false);
  };
  add_bn("head.bn_md", head.bn_md);
  add_bn("head.bn_ad1", head.bn_ad1);
  add_bn("head.bn_ad2", head.bn_ad2);
  add("head.cls.w", &head.cls_w);
  add("head.cls.b", &head.cls_b);
  return v;
}

Batch build_batch(const Dataset& ds, std::span<const int64_t> image_indices,
                  bool positives_only) {
  int64_t n_obj = 0, n_rel = 0;
  for (int64_t idx : image_indices) {
    const auto& rec = ds.images[static_cast<size_t>(idx)];
    n_obj += static_cast<int64_t>(rec.objects.size());
    for (const auto& r : rec.relations)
      if (!positives_only || r.predicate > 0) ++n_rel;
  }

  Batch b;
  const int64_t d_v = ds.header.d_v;
  b.vis = NumArray::zeros({std::max<int64_t>(n_obj, 1), d_v});
  b.bbox = NumArray::zeros({std::max<int64_t>(n_obj, 1), 4});
  b.unions = NumArray::zeros({std::max<int64_t>(n_rel, 1), d_v});
  b.obj_labels.reserve(static_cast<size_t>(n_obj));

  int64_t obj_off = 0, rel_off = 0;
  for (int64_t idx : image_indices) {
    const auto& rec = ds.images[static_cast<size_t>(idx)];
    for (const auto& o : rec.objects) {
      for (int64_t j = 0; j < d_v; ++j) b.vis.at(obj_off, j) = o.visual[static_cast<size_t>(j)];
      for (int64_t j = 0; j < 4; ++j) b.bbox.at(obj_off, j) = o.bbox[static_cast<size_t>(j)];
      b.obj_labels.push_back(o.label);
      ++obj_off;
    }
    const int64_t base = obj_off - static_cast<int64_t>(rec.objects.size());
    for (const auto& r : rec.relations) {
      if (positives_only && r.predicate == 0) continue;
      for (int64_t j = 0; j < d_v; ++j)
        b.unions.at(rel_off, j) = r.union_feat[static_cast<size_t>(j)];
      b.subj.push_back(base + r.subj);
      b.obj.push_back(base + r.obj);
      b.rel_labels.push_back(r.predicate);
      b.pair_ids.emplace_back(r.subj, r.obj);
      ++rel_off;
    }
  }
  return b;
}

ModelBind bind_model(Graph& g, const Model& m) {
  ModelBind b;
  b.enc = bind_encoders(g, m.enc, b.params);
  b.head = bind_head(g, m.head, b.params);
  return b;
}

ForwardNodes model_forward(Graph& g, Model& m, const ModelBind& bind,
                           const Batch& batch, BnMode mode) {
  if (batch.n_relations() < 1)
    throw DataError("model_forward: batch has no relation instances");
  const Activation act = m.cfg.activation;

  const int vis = g.leaf(batch.vis);
  const int bbox = g.leaf(batch.bbox);
  const int unions = g.leaf(batch.unions);

  const int spatial = embed_spatial(g, bind.enc, bbox);
  const int semantic = g.gather(bind.enc.table, batch.obj_labels);
  const int obj_feat = encode_object(g, bind.enc, vis, spatial, semantic, act);

  ForwardNodes out;
  out.obj_logits = object_logits(g, bind.enc, obj_feat);
  // PredCls protocol: the refined semantic features reuse the ground-truth
  // labels, so the same semantic rows feed the predicate encoder.
  out.p_feats = encode_predicate(g, bind.enc, semantic, obj_feat, vis, act);

  const int p_i = g.gather(out.p_feats, batch.subj);
  const int p_j = g.gather(out.p_feats, batch.obj);

  if (m.cfg.decoder_mode == DecoderMode::multi) {
    BranchFeatures f = decode_branches(g, bind.head, m.head, p_i, p_j, unions, mode,
                                       act, m.cfg.bn_enabled);
    out.z.md = classify(g, bind.head, f.md);
    out.z.ad1 = classify(g, bind.head, f.ad1);
    out.z.ad2 = classify(g, bind.head, f.ad2);
  } else {
    const int z = decode_single(g, bind.head, m.head, p_i, p_j, unions, mode, act,
                                m.cfg.bn_enabled);
    out.z.md = out.z.ad1 = out.z.ad2 = z;
  }
  return out;
}

StepLosses compute_losses(Graph& g, Model& m, const ForwardNodes& fwd,
                          const Batch& batch) {
  StepLosses out;
  const int l_obj =
      m.cfg.object_loss ? g.softmax_xent(fwd.obj_logits, batch.obj_labels) : -1;

  if (m.cfg.decoder_mode == DecoderMode::multi) {
    const SubsetLosses sl = decoder_losses(g, fwd.z, batch.rel_labels, m.subsets);
    const int z_sum = aggregate_logits(g, fwd.z, m.cfg.lambda());
    const int l_agg = aggregated_loss(g, z_sum, batch.rel_labels);
    out.total_node =
        total_loss(g, sl, l_agg, l_obj, m.cfg.alpha, m.cfg.beta, m.cfg.gamma);
    out.breakdown.l_md = g.value(sl.l_md).item();
    out.breakdown.l_ad1 = g.value(sl.l_ad1).item();
    out.breakdown.l_ad2 = g.value(sl.l_ad2).item();
    out.breakdown.l_agg = g.value(l_agg).item();
    out.breakdown.n_md = sl.n_md;
    out.breakdown.n_ad1 = sl.n_ad1;
    out.breakdown.n_ad2 = sl.n_ad2;
    if (m.cfg.object_loss) out.breakdown.l_obj = g.value(l_obj).item();
    // The logged total is the double recomposition of the logged components;
    // the float32 graph node drives the backward pass.
    const double keep = 1.0 - static_cast<double>(m.cfg.gamma);
    out.breakdown.l_total =
        keep * (out.breakdown.l_md + static_cast<double>(m.cfg.alpha) * out.breakdown.l_ad1 +
                static_cast<double>(m.cfg.beta) * out.breakdown.l_ad2) +
        static_cast<double>(m.cfg.gamma) * out.breakdown.l_agg + out.breakdown.l_obj;
    return out;
  } else if (m.cfg.single_objective == SingleObjective::reweighted) {
    std::array<int64_t, 3> counts{};
    std::array<int, 3> blocks{};
    const int composite =
        single_decoder_loss(g, fwd.z.md, batch.rel_labels, m.partition, m.cfg.alpha,
                            m.cfg.beta, m.cfg.gamma, &counts, &blocks);
    out.total_node = l_obj >= 0 ? g.add_weighted({composite, l_obj}, {1.0f, 1.0f})
                                : composite;
    // Single mode logs the head/body/tail block means in the md/ad1/ad2 slots.
    out.breakdown.n_md = counts[0];
    out.breakdown.n_ad1 = counts[1];
    out.breakdown.n_ad2 = counts[2];
    out.breakdown.l_md = g.value(blocks[0]).item();
    out.breakdown.l_ad1 = g.value(blocks[1]).item();
    out.breakdown.l_ad2 = g.value(blocks[2]).item();
  } else {
    const int l_main = g.softmax_xent(fwd.z.md, batch.rel_labels);
    out.total_node =
        l_obj >= 0 ? g.add_weighted({l_main, l_obj}, {1.0f, 1.0f}) : l_main;
    out.breakdown.l_md = g.value(l_main).item();
    out.breakdown.n_md = batch.n_relations();
  }
  if (l_obj >= 0) out.breakdown.l_obj = g.value(l_obj).item();
  out.breakdown.l_total = g.value(out.total_node).item();
  return out;
}

LossBreakdown train_step(Model& m, const Batch& batch) {
  Graph g;
  ModelBind bind = bind_model(g, m);
  ForwardNodes fwd = model_forward(g, m, bind, batch, BnMode::train);
  StepLosses losses = compute_losses(g, m, fwd, batch);
  if (!std::isfinite(losses.breakdown.l_total))
    throw NumericError("training loss is not finite");
  g.backward(losses.total_node);

  std::map<std::string, int> node_of;
  for (const auto& [name, id] : bind.params) node_of[name] = id;
  for (ParamRef& p : m.param_refs()) {
    if (!p.learnable) continue;
    auto it = node_of.find(p.name);
    if (it == node_of.end()) continue;  // independent-stack params absent in shared mode
    sgd_step(*p.value, g.grad(it->second), m.cfg.lr);
  }
  return losses.breakdown;
}

PredictionSet predict_dataset(Model& m, const Dataset& ds,
                              const std::array<float, 3>& lambda) {
  PredictionSet out;
  out.per_image.resize(ds.images.size());
  const int64_t n = static_cast<int64_t>(ds.images.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (int64_t i = 0; i < n; ++i) {
    const auto& rec = ds.images[static_cast<size_t>(i)];
    if (rec.relations.empty()) continue;
    const int64_t idx[1] = {i};
    Batch batch = build_batch(ds, std::span<const int64_t>(idx, 1), false);
    Graph g;
    ModelBind bind = bind_model(g, m);
    ForwardNodes fwd = model_forward(g, m, bind, batch, BnMode::eval);
    const int z_sum = aggregate_logits(g, fwd.z, lambda);
    const NumArray& zs = g.value(z_sum);

    ImagePredictions preds;
    const int64_t c = zs.cols();
    for (int64_t r = 0; r < batch.n_relations(); ++r) {
      NumArray row = NumArray::zeros({c});
      for (int64_t j = 0; j < c; ++j) row.data[static_cast<size_t>(j)] = zs.at(r, j);
      const NumArray dist = masked_softmax_positive(row);
      for (int64_t cls = 1; cls < c; ++cls) {
        preds.push_back({batch.pair_ids[static_cast<size_t>(r)].first,
                         batch.pair_ids[static_cast<size_t>(r)].second, cls,
                         static_cast<double>(dist.data[static_cast<size_t>(cls)])});
      }
    }
    out.per_image[static_cast<size_t>(i)] = std::move(preds);
  }
  return out;
}

std::vector<ExplainPanel> explain_pair(Model& m, const ImageRecord& rec,
                                       const DatasetHeader& header, int64_t subj,
                                       int64_t obj, int64_t top_n) {
  int64_t rel_idx = -1;
  for (size_t r = 0; r < rec.relations.size(); ++r) {
    if (rec.relations[r].subj == subj && rec.relations[r].obj == obj) {
      rel_idx = static_cast<int64_t>(r);
      break;
    }
  }
  if (rel_idx < 0)
    throw DataError("no annotated pair (" + std::to_string(subj) + "," +
                    std::to_string(obj) + ") in image " + rec.image_id);

  Dataset one;
  one.header = header;
  one.images.push_back(rec);
  const int64_t idx[1] = {0};
  Batch batch = build_batch(one, std::span<const int64_t>(idx, 1), false);

  Graph g;
  ModelBind bind = bind_model(g, m);
  ForwardNodes fwd = model_forward(g, m, bind, batch, BnMode::eval);

  int64_t row = -1;
  for (int64_t r = 0; r < batch.n_relations(); ++r) {
    if (batch.pair_ids[static_cast<size_t>(r)] == std::make_pair(subj, obj)) {
      row = r;
      break;
    }
  }
  const int64_t c = g.value(fwd.z.md).cols();
  auto take_row = [&](int node) {
    NumArray out = NumArray::zeros({c});
    for (int64_t j = 0; j < c; ++j)
      out.data[static_cast<size_t>(j)] = g.value(node).at(row, j);
    return out;
  };
  return explain_panels(take_row(fwd.z.md), take_row(fwd.z.ad1), take_row(fwd.z.ad2),
                        m.cfg.lambda(), top_n);
}

}  // namespace epd
