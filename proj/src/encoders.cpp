#include "epd/encoders.hpp"

#include <cmath>

namespace epd {

NumArray init_affine_weight(int64_t in, int64_t out, Rng& rng) {
  NumArray w = NumArray::zeros({in, out});
  const float bound = 1.0f / std::sqrt(static_cast<float>(in));
  for (float& x : w.data) x = rng.uniform_float(-bound, bound);
  return w;
}

AffineStack make_stack(int64_t in, int64_t out, Rng& rng) {
  AffineStack s;
  s.w1 = init_affine_weight(in, out, rng);
  s.b1 = NumArray::zeros({out});
  s.w2 = init_affine_weight(out, out, rng);
  s.b2 = NumArray::zeros({out});
  return s;
}

EncoderParams make_encoder_params(const RunConfig& cfg, Rng& rng) {
  EncoderParams p;
  p.spatial_w = init_affine_weight(4, cfg.d_s, rng);
  p.spatial_b = NumArray::zeros({cfg.d_s});
  // Embedding rows scale with the embedding width, not the vocab size.
  p.semantic_table = NumArray::zeros({cfg.num_object_classes, cfg.d_g});
  {
    const float bound = 1.0f / std::sqrt(static_cast<float>(cfg.d_g));
    for (float& x : p.semantic_table.data) x = rng.uniform_float(-bound, bound);
  }
  p.object_encoder = make_stack(cfg.d_v + cfg.d_s + cfg.d_g, cfg.d_o, rng);
  p.obj_cls_w = init_affine_weight(cfg.d_o, cfg.num_object_classes, rng);
  p.obj_cls_b = NumArray::zeros({cfg.num_object_classes});
  p.predicate_encoder = make_stack(cfg.d_g + cfg.d_o + cfg.d_v, cfg.d_p, rng);
  return p;
}

namespace {

StackBind bind_stack(Graph& g, const AffineStack& s, const std::string& prefix,
                     std::vector<std::pair<std::string, int>>& out_nodes) {
  StackBind b;
  b.w1 = g.leaf(s.w1);
  b.b1 = g.leaf(s.b1);
  b.w2 = g.leaf(s.w2);
  b.b2 = g.leaf(s.b2);
  out_nodes.emplace_back(prefix + ".w1", b.w1);
  out_nodes.emplace_back(prefix + ".b1", b.b1);
  out_nodes.emplace_back(prefix + ".w2", b.w2);
  out_nodes.emplace_back(prefix + ".b2", b.b2);
  return b;
}

}  // namespace

EncoderBind bind_encoders(Graph& g, const EncoderParams& p,
                          std::vector<std::pair<std::string, int>>& out_nodes) {
  EncoderBind b;
  b.spatial_w = g.leaf(p.spatial_w);
  b.spatial_b = g.leaf(p.spatial_b);
  out_nodes.emplace_back("enc.spatial.w", b.spatial_w);
  out_nodes.emplace_back("enc.spatial.b", b.spatial_b);
  b.table = g.leaf(p.semantic_table);
  out_nodes.emplace_back("enc.semantic_table", b.table);
  b.object_encoder = bind_stack(g, p.object_encoder, "enc.object", out_nodes);
  b.obj_cls_w = g.leaf(p.obj_cls_w);
  b.obj_cls_b = g.leaf(p.obj_cls_b);
  out_nodes.emplace_back("enc.obj_cls.w", b.obj_cls_w);
  out_nodes.emplace_back("enc.obj_cls.b", b.obj_cls_b);
  b.predicate_encoder = bind_stack(g, p.predicate_encoder, "enc.predicate", out_nodes);
  return b;
}

int stack_forward(Graph& g, const StackBind& s, int x, Activation act) {
  int h = g.affine(x, s.w1, s.b1);
  if (act == Activation::relu) h = g.relu(h);
  return g.affine(h, s.w2, s.b2);
}

int embed_spatial(Graph& g, const EncoderBind& b, int bbox) {
  return g.affine(bbox, b.spatial_w, b.spatial_b);
}

int encode_object(Graph& g, const EncoderBind& b, int visual, int spatial,
                  int semantic, Activation act) {
  const int cat = g.concat({visual, spatial, semantic});
  return stack_forward(g, b.object_encoder, cat, act);
}

int object_logits(Graph& g, const EncoderBind& b, int obj_feat) {
  return g.affine(obj_feat, b.obj_cls_w, b.obj_cls_b);
}

int encode_predicate(Graph& g, const EncoderBind& b, int semantic, int obj_feat,
                     int visual, Activation act) {
  const int cat = g.concat({semantic, obj_feat, visual});
  return stack_forward(g, b.predicate_encoder, cat, act);
}

std::vector<int64_t> argmax_rows(const NumArray& logits) {
  std::vector<int64_t> out(static_cast<size_t>(logits.rows()));
  for (int64_t i = 0; i < logits.rows(); ++i) {
    int64_t best = 0;
    float bv = logits.at(i, 0);
    for (int64_t j = 1; j < logits.cols(); ++j) {
      if (logits.at(i, j) > bv) {
        bv = logits.at(i, j);
        best = j;
      }
    }
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

}  // namespace epd
