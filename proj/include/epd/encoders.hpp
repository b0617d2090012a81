#pragma once

#include <cstdint>
#include <vector>

#include "epd/autograd.hpp"
#include "epd/config.hpp"
#include "epd/rng.hpp"

namespace epd {

// Two affine layers with an optional ReLU between them; the hidden width
// equals the output width.
struct AffineStack {
  NumArray w1, b1, w2, b2;
};

AffineStack make_stack(int64_t in, int64_t out, Rng& rng);
NumArray init_affine_weight(int64_t in, int64_t out, Rng& rng);

struct StackBind {
  int w1 = -1, b1 = -1, w2 = -1, b2 = -1;
};

// Learnable arrays for object/predicate encoding. One semantic table serves
// both the raw labels and the refined labels.
struct EncoderParams {
  NumArray spatial_w, spatial_b;  // 4 -> d_s
  NumArray semantic_table;        // num_object_classes x d_g
  AffineStack object_encoder;     // (d_v + d_s + d_g) -> d_o
  NumArray obj_cls_w, obj_cls_b;  // d_o -> num_object_classes
  AffineStack predicate_encoder;  // (d_g + d_o + d_v) -> d_p
};

EncoderParams make_encoder_params(const RunConfig& cfg, Rng& rng);

struct EncoderBind {
  int spatial_w = -1, spatial_b = -1;
  int table = -1;
  StackBind object_encoder;
  int obj_cls_w = -1, obj_cls_b = -1;
  StackBind predicate_encoder;
};

// Leafs every encoder parameter into the graph and records (name, node) pairs
// for gradient harvesting.
EncoderBind bind_encoders(Graph& g, const EncoderParams& p,
                          std::vector<std::pair<std::string, int>>& out_nodes);

int stack_forward(Graph& g, const StackBind& s, int x, Activation act);

// Affine lift of the 4-vector (x1,y1,x2,y2).
int embed_spatial(Graph& g, const EncoderBind& b, int bbox);
// Concat order (visual, spatial, semantic), then the encoder stack.
int encode_object(Graph& g, const EncoderBind& b, int visual, int spatial,
                  int semantic, Activation act);
// Refined-label logits over the object vocabulary.
int object_logits(Graph& g, const EncoderBind& b, int obj_feat);
// Concat order (semantic, object, visual), then the encoder stack.
int encode_predicate(Graph& g, const EncoderBind& b, int semantic, int obj_feat,
                     int visual, Activation act);

std::vector<int64_t> argmax_rows(const NumArray& logits);

}  // namespace epd
