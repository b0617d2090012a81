#pragma once

#include <cstdint>
#include <vector>

#include "epd/dataset.hpp"
#include "epd/numarray.hpp"

namespace epd {

// A frequent/rare predicate pair whose prototypes sit `delta` apart, so the
// rare class is easy to mistake for its frequent partner.
struct SimilarPair {
  int64_t frequent = 0;
  int64_t rare = 0;
  float delta = 0.3f;
};

struct GeneratorConfig {
  int64_t num_images = 2000;
  int64_t test_images = 500;
  int64_t min_objects = 5;
  int64_t max_objects = 9;
  int64_t num_object_classes = 20;
  int64_t num_predicates = 50;  // positive classes; vocab adds class 0
  double zipf_s = 1.5;
  int64_t feature_dim = 32;
  float noise_sigma = 0.35f;
  float neg_frac = 0.5f;  // negative pairs emitted per positive
  int64_t min_relations = 8;
  int64_t max_relations = 16;
  std::vector<SimilarPair> similar_pairs;

  // Standard configuration: three frequent/rare pairs spread across the tail.
  static GeneratorConfig defaults();

  void validate() const;
};

struct SyntheticData {
  Dataset train;
  Dataset test;
  NumArray object_prototypes;     // [num_object_classes x feature_dim]
  NumArray predicate_prototypes;  // [(num_predicates+1) x feature_dim], row 0 zero
  std::vector<double> zipf_probs;  // per positive class, index 0 -> class 1
};

// Fully determined by the seed: prototypes come from one derived stream and
// every image from its own stream keyed by global image index, so generation
// may run per-image in parallel without changing the output.
SyntheticData generate_synthetic(const GeneratorConfig& cfg, uint64_t seed);

std::vector<SimilarPair> parse_similar_pairs(const std::string& spec);
std::string similar_pairs_to_string(const std::vector<SimilarPair>& pairs);

}  // namespace epd
