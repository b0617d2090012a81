#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "epd/dataset.hpp"

namespace epd {

enum class Activation { relu, none };
enum class DecoderMode { multi, single };
// Objective used when decoder_mode == single: plain batch-mean CE, or the
// head/body/tail re-weighted composition.
enum class SingleObjective { plain, reweighted };

Activation activation_from_string(const std::string& s);
DecoderMode decoder_mode_from_string(const std::string& s);
SingleObjective single_objective_from_string(const std::string& s);
std::string to_string(Activation a);
std::string to_string(DecoderMode m);
std::string to_string(SingleObjective o);

struct RunConfig {
  // feature dims
  int64_t d_v = 32, d_s = 16, d_g = 16, d_o = 64, d_p = 64, d_h = 128;
  // vocab sizes (validated against the dataset header at train time)
  int64_t num_object_classes = 20;
  int64_t num_predicate_classes = 51;  // including class 0
  // partition cardinalities over positive classes
  int64_t head = 5, body = 10, tail = 35;
  // loss weights
  float alpha = 8.0f, beta = 10.0f, gamma = 0.01f;
  // aggregation weights
  float lambda_md = 0.5f, lambda_ad1 = 0.2f, lambda_ad2 = 0.3f;
  // optimizer
  float lr = 0.0025f;
  int64_t batch_size = 12;
  int64_t epochs = 30;
  uint64_t seed = 7;
  // flags
  Activation activation = Activation::relu;
  bool bn_enabled = true;
  bool shared_fpd = true;
  DecoderMode decoder_mode = DecoderMode::multi;
  SingleObjective single_objective = SingleObjective::reweighted;
  SubsetMode subset_mode = SubsetMode::nested;
  bool graph_constraint = true;
  bool object_loss = true;
  std::vector<int64_t> k_list = {5, 10};
  // cadence of mean-recall tracking during training (epochs); the last epoch
  // is always evaluated
  int64_t eval_every = 5;

  std::array<float, 3> lambda() const { return {lambda_md, lambda_ad1, lambda_ad2}; }

  // Applies one `key = value` assignment; throws ConfigError on unknown keys
  // or unparseable values.
  void set(const std::string& key, const std::string& value);
  void validate() const;
  // Warns (stderr) when the aggregation weights break the intended
  // lambda_md > lambda_ad2 > lambda_ad1 ordering. Not an error.
  void warn_on_lambda_order() const;

  std::string to_json_string() const;
  static RunConfig from_json_string(const std::string& s);
};

// Named aggregation-weight presets: "best_mean" -> (0.5, 0.2, 0.3),
// "best_mr" -> (0.4, 0.2, 0.4).
void apply_lambda_preset(RunConfig& cfg, const std::string& name);

// Parses a flat `key = value` file with '#' comments into ordered pairs.
std::vector<std::pair<std::string, std::string>> parse_kv_file(const std::string& path);

std::vector<int64_t> parse_int_list(const std::string& s);
std::array<float, 3> parse_float_triple(const std::string& s);

}  // namespace epd
