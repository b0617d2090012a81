#include "epd/config.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"

namespace epd {

namespace {

using json = nlohmann::ordered_json;

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

int64_t to_i64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    int64_t r = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (...) {
    throw ConfigError("bad integer for " + key + ": " + v);
  }
}

float to_f32(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    float r = std::stof(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (...) {
    throw ConfigError("bad number for " + key + ": " + v);
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("bad boolean for " + key + ": " + v);
}

}  // namespace

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "none") return Activation::none;
  throw ConfigError("unknown activation: " + s);
}

DecoderMode decoder_mode_from_string(const std::string& s) {
  if (s == "multi") return DecoderMode::multi;
  if (s == "single") return DecoderMode::single;
  throw ConfigError("unknown decoder_mode: " + s);
}

SingleObjective single_objective_from_string(const std::string& s) {
  if (s == "plain") return SingleObjective::plain;
  if (s == "reweighted") return SingleObjective::reweighted;
  throw ConfigError("unknown single_objective: " + s);
}

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "none"; }
std::string to_string(DecoderMode m) {
  return m == DecoderMode::multi ? "multi" : "single";
}
std::string to_string(SingleObjective o) {
  return o == SingleObjective::plain ? "plain" : "reweighted";
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "d_v") d_v = to_i64(key, value);
  else if (key == "d_s") d_s = to_i64(key, value);
  else if (key == "d_g") d_g = to_i64(key, value);
  else if (key == "d_o") d_o = to_i64(key, value);
  else if (key == "d_p") d_p = to_i64(key, value);
  else if (key == "d_h") d_h = to_i64(key, value);
  else if (key == "num_object_classes") num_object_classes = to_i64(key, value);
  else if (key == "num_predicate_classes") num_predicate_classes = to_i64(key, value);
  else if (key == "head") head = to_i64(key, value);
  else if (key == "body") body = to_i64(key, value);
  else if (key == "tail") tail = to_i64(key, value);
  else if (key == "alpha") alpha = to_f32(key, value);
  else if (key == "beta") beta = to_f32(key, value);
  else if (key == "gamma") gamma = to_f32(key, value);
  else if (key == "lambda_md") lambda_md = to_f32(key, value);
  else if (key == "lambda_ad1") lambda_ad1 = to_f32(key, value);
  else if (key == "lambda_ad2") lambda_ad2 = to_f32(key, value);
  else if (key == "lambda_preset") apply_lambda_preset(*this, value);
  else if (key == "lr") lr = to_f32(key, value);
  else if (key == "batch_size") batch_size = to_i64(key, value);
  else if (key == "epochs") epochs = to_i64(key, value);
  else if (key == "seed") seed = static_cast<uint64_t>(to_i64(key, value));
  else if (key == "activation") activation = activation_from_string(value);
  else if (key == "bn_enabled") bn_enabled = to_bool(key, value);
  else if (key == "shared_fpd") shared_fpd = to_bool(key, value);
  else if (key == "decoder_mode") decoder_mode = decoder_mode_from_string(value);
  else if (key == "single_objective") single_objective = single_objective_from_string(value);
  else if (key == "subset_mode") subset_mode = subset_mode_from_string(value);
  else if (key == "graph_constraint") graph_constraint = to_bool(key, value);
  else if (key == "object_loss") object_loss = to_bool(key, value);
  else if (key == "k_list") k_list = parse_int_list(value);
  else if (key == "eval_every") eval_every = to_i64(key, value);
  else throw ConfigError("unknown config key: " + key);
}

void RunConfig::validate() const {
  if (d_v < 1 || d_s < 1 || d_g < 1 || d_o < 1 || d_p < 1 || d_h < 1)
    throw ConfigError("feature dims must be positive");
  if (num_object_classes < 1 || num_predicate_classes < 2)
    throw ConfigError("vocab sizes too small");
  if (head < 1 || body < 1 || tail < 1)
    throw ConfigError("partition cardinalities must be >= 1");
  if (head + body + tail != num_predicate_classes - 1)
    throw ConfigError("partition cardinalities must sum to the positive class count");
  if (alpha < 0.0f || beta < 0.0f) throw ConfigError("alpha/beta must be non-negative");
  if (gamma < 0.0f || gamma > 1.0f) throw ConfigError("gamma must be in [0,1]");
  if (lambda_md < 0.0f || lambda_ad1 < 0.0f || lambda_ad2 < 0.0f)
    throw ConfigError("lambda weights must be non-negative");
  if (lr < 0.0f) throw ConfigError("lr must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (k_list.empty()) throw ConfigError("k_list must not be empty");
  for (int64_t k : k_list)
    if (k < 1) throw ConfigError("k values must be >= 1");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
}

void RunConfig::warn_on_lambda_order() const {
  if (!(lambda_md > lambda_ad2 && lambda_ad2 > lambda_ad1)) {
    std::cerr << "warning: aggregation weights (" << lambda_md << ", " << lambda_ad1
              << ", " << lambda_ad2
              << ") break the intended ordering lambda_md > lambda_ad2 > lambda_ad1\n";
  }
}

std::string RunConfig::to_json_string() const {
  json j;
  j["d_v"] = d_v;
  j["d_s"] = d_s;
  j["d_g"] = d_g;
  j["d_o"] = d_o;
  j["d_p"] = d_p;
  j["d_h"] = d_h;
  j["num_object_classes"] = num_object_classes;
  j["num_predicate_classes"] = num_predicate_classes;
  j["head"] = head;
  j["body"] = body;
  j["tail"] = tail;
  j["alpha"] = alpha;
  j["beta"] = beta;
  j["gamma"] = gamma;
  j["lambda_md"] = lambda_md;
  j["lambda_ad1"] = lambda_ad1;
  j["lambda_ad2"] = lambda_ad2;
  j["lr"] = lr;
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["seed"] = seed;
  j["activation"] = to_string(activation);
  j["bn_enabled"] = bn_enabled;
  j["shared_fpd"] = shared_fpd;
  j["decoder_mode"] = to_string(decoder_mode);
  j["single_objective"] = to_string(single_objective);
  j["subset_mode"] = to_string(subset_mode);
  j["graph_constraint"] = graph_constraint;
  j["object_loss"] = object_loss;
  j["k_list"] = k_list;
  j["eval_every"] = eval_every;
  return j.dump();
}

RunConfig RunConfig::from_json_string(const std::string& s) {
  json j = json::parse(s);
  RunConfig c;
  c.d_v = j.at("d_v").get<int64_t>();
  c.d_s = j.at("d_s").get<int64_t>();
  c.d_g = j.at("d_g").get<int64_t>();
  c.d_o = j.at("d_o").get<int64_t>();
  c.d_p = j.at("d_p").get<int64_t>();
  c.d_h = j.at("d_h").get<int64_t>();
  c.num_object_classes = j.at("num_object_classes").get<int64_t>();
  c.num_predicate_classes = j.at("num_predicate_classes").get<int64_t>();
  c.head = j.at("head").get<int64_t>();
  c.body = j.at("body").get<int64_t>();
  c.tail = j.at("tail").get<int64_t>();
  c.alpha = j.at("alpha").get<float>();
  c.beta = j.at("beta").get<float>();
  c.gamma = j.at("gamma").get<float>();
  c.lambda_md = j.at("lambda_md").get<float>();
  c.lambda_ad1 = j.at("lambda_ad1").get<float>();
  c.lambda_ad2 = j.at("lambda_ad2").get<float>();
  c.lr = j.at("lr").get<float>();
  c.batch_size = j.at("batch_size").get<int64_t>();
  c.epochs = j.at("epochs").get<int64_t>();
  c.seed = j.at("seed").get<uint64_t>();
  c.activation = activation_from_string(j.at("activation").get<std::string>());
  c.bn_enabled = j.at("bn_enabled").get<bool>();
  c.shared_fpd = j.at("shared_fpd").get<bool>();
  c.decoder_mode = decoder_mode_from_string(j.at("decoder_mode").get<std::string>());
  c.single_objective =
      single_objective_from_string(j.at("single_objective").get<std::string>());
  c.subset_mode = subset_mode_from_string(j.at("subset_mode").get<std::string>());
  c.graph_constraint = j.at("graph_constraint").get<bool>();
  c.object_loss = j.at("object_loss").get<bool>();
  c.k_list = j.at("k_list").get<std::vector<int64_t>>();
  c.eval_every = j.at("eval_every").get<int64_t>();
  return c;
}

void apply_lambda_preset(RunConfig& cfg, const std::string& name) {
  if (name == "best_mean") {
    cfg.lambda_md = 0.5f;
    cfg.lambda_ad1 = 0.2f;
    cfg.lambda_ad2 = 0.3f;
  } else if (name == "best_mr") {
    cfg.lambda_md = 0.4f;
    cfg.lambda_ad1 = 0.2f;
    cfg.lambda_ad2 = 0.4f;
  } else {
    throw ConfigError("unknown lambda preset: " + name);
  }
}

std::vector<std::pair<std::string, std::string>> parse_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(line_no) +
                        ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError(path + ":" + std::to_string(line_no) +
                        ": empty key or value");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

std::vector<int64_t> parse_int_list(const std::string& s) {
  std::vector<int64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(to_i64("list item", item));
  }
  if (out.empty()) throw ConfigError("empty integer list: " + s);
  return out;
}

std::array<float, 3> parse_float_triple(const std::string& s) {
  std::stringstream ss(s);
  std::string item;
  std::vector<float> vals;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) vals.push_back(to_f32("triple item", item));
  }
  if (vals.size() != 3) throw ConfigError("expected three comma-separated values: " + s);
  return {vals[0], vals[1], vals[2]};
}

}  // namespace epd
