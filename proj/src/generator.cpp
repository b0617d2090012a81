#include "epd/generator.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "epd/rng.hpp"

namespace epd {

namespace {

constexpr uint64_t kPrototypeStream = 0x70726f746fULL;  // distinct from image indices

void fill_unit_row(NumArray& m, int64_t row, Rng& rng) {
  const int64_t d = m.cols();
  double norm2 = 0.0;
  std::vector<double> v(static_cast<size_t>(d));
  for (int64_t j = 0; j < d; ++j) {
    v[static_cast<size_t>(j)] = rng.normal();
    norm2 += v[static_cast<size_t>(j)] * v[static_cast<size_t>(j)];
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (int64_t j = 0; j < d; ++j)
    m.at(row, j) = static_cast<float>(v[static_cast<size_t>(j)] * inv);
}

std::vector<float> noisy_copy(const NumArray& protos, int64_t row, float sigma,
                              Rng& rng) {
  const int64_t d = protos.cols();
  std::vector<float> out(static_cast<size_t>(d));
  for (int64_t j = 0; j < d; ++j)
    out[static_cast<size_t>(j)] = protos.at(row, j) + sigma * rng.normal_float();
  return out;
}

int64_t sample_zipf(const std::vector<double>& cdf, Rng& rng) {
  const double u = rng.uniform();
  auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  int64_t idx = static_cast<int64_t>(it - cdf.begin());
  if (idx >= static_cast<int64_t>(cdf.size())) idx = static_cast<int64_t>(cdf.size()) - 1;
  return idx + 1;  // class ids start at 1
}

ImageRecord generate_image(const GeneratorConfig& cfg, const NumArray& obj_protos,
                           const NumArray& pred_protos, const std::vector<double>& cdf,
                           uint64_t seed, int64_t global_index) {
  Rng rng(derive_seed(seed, static_cast<uint64_t>(global_index)));
  ImageRecord rec;
  {
    std::ostringstream id;
    id << "img_" << global_index;
    rec.image_id = id.str();
  }

  const int64_t n_obj = rng.uniform_int(cfg.min_objects, cfg.max_objects);
  for (int64_t i = 0; i < n_obj; ++i) {
    ObjectInstance o;
    o.label = rng.uniform_int(0, cfg.num_object_classes - 1);
    const float x1 = rng.uniform_float(0.0f, 0.8f);
    const float y1 = rng.uniform_float(0.0f, 0.8f);
    const float w = rng.uniform_float(0.05f, 0.2f);
    const float h = rng.uniform_float(0.05f, 0.2f);
    o.bbox = {x1, y1, x1 + w, y1 + h};
    o.visual = noisy_copy(obj_protos, o.label, cfg.noise_sigma, rng);
    rec.objects.push_back(std::move(o));
  }

  const int64_t max_pairs = n_obj * (n_obj - 1);
  int64_t n_pos = rng.uniform_int(cfg.min_relations, cfg.max_relations);
  n_pos = std::min(n_pos, max_pairs);
  int64_t n_neg = static_cast<int64_t>(std::llround(
      static_cast<double>(cfg.neg_frac) * static_cast<double>(n_pos)));
  n_neg = std::min(n_neg, max_pairs - n_pos);

  std::set<std::pair<int64_t, int64_t>> used;
  auto draw_pair = [&]() {
    for (;;) {
      const int64_t s = rng.uniform_int(0, n_obj - 1);
      const int64_t o = rng.uniform_int(0, n_obj - 1);
      if (s == o) continue;
      if (used.insert({s, o}).second) return std::make_pair(s, o);
    }
  };

  for (int64_t k = 0; k < n_pos; ++k) {
    auto [s, o] = draw_pair();
    RelationInstance r;
    r.subj = s;
    r.obj = o;
    r.predicate = sample_zipf(cdf, rng);
    r.union_feat = noisy_copy(pred_protos, r.predicate, cfg.noise_sigma, rng);
    rec.relations.push_back(std::move(r));
  }
  for (int64_t k = 0; k < n_neg; ++k) {
    auto [s, o] = draw_pair();
    RelationInstance r;
    r.subj = s;
    r.obj = o;
    r.predicate = 0;
    r.union_feat = noisy_copy(pred_protos, 0, cfg.noise_sigma, rng);
    rec.relations.push_back(std::move(r));
  }
  return rec;
}

}  // namespace

GeneratorConfig GeneratorConfig::defaults() {
  GeneratorConfig cfg;
  cfg.similar_pairs = {{2, 30, 0.3f}, {3, 38, 0.3f}, {5, 46, 0.3f}};
  return cfg;
}

void GeneratorConfig::validate() const {
  if (num_images < 1 || test_images < 0) throw ConfigError("image counts must be positive");
  if (min_objects < 2 || max_objects < min_objects)
    throw ConfigError("invalid objects-per-image range (need at least 2 objects)");
  if (num_object_classes < 1) throw ConfigError("num_object_classes must be positive");
  if (num_predicates < 1) throw ConfigError("num_predicates must be positive");
  if (zipf_s < 0.0) throw ConfigError("zipf_s must be non-negative");
  if (feature_dim < 1) throw ConfigError("feature_dim must be positive");
  if (noise_sigma < 0.0f) throw ConfigError("noise_sigma must be non-negative");
  if (neg_frac < 0.0f) throw ConfigError("neg_frac must be non-negative");
  if (min_relations < 1 || max_relations < min_relations)
    throw ConfigError("invalid relations-per-image range");
  for (const auto& p : similar_pairs) {
    if (p.delta <= 0.0f) throw ConfigError("similar pair delta must be positive");
    if (p.frequent < 1 || p.frequent > num_predicates || p.rare < 1 ||
        p.rare > num_predicates || p.frequent == p.rare)
      throw ConfigError("similar pair classes out of range");
  }
}

SyntheticData generate_synthetic(const GeneratorConfig& cfg, uint64_t seed) {
  cfg.validate();
  SyntheticData out;

  Rng proto_rng(derive_seed(seed, kPrototypeStream));
  out.object_prototypes = NumArray::zeros({cfg.num_object_classes, cfg.feature_dim});
  for (int64_t i = 0; i < cfg.num_object_classes; ++i)
    fill_unit_row(out.object_prototypes, i, proto_rng);

  out.predicate_prototypes = NumArray::zeros({cfg.num_predicates + 1, cfg.feature_dim});
  for (int64_t i = 1; i <= cfg.num_predicates; ++i)
    fill_unit_row(out.predicate_prototypes, i, proto_rng);
  // Rare partner sits at distance delta from its frequent partner along a
  // random direction (applied after all base prototypes are drawn).
  for (const auto& p : cfg.similar_pairs) {
    NumArray dir = NumArray::zeros({1, cfg.feature_dim});
    fill_unit_row(dir, 0, proto_rng);
    for (int64_t j = 0; j < cfg.feature_dim; ++j)
      out.predicate_prototypes.at(p.rare, j) =
          out.predicate_prototypes.at(p.frequent, j) + p.delta * dir.at(0, j);
  }

  // Zipf over positive classes: class k gets probability ~ k^-s.
  out.zipf_probs.resize(static_cast<size_t>(cfg.num_predicates));
  double z = 0.0;
  for (int64_t k = 1; k <= cfg.num_predicates; ++k)
    z += std::pow(static_cast<double>(k), -cfg.zipf_s);
  for (int64_t k = 1; k <= cfg.num_predicates; ++k)
    out.zipf_probs[static_cast<size_t>(k - 1)] =
        std::pow(static_cast<double>(k), -cfg.zipf_s) / z;
  std::vector<double> cdf(out.zipf_probs.size());
  double acc = 0.0;
  for (size_t i = 0; i < out.zipf_probs.size(); ++i) {
    acc += out.zipf_probs[i];
    cdf[i] = acc;
  }
  cdf.back() = 1.0;

  DatasetHeader header;
  header.version = 1;
  header.d_v = cfg.feature_dim;
  header.num_object_classes = cfg.num_object_classes;
  header.num_predicate_classes = cfg.num_predicates + 1;
  out.train.header = header;
  out.test.header = header;

  const int64_t total = cfg.num_images + cfg.test_images;
  std::vector<ImageRecord> records(static_cast<size_t>(total));
#pragma omp parallel for schedule(dynamic, 16)
  for (int64_t i = 0; i < total; ++i) {
    records[static_cast<size_t>(i)] = generate_image(
        cfg, out.object_prototypes, out.predicate_prototypes, cdf, seed, i);
  }

  out.train.images.assign(std::make_move_iterator(records.begin()),
                          std::make_move_iterator(records.begin() + cfg.num_images));
  out.test.images.assign(std::make_move_iterator(records.begin() + cfg.num_images),
                         std::make_move_iterator(records.end()));
  return out;
}

std::vector<SimilarPair> parse_similar_pairs(const std::string& spec) {
  std::vector<SimilarPair> out;
  if (spec.empty() || spec == "none") return out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    SimilarPair p;
    char c1 = 0, c2 = 0;
    std::istringstream is(item);
    if (!(is >> p.frequent >> c1 >> p.rare >> c2 >> p.delta) || c1 != ':' || c2 != ':')
      throw ConfigError("bad similar-pair entry (want F:R:delta): " + item);
    out.push_back(p);
  }
  return out;
}

std::string similar_pairs_to_string(const std::vector<SimilarPair>& pairs) {
  std::ostringstream os;
  for (size_t i = 0; i < pairs.size(); ++i) {
    if (i) os << ",";
    os << pairs[i].frequent << ":" << pairs[i].rare << ":" << pairs[i].delta;
  }
  return os.str();
}

}  // namespace epd
