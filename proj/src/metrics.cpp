#include "epd/metrics.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace epd {

namespace {

bool rank_before(const Prediction& a, const Prediction& b) {
  if (a.conf != b.conf) return a.conf > b.conf;
  if (a.subj != b.subj) return a.subj < b.subj;
  if (a.obj != b.obj) return a.obj < b.obj;
  return a.cls < b.cls;
}

}  // namespace

std::vector<char> topk_hits(const ImageRecord& gt, const ImagePredictions& preds,
                            int64_t k, bool graph_constraint) {
  if (k < 1) throw DataError("recall requires K >= 1");

  ImagePredictions pool;
  if (graph_constraint) {
    std::map<std::pair<int64_t, int64_t>, Prediction> best;
    for (const auto& p : preds) {
      auto key = std::make_pair(p.subj, p.obj);
      auto it = best.find(key);
      if (it == best.end() || p.conf > it->second.conf ||
          (p.conf == it->second.conf && p.cls < it->second.cls)) {
        best[key] = p;
      }
    }
    pool.reserve(best.size());
    for (const auto& [key, p] : best) pool.push_back(p);
  } else {
    pool = preds;
  }

  std::sort(pool.begin(), pool.end(), rank_before);
  if (static_cast<int64_t>(pool.size()) > k) pool.resize(static_cast<size_t>(k));

  std::set<std::tuple<int64_t, int64_t, int64_t>> top;
  for (const auto& p : pool) top.insert({p.subj, p.obj, p.cls});

  std::vector<char> hits(gt.relations.size(), 0);
  for (size_t i = 0; i < gt.relations.size(); ++i) {
    const auto& r = gt.relations[i];
    if (r.predicate == 0) continue;
    if (top.count({r.subj, r.obj, r.predicate})) hits[i] = 1;
  }
  return hits;
}

double recall_at_k(const std::vector<const ImageRecord*>& images,
                   const PredictionSet& preds, int64_t k, bool graph_constraint) {
  if (images.size() != preds.per_image.size())
    throw DataError("prediction set not aligned with images");
  double sum = 0.0;
  int64_t counted = 0;
  for (size_t i = 0; i < images.size(); ++i) {
    int64_t gt_count = 0;
    for (const auto& r : images[i]->relations)
      if (r.predicate > 0) ++gt_count;
    if (gt_count == 0) continue;
    const auto hits = topk_hits(*images[i], preds.per_image[i], k, graph_constraint);
    int64_t h = 0;
    for (char c : hits) h += c;
    sum += static_cast<double>(h) / static_cast<double>(gt_count);
    ++counted;
  }
  if (counted == 0) return 0.0;
  return sum / static_cast<double>(counted);
}

std::map<int64_t, ClassRecall> per_class_recall_at_k(
    const std::vector<const ImageRecord*>& images, const PredictionSet& preds,
    int64_t k, bool graph_constraint) {
  if (images.size() != preds.per_image.size())
    throw DataError("prediction set not aligned with images");
  std::map<int64_t, ClassRecall> out;
  for (size_t i = 0; i < images.size(); ++i) {
    const auto hits = topk_hits(*images[i], preds.per_image[i], k, graph_constraint);
    for (size_t r = 0; r < images[i]->relations.size(); ++r) {
      const auto& rel = images[i]->relations[r];
      if (rel.predicate == 0) continue;
      auto& cr = out[rel.predicate];
      ++cr.gt_count;
      cr.hits += hits[r];
    }
  }
  for (auto& [cls, cr] : out)
    cr.recall = static_cast<double>(cr.hits) / static_cast<double>(cr.gt_count);
  return out;
}

double mean_recall_from(const std::map<int64_t, ClassRecall>& per_class) {
  if (per_class.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [cls, cr] : per_class) sum += cr.recall;
  return sum / static_cast<double>(per_class.size());
}

GroupRecall group_recall(const std::map<int64_t, ClassRecall>& per_class,
                         const PredicatePartition& partition) {
  double sums[3] = {0.0, 0.0, 0.0};
  int64_t counts[3] = {0, 0, 0};
  for (const auto& [cls, cr] : per_class) {
    const int block = partition.block_of(cls);
    if (block < 0)
      throw DataError("class " + std::to_string(cls) + " missing from partition");
    sums[block] += cr.recall;
    ++counts[block];
  }
  GroupRecall g;
  g.head = counts[0] ? sums[0] / static_cast<double>(counts[0]) : 0.0;
  g.body = counts[1] ? sums[1] / static_cast<double>(counts[1]) : 0.0;
  g.tail = counts[2] ? sums[2] / static_cast<double>(counts[2]) : 0.0;
  return g;
}

double mean_metric(const std::vector<double>& r_values,
                   const std::vector<double>& mr_values) {
  if (r_values.empty() && mr_values.empty())
    throw DataError("mean_metric over empty inputs");
  double sum = 0.0;
  for (double v : r_values) sum += v;
  for (double v : mr_values) sum += v;
  return sum / static_cast<double>(r_values.size() + mr_values.size());
}

MetricsReport evaluate_predictions(const std::vector<const ImageRecord*>& images,
                                   const PredictionSet& preds,
                                   const std::vector<int64_t>& k_values,
                                   const PredicatePartition& partition,
                                   bool graph_constraint) {
  MetricsReport rep;
  rep.k_values = k_values;
  rep.graph_constraint = graph_constraint;
  for (const auto* img : images) {
    for (const auto& r : img->relations)
      if (r.predicate > 0) {
        ++rep.images_evaluated;
        break;
      }
  }
  std::vector<double> rs, mrs;
  for (int64_t k : k_values) {
    rep.r_at_k[k] = recall_at_k(images, preds, k, graph_constraint);
    rep.per_class[k] = per_class_recall_at_k(images, preds, k, graph_constraint);
    rep.mr_at_k[k] = mean_recall_from(rep.per_class[k]);
    rep.groups[k] = group_recall(rep.per_class[k], partition);
    rs.push_back(rep.r_at_k[k]);
    mrs.push_back(rep.mr_at_k[k]);
  }
  rep.mean_metric = mean_metric(rs, mrs);
  return rep;
}

std::string report_to_json(const MetricsReport& r) {
  using json = nlohmann::ordered_json;
  json j;
  j["k_values"] = r.k_values;
  j["graph_constraint"] = r.graph_constraint;
  j["images_evaluated"] = r.images_evaluated;
  json jr, jmr, jpc, jg;
  for (int64_t k : r.k_values) {
    const std::string ks = std::to_string(k);
    jr[ks] = r.r_at_k.at(k);
    jmr[ks] = r.mr_at_k.at(k);
    json cls_block;
    for (const auto& [cls, cr] : r.per_class.at(k)) {
      json c;
      c["count"] = cr.gt_count;
      c["hits"] = cr.hits;
      c["recall"] = cr.recall;
      cls_block[std::to_string(cls)] = std::move(c);
    }
    jpc[ks] = std::move(cls_block);
    const auto& g = r.groups.at(k);
    jg[ks] = {{"head", g.head}, {"body", g.body}, {"tail", g.tail}};
  }
  j["recall"] = std::move(jr);
  j["mean_recall"] = std::move(jmr);
  j["per_class"] = std::move(jpc);
  j["groups"] = std::move(jg);
  j["mean"] = r.mean_metric;
  return j.dump(2);
}

std::string report_to_csv(const MetricsReport& r, const PredicatePartition& partition) {
  std::ostringstream os;
  os << "class,gt_count";
  for (int64_t k : r.k_values) os << ",recall@" << k;
  os << ",group\n";

  std::set<int64_t> classes;
  for (const auto& [k, m] : r.per_class)
    for (const auto& [cls, cr] : m) classes.insert(cls);
  const char* group_names[3] = {"head", "body", "tail"};
  for (int64_t cls : classes) {
    int64_t count = 0;
    for (const auto& [k, m] : r.per_class) {
      auto it = m.find(cls);
      if (it != m.end()) count = it->second.gt_count;
    }
    os << cls << "," << count;
    for (int64_t k : r.k_values) {
      auto it = r.per_class.at(k).find(cls);
      os << "," << (it != r.per_class.at(k).end() ? it->second.recall : 0.0);
    }
    const int block = partition.block_of(cls);
    os << "," << (block >= 0 ? group_names[block] : "?") << "\n";
  }

  os << "\nmetric,value\n";
  for (int64_t k : r.k_values) os << "R@" << k << "," << r.r_at_k.at(k) << "\n";
  for (int64_t k : r.k_values) os << "mR@" << k << "," << r.mr_at_k.at(k) << "\n";
  for (int64_t k : r.k_values) {
    const auto& g = r.groups.at(k);
    os << "head@" << k << "," << g.head << "\n";
    os << "body@" << k << "," << g.body << "\n";
    os << "tail@" << k << "," << g.tail << "\n";
  }
  os << "Mean," << r.mean_metric << "\n";
  return os.str();
}

}  // namespace epd
