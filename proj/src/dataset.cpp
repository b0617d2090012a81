#include "epd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace epd {

namespace {

using json = nlohmann::ordered_json;

json header_to_json(const DatasetHeader& h) {
  json j;
  j["version"] = h.version;
  j["d_v"] = h.d_v;
  j["num_object_classes"] = h.num_object_classes;
  j["num_predicate_classes"] = h.num_predicate_classes;
  return j;
}

json image_to_json(const ImageRecord& rec) {
  json j;
  j["image_id"] = rec.image_id;
  json objs = json::array();
  for (const auto& o : rec.objects) {
    json jo;
    jo["label"] = o.label;
    jo["bbox"] = {o.bbox[0], o.bbox[1], o.bbox[2], o.bbox[3]};
    jo["visual"] = o.visual;
    objs.push_back(std::move(jo));
  }
  j["objects"] = std::move(objs);
  json rels = json::array();
  for (const auto& r : rec.relations) {
    json jr;
    jr["subj"] = r.subj;
    jr["obj"] = r.obj;
    jr["predicate"] = r.predicate;
    jr["union"] = r.union_feat;
    rels.push_back(std::move(jr));
  }
  j["relations"] = std::move(rels);
  return j;
}

std::vector<float> floats_from_json(const json& j) {
  std::vector<float> out;
  out.reserve(j.size());
  for (const auto& v : j) out.push_back(static_cast<float>(v.get<double>()));
  return out;
}

}  // namespace

void validate_record(const ImageRecord& rec, const DatasetHeader& header,
                     const std::string& where) {
  const int64_t n_obj = static_cast<int64_t>(rec.objects.size());
  for (size_t i = 0; i < rec.objects.size(); ++i) {
    const auto& o = rec.objects[i];
    if (o.label < 0 || o.label >= header.num_object_classes)
      throw DataError(where + ": object " + std::to_string(i) + " label out of range");
    if (!(o.bbox[0] < o.bbox[2]) || !(o.bbox[1] < o.bbox[3]))
      throw DataError(where + ": object " + std::to_string(i) + " has degenerate bbox");
    if (o.bbox[0] < 0.0f || o.bbox[1] < 0.0f || o.bbox[2] > 1.0f || o.bbox[3] > 1.0f)
      throw DataError(where + ": object " + std::to_string(i) +
                      " bbox outside [0,1] coordinates");
    if (static_cast<int64_t>(o.visual.size()) != header.d_v)
      throw DataError(where + ": object " + std::to_string(i) +
                      " visual feature length does not match header d_v");
    for (float x : o.visual)
      if (!std::isfinite(x))
        throw DataError(where + ": object " + std::to_string(i) +
                        " has non-finite visual feature");
  }
  if (!rec.relations.empty() && n_obj < 2)
    throw DataError(where + ": relations present but fewer than 2 objects");
  std::set<std::pair<int64_t, int64_t>> seen;
  for (size_t i = 0; i < rec.relations.size(); ++i) {
    const auto& r = rec.relations[i];
    if (r.subj < 0 || r.subj >= n_obj || r.obj < 0 || r.obj >= n_obj)
      throw DataError(where + ": relation " + std::to_string(i) +
                      " references an invalid object index");
    if (r.subj == r.obj)
      throw DataError(where + ": relation " + std::to_string(i) + " has subj == obj");
    if (r.predicate < 0 || r.predicate >= header.num_predicate_classes)
      throw DataError(where + ": relation " + std::to_string(i) +
                      " predicate out of range");
    if (static_cast<int64_t>(r.union_feat.size()) != header.d_v)
      throw DataError(where + ": relation " + std::to_string(i) +
                      " union feature length does not match header d_v");
    for (float x : r.union_feat)
      if (!std::isfinite(x))
        throw DataError(where + ": relation " + std::to_string(i) +
                        " has non-finite union feature");
    if (!seen.insert({r.subj, r.obj}).second)
      throw DataError(where + ": duplicate (subj,obj) pair (" + std::to_string(r.subj) +
                      "," + std::to_string(r.obj) + ")");
  }
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path);

  Dataset ds;
  std::string line;
  int64_t line_no = 0;

  if (!std::getline(in, line)) throw DataError(path + ": empty file, header expected");
  ++line_no;
  try {
    json h = json::parse(line);
    ds.header.version = h.at("version").get<int64_t>();
    ds.header.d_v = h.at("d_v").get<int64_t>();
    ds.header.num_object_classes = h.at("num_object_classes").get<int64_t>();
    ds.header.num_predicate_classes = h.at("num_predicate_classes").get<int64_t>();
  } catch (const json::exception& e) {
    throw DataError(path + ":1: bad header: " + e.what());
  }
  if (ds.header.version != 1)
    throw DataError(path + ":1: unsupported format version " +
                    std::to_string(ds.header.version));
  if (ds.header.d_v <= 0 || ds.header.num_object_classes <= 0 ||
      ds.header.num_predicate_classes <= 1)
    throw DataError(path + ":1: header dimensions must be positive");

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    ImageRecord rec;
    try {
      json j = json::parse(line);
      rec.image_id = j.at("image_id").get<std::string>();
      for (const auto& jo : j.at("objects")) {
        ObjectInstance o;
        o.label = jo.at("label").get<int64_t>();
        const auto& bb = jo.at("bbox");
        if (bb.size() != 4) throw DataError(where + ": bbox must have 4 entries");
        for (int i = 0; i < 4; ++i)
          o.bbox[static_cast<size_t>(i)] = static_cast<float>(bb[static_cast<size_t>(i)].get<double>());
        o.visual = floats_from_json(jo.at("visual"));
        rec.objects.push_back(std::move(o));
      }
      for (const auto& jr : j.at("relations")) {
        RelationInstance r;
        r.subj = jr.at("subj").get<int64_t>();
        r.obj = jr.at("obj").get<int64_t>();
        r.predicate = jr.at("predicate").get<int64_t>();
        r.union_feat = floats_from_json(jr.at("union"));
        rec.relations.push_back(std::move(r));
      }
    } catch (const json::exception& e) {
      throw DataError(where + ": parse error: " + e.what());
    }
    validate_record(rec, ds.header, where);
    ds.images.push_back(std::move(rec));
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open file for writing: " + path);
  out << header_to_json(ds.header).dump() << "\n";
  for (const auto& rec : ds.images) out << image_to_json(rec).dump() << "\n";
  if (!out) throw DataError("write failed: " + path);
}

int64_t FrequencyTable::total() const {
  int64_t t = 0;
  for (int64_t c : counts) t += c;
  return t;
}

FrequencyTable compute_frequency_table(const Dataset& ds) {
  if (ds.images.empty()) throw DataError("frequency table over an empty dataset");
  FrequencyTable ft;
  ft.counts.assign(static_cast<size_t>(ds.header.num_predicate_classes), 0);
  for (const auto& rec : ds.images)
    for (const auto& r : rec.relations)
      if (r.predicate > 0) ++ft.counts[static_cast<size_t>(r.predicate)];
  return ft;
}

int PredicatePartition::block_of(int64_t cls) const {
  for (int64_t c : head)
    if (c == cls) return 0;
  for (int64_t c : body)
    if (c == cls) return 1;
  for (int64_t c : tail)
    if (c == cls) return 2;
  return -1;
}

PredicatePartition partition_predicates(const FrequencyTable& freq, int64_t h,
                                        int64_t b, int64_t t) {
  const int64_t positives = freq.num_classes() - 1;
  if (h < 1 || b < 1 || t < 1)
    throw DataError("partition cardinalities must all be >= 1");
  if (h + b + t != positives)
    throw DataError("partition cardinalities sum to " + std::to_string(h + b + t) +
                    " but there are " + std::to_string(positives) +
                    " positive predicate classes");

  std::vector<int64_t> order(static_cast<size_t>(positives));
  for (int64_t i = 0; i < positives; ++i) order[static_cast<size_t>(i)] = i + 1;
  std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t bcls) {
    const int64_t ca = freq.counts[static_cast<size_t>(a)];
    const int64_t cb = freq.counts[static_cast<size_t>(bcls)];
    if (ca != cb) return ca > cb;
    return a < bcls;
  });

  PredicatePartition p;
  p.head.assign(order.begin(), order.begin() + h);
  p.body.assign(order.begin() + h, order.begin() + h + b);
  p.tail.assign(order.begin() + h + b, order.end());
  return p;
}

SubsetMode subset_mode_from_string(const std::string& s) {
  if (s == "nested") return SubsetMode::nested;
  if (s == "disjoint") return SubsetMode::disjoint;
  if (s == "md_full_disjoint_aux") return SubsetMode::md_full_disjoint_aux;
  throw ConfigError("unknown subset mode: " + s);
}

std::string to_string(SubsetMode m) {
  switch (m) {
    case SubsetMode::nested: return "nested";
    case SubsetMode::disjoint: return "disjoint";
    case SubsetMode::md_full_disjoint_aux: return "md_full_disjoint_aux";
  }
  return "?";
}

SubsetAssignment assign_subsets(const PredicatePartition& p, SubsetMode mode,
                                int64_t num_predicate_classes) {
  SubsetAssignment a;
  a.mode = mode;
  auto concat3 = [&](bool with_head, bool with_body, bool with_tail) {
    std::vector<int64_t> v;
    if (with_head) v.insert(v.end(), p.head.begin(), p.head.end());
    if (with_body) v.insert(v.end(), p.body.begin(), p.body.end());
    if (with_tail) v.insert(v.end(), p.tail.begin(), p.tail.end());
    return v;
  };
  switch (mode) {
    case SubsetMode::nested:
      a.md = concat3(true, true, true);
      a.ad1 = concat3(false, true, true);
      a.ad2 = concat3(false, false, true);
      break;
    case SubsetMode::disjoint:
      a.md = p.head;
      a.ad1 = p.body;
      a.ad2 = p.tail;
      break;
    case SubsetMode::md_full_disjoint_aux:
      a.md = concat3(true, true, true);
      a.ad1 = p.body;
      a.ad2 = p.tail;
      break;
  }
  auto mask = [&](const std::vector<int64_t>& classes) {
    std::vector<char> m(static_cast<size_t>(num_predicate_classes), 0);
    for (int64_t c : classes) m.at(static_cast<size_t>(c)) = 1;
    return m;
  };
  a.in_md = mask(a.md);
  a.in_ad1 = mask(a.ad1);
  a.in_ad2 = mask(a.ad2);
  return a;
}

}  // namespace epd
