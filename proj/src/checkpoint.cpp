#include "epd/checkpoint.hpp"

#include <bit>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian float32");

namespace epd {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string sanitize(const std::string& name) {
  std::string s = name;
  for (char& c : s)
    if (c == '.') c = '_';
  return s;
}

void write_raw(const fs::path& path, const NumArray& a) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(a.data.data()),
            static_cast<std::streamsize>(a.data.size() * sizeof(float)));
  if (!out) throw DataError("write failed: " + path.string());
}

void read_raw(const fs::path& path, NumArray& a) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  in.read(reinterpret_cast<char*>(a.data.data()),
          static_cast<std::streamsize>(a.data.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(a.data.size() * sizeof(float)))
    throw DataError("short read (shape mismatch?): " + path.string());
  char extra;
  if (in.read(&extra, 1))
    throw DataError("trailing bytes (shape mismatch?): " + path.string());
}

json partition_to_json(const PredicatePartition& p) {
  json j;
  j["head"] = p.head;
  j["body"] = p.body;
  j["tail"] = p.tail;
  return j;
}

PredicatePartition partition_from_json(const json& j) {
  PredicatePartition p;
  p.head = j.at("head").get<std::vector<int64_t>>();
  p.body = j.at("body").get<std::vector<int64_t>>();
  p.tail = j.at("tail").get<std::vector<int64_t>>();
  return p;
}

}  // namespace

void save_checkpoint(Model& m, const std::string& dir) {
  fs::create_directories(dir);
  json manifest;
  manifest["format_version"] = 1;
  manifest["config"] = json::parse(m.cfg.to_json_string());
  manifest["partition"] = partition_to_json(m.partition);

  json params = json::array();
  int index = 0;
  for (ParamRef& p : m.param_refs()) {
    std::ostringstream file;
    file << "p" << index++ << "_" << sanitize(p.name) << ".f32";
    json e;
    e["name"] = p.name;
    e["shape"] = p.value->shape;
    e["file"] = file.str();
    e["learnable"] = p.learnable;
    params.push_back(std::move(e));
    write_raw(fs::path(dir) / file.str(), *p.value);
  }
  manifest["params"] = std::move(params);

  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw DataError("cannot write manifest in " + dir);
  out << manifest.dump(2) << "\n";
}

Model load_checkpoint(const std::string& dir) {
  const fs::path mpath = fs::path(dir) / "manifest.json";
  std::ifstream in(mpath);
  if (!in) throw DataError("cannot open checkpoint manifest: " + mpath.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw DataError(mpath.string() + ": bad manifest: " + e.what());
  }
  if (manifest.at("format_version").get<int64_t>() != 1)
    throw DataError("unsupported checkpoint format version");

  RunConfig cfg = RunConfig::from_json_string(manifest.at("config").dump());
  PredicatePartition partition = partition_from_json(manifest.at("partition"));
  Model m = Model::init(cfg, partition);

  std::map<std::string, NumArray*> by_name;
  for (ParamRef& p : m.param_refs()) by_name[p.name] = p.value;

  size_t loaded = 0;
  for (const auto& e : manifest.at("params")) {
    const std::string name = e.at("name").get<std::string>();
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw DataError("checkpoint parameter not in model: " + name);
    const auto shape = e.at("shape").get<std::vector<int64_t>>();
    if (shape != it->second->shape)
      throw DataError("checkpoint shape mismatch for " + name);
    read_raw(fs::path(dir) / e.at("file").get<std::string>(), *it->second);
    check_finite(*it->second, name.c_str());
    ++loaded;
  }
  if (loaded != by_name.size())
    throw DataError("checkpoint is missing parameters (" + std::to_string(loaded) +
                    " of " + std::to_string(by_name.size()) + ")");
  return m;
}

std::string config_structural_mismatch(const RunConfig& a, const RunConfig& b) {
  auto diff = [](const std::string& key, auto x, auto y) {
    std::ostringstream os;
    os << key << ": " << x << " vs " << y;
    return os.str();
  };
  if (a.d_v != b.d_v) return diff("d_v", a.d_v, b.d_v);
  if (a.d_s != b.d_s) return diff("d_s", a.d_s, b.d_s);
  if (a.d_g != b.d_g) return diff("d_g", a.d_g, b.d_g);
  if (a.d_o != b.d_o) return diff("d_o", a.d_o, b.d_o);
  if (a.d_p != b.d_p) return diff("d_p", a.d_p, b.d_p);
  if (a.d_h != b.d_h) return diff("d_h", a.d_h, b.d_h);
  if (a.num_object_classes != b.num_object_classes)
    return diff("num_object_classes", a.num_object_classes, b.num_object_classes);
  if (a.num_predicate_classes != b.num_predicate_classes)
    return diff("num_predicate_classes", a.num_predicate_classes,
                b.num_predicate_classes);
  if (a.head != b.head || a.body != b.body || a.tail != b.tail)
    return "partition cardinalities differ";
  if (a.activation != b.activation)
    return diff("activation", to_string(a.activation), to_string(b.activation));
  if (a.bn_enabled != b.bn_enabled) return diff("bn_enabled", a.bn_enabled, b.bn_enabled);
  if (a.shared_fpd != b.shared_fpd) return diff("shared_fpd", a.shared_fpd, b.shared_fpd);
  if (a.decoder_mode != b.decoder_mode)
    return diff("decoder_mode", to_string(a.decoder_mode), to_string(b.decoder_mode));
  if (a.subset_mode != b.subset_mode)
    return diff("subset_mode", to_string(a.subset_mode), to_string(b.subset_mode));
  return "";
}

}  // namespace epd
