// Command-line surface: synthetic data generation, predicate partitioning,
// training, evaluation, per-pair score explanation, and ablation sweeps.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "epd/checkpoint.hpp"
#include "epd/config.hpp"
#include "epd/dataset.hpp"
#include "epd/generator.hpp"
#include "epd/metrics.hpp"
#include "epd/model.hpp"
#include "epd/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct GenArgs {
  std::string config_path, out_dir;
  uint64_t seed = 7;
  int64_t num_images = -1, test_images = -1, num_predicates = -1;
  double zipf_s = -1.0;
  std::string similar_pairs = "<default>";
  double neg_frac = -1.0;
};

void apply_generator_key(epd::GeneratorConfig& cfg, const std::string& key,
                         const std::string& value) {
  auto i64 = [&](const std::string& v) { return std::stoll(v); };
  auto f64 = [&](const std::string& v) { return std::stod(v); };
  if (key == "num_images") cfg.num_images = i64(value);
  else if (key == "test_images") cfg.test_images = i64(value);
  else if (key == "min_objects") cfg.min_objects = i64(value);
  else if (key == "max_objects") cfg.max_objects = i64(value);
  else if (key == "num_object_classes") cfg.num_object_classes = i64(value);
  else if (key == "num_predicates") cfg.num_predicates = i64(value);
  else if (key == "zipf_s") cfg.zipf_s = f64(value);
  else if (key == "feature_dim") cfg.feature_dim = i64(value);
  else if (key == "noise_sigma") cfg.noise_sigma = static_cast<float>(f64(value));
  else if (key == "neg_frac") cfg.neg_frac = static_cast<float>(f64(value));
  else if (key == "min_relations") cfg.min_relations = i64(value);
  else if (key == "max_relations") cfg.max_relations = i64(value);
  else if (key == "similar_pairs") cfg.similar_pairs = epd::parse_similar_pairs(value);
  else throw epd::ConfigError("unknown generator config key: " + key);
}

int cmd_gen_data(const GenArgs& a) {
  epd::GeneratorConfig cfg = epd::GeneratorConfig::defaults();
  if (!a.config_path.empty())
    for (const auto& [k, v] : epd::parse_kv_file(a.config_path))
      apply_generator_key(cfg, k, v);
  if (a.num_images >= 0) cfg.num_images = a.num_images;
  if (a.test_images >= 0) cfg.test_images = a.test_images;
  if (a.num_predicates >= 0) cfg.num_predicates = a.num_predicates;
  if (a.zipf_s >= 0.0) cfg.zipf_s = a.zipf_s;
  if (a.similar_pairs != "<default>")
    cfg.similar_pairs = epd::parse_similar_pairs(a.similar_pairs);
  if (a.neg_frac >= 0.0) cfg.neg_frac = static_cast<float>(a.neg_frac);

  epd::SyntheticData data = epd::generate_synthetic(cfg, a.seed);
  fs::create_directories(a.out_dir);
  const std::string train_path = (fs::path(a.out_dir) / "train.jsonl").string();
  const std::string test_path = (fs::path(a.out_dir) / "test.jsonl").string();
  epd::save_dataset(data.train, train_path);
  epd::save_dataset(data.test, test_path);
  std::cout << "wrote " << train_path << " (" << data.train.images.size()
            << " images) and " << test_path << " (" << data.test.images.size()
            << " images)\n";
  return kExitOk;
}

int cmd_partition(const std::string& data_path, const std::string& cardinalities,
                  const std::string& out_path) {
  epd::Dataset ds = epd::load_dataset(data_path);
  const auto card = epd::parse_int_list(cardinalities);
  if (card.size() != 3)
    throw epd::ConfigError("--cardinalities wants three comma-separated counts");
  epd::FrequencyTable freq = epd::compute_frequency_table(ds);
  epd::PredicatePartition p = epd::partition_predicates(freq, card[0], card[1], card[2]);

  json j;
  j["cardinalities"] = {card[0], card[1], card[2]};
  j["head"] = p.head;
  j["body"] = p.body;
  j["tail"] = p.tail;
  json counts;
  for (int64_t c = 1; c < freq.num_classes(); ++c)
    counts[std::to_string(c)] = freq.counts[static_cast<size_t>(c)];
  j["counts"] = std::move(counts);

  const std::string text = j.dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(out_path);
    if (!out) throw epd::DataError("cannot write " + out_path);
    out << text;
    std::cout << "wrote " << out_path << "\n";
  }
  return kExitOk;
}

epd::RunConfig build_run_config(const std::string& config_path,
                                const std::vector<std::string>& sets,
                                const uint64_t* seed_flag) {
  epd::RunConfig cfg;
  if (!config_path.empty())
    for (const auto& [k, v] : epd::parse_kv_file(config_path)) cfg.set(k, v);
  for (const std::string& s : sets) {
    const size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw epd::ConfigError("--set wants key=value, got: " + s);
    cfg.set(s.substr(0, eq), s.substr(eq + 1));
  }
  if (seed_flag) cfg.seed = *seed_flag;
  return cfg;
}

// Vocab fields may be inherited from the dataset header when the config file
// does not pin them.
void adopt_header(epd::RunConfig& cfg, const epd::DatasetHeader& h) {
  cfg.d_v = h.d_v;
  cfg.num_object_classes = h.num_object_classes;
  cfg.num_predicate_classes = h.num_predicate_classes;
}

int cmd_train(const std::string& data_path, const std::string& val_path,
              const std::string& config_path, const std::vector<std::string>& sets,
              const uint64_t* seed_flag, const std::string& out_dir, bool verbose,
              bool keep_config_dims) {
  epd::Dataset train = epd::load_dataset(data_path);
  epd::RunConfig cfg = build_run_config(config_path, sets, seed_flag);
  if (!keep_config_dims) adopt_header(cfg, train.header);
  cfg.validate();

  epd::FrequencyTable freq = epd::compute_frequency_table(train);
  epd::PredicatePartition partition =
      epd::partition_predicates(freq, cfg.head, cfg.body, cfg.tail);
  epd::Model model = epd::Model::init(cfg, partition);

  epd::Dataset val;
  epd::TrainOptions opts;
  opts.out_dir = out_dir;
  opts.verbose = verbose;
  if (!val_path.empty()) {
    val = epd::load_dataset(val_path);
    opts.tracking_data = &val;
  }
  epd::TrainResult result = epd::train_model(model, train, opts);

  std::cout << "trained " << cfg.epochs << " epochs";
  if (!result.epochs.empty())
    std::cout << ", final l_total=" << result.epochs.back().mean.l_total;
  std::cout << ", best mR=" << result.best_mr << " at epoch " << result.best_epoch
            << "\n";
  if (!out_dir.empty())
    std::cout << "checkpoints: " << (fs::path(out_dir) / "final").string() << " and "
              << (fs::path(out_dir) / "best").string() << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& ckpt_dir, const std::string& data_path,
             const std::string& k_csv, const std::string& lambda_csv,
             bool no_graph_constraint, const std::string& config_path,
             const std::vector<std::string>& sets, bool force,
             const std::string& out_dir) {
  epd::Model model = epd::load_checkpoint(ckpt_dir);
  if (!config_path.empty() || !sets.empty()) {
    epd::RunConfig requested = build_run_config(config_path, sets, nullptr);
    const std::string mismatch = epd::config_structural_mismatch(model.cfg, requested);
    if (!mismatch.empty() && !force)
      throw epd::DataError("checkpoint config mismatch (" + mismatch +
                           "); pass --force to evaluate anyway");
  }

  std::vector<int64_t> k_values = model.cfg.k_list;
  if (!k_csv.empty()) k_values = epd::parse_int_list(k_csv);
  std::array<float, 3> lambda = model.cfg.lambda();
  if (!lambda_csv.empty()) lambda = epd::parse_float_triple(lambda_csv);
  const bool constraint = no_graph_constraint ? false : model.cfg.graph_constraint;

  epd::Dataset ds = epd::load_dataset(data_path);
  epd::MetricsReport rep = epd::eval_model(model, ds, k_values, lambda, constraint);

  const std::string js = epd::report_to_json(rep);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream jout(fs::path(out_dir) / "report.json");
    jout << js << "\n";
    std::ofstream cout_(fs::path(out_dir) / "report.csv");
    cout_ << epd::report_to_csv(rep, model.partition);
  }
  for (int64_t k : k_values)
    std::cout << "R@" << k << "=" << rep.r_at_k.at(k) << " mR@" << k << "="
              << rep.mr_at_k.at(k) << "\n";
  std::cout << "Mean=" << rep.mean_metric << "\n";
  return kExitOk;
}

int cmd_explain(const std::string& ckpt_dir, const std::string& data_path,
                const std::string& image_id, int64_t subj, int64_t obj, int64_t top_n,
                const std::string& out_path) {
  epd::Model model = epd::load_checkpoint(ckpt_dir);
  epd::Dataset ds = epd::load_dataset(data_path);
  const epd::ImageRecord* rec = nullptr;
  for (const auto& r : ds.images)
    if (r.image_id == image_id) {
      rec = &r;
      break;
    }
  if (!rec) throw epd::DataError("unknown image id: " + image_id);

  const auto panels = epd::explain_pair(model, *rec, ds.header, subj, obj, top_n);
  const char* names[3] = {"md", "md+ad1", "md+ad1+ad2"};
  json j;
  j["image_id"] = image_id;
  j["subj"] = subj;
  j["obj"] = obj;
  json jp = json::array();
  for (size_t p = 0; p < panels.size(); ++p) {
    json panel;
    panel["decoders"] = names[p];
    json rows = json::array();
    std::cout << "[" << names[p] << "]\n";
    for (const auto& e : panels[p]) {
      rows.push_back({{"class", e.cls}, {"score", e.score}});
      std::cout << "  class " << e.cls << "  " << std::setprecision(6) << e.score
                << "\n";
    }
    panel["top"] = std::move(rows);
    jp.push_back(std::move(panel));
  }
  j["panels"] = std::move(jp);
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw epd::DataError("cannot write " + out_path);
    out << j.dump(2) << "\n";
  }
  return kExitOk;
}

struct AblateVariant {
  std::string name;
  epd::RunConfig cfg;
};

std::vector<AblateVariant> expand_mode(const std::string& mode,
                                       const epd::RunConfig& base) {
  auto with = [&](auto&& edit) {
    epd::RunConfig c = base;
    edit(c);
    return c;
  };
  if (mode == "baseline_ce")
    return {{mode, with([](epd::RunConfig& c) {
               c.decoder_mode = epd::DecoderMode::single;
               c.single_objective = epd::SingleObjective::plain;
             })}};
  if (mode == "single_reweighted")
    return {{mode, with([](epd::RunConfig& c) {
               c.decoder_mode = epd::DecoderMode::single;
               c.single_objective = epd::SingleObjective::reweighted;
             })}};
  if (mode == "multi_nested")
    return {{mode, with([](epd::RunConfig& c) {
               c.decoder_mode = epd::DecoderMode::multi;
               c.subset_mode = epd::SubsetMode::nested;
             })}};
  if (mode == "multi_disjoint")
    return {{mode, with([](epd::RunConfig& c) {
               c.decoder_mode = epd::DecoderMode::multi;
               c.subset_mode = epd::SubsetMode::disjoint;
             })}};
  if (mode == "multi_md_full")
    return {{mode, with([](epd::RunConfig& c) {
               c.decoder_mode = epd::DecoderMode::multi;
               c.subset_mode = epd::SubsetMode::md_full_disjoint_aux;
             })}};
  if (mode == "bn_grid") {
    std::vector<AblateVariant> v;
    for (bool shared : {true, false}) {
      for (bool bn : {true, false}) {
        std::string name = std::string("bn_grid/") + (shared ? "fpd_shared" : "fpd_indep") +
                           (bn ? "+bn" : "+no_bn");
        v.push_back({name, with([&](epd::RunConfig& c) {
                       c.decoder_mode = epd::DecoderMode::multi;
                       c.subset_mode = epd::SubsetMode::nested;
                       c.shared_fpd = shared;
                       c.bn_enabled = bn;
                     })});
      }
    }
    return v;
  }
  throw epd::ConfigError("unknown ablation mode: " + mode);
}

int cmd_ablate(const std::string& data_path, const std::string& test_path,
               const std::string& config_path, const std::vector<std::string>& sets,
               const uint64_t* seed_flag, const std::string& modes_csv,
               const std::string& out_dir, bool verbose) {
  epd::Dataset train = epd::load_dataset(data_path);
  epd::Dataset test = test_path.empty() ? epd::Dataset{} : epd::load_dataset(test_path);
  const epd::Dataset& eval_set = test_path.empty() ? train : test;

  epd::RunConfig base = build_run_config(config_path, sets, seed_flag);
  adopt_header(base, train.header);
  base.validate();

  std::vector<AblateVariant> variants;
  {
    std::stringstream ss(modes_csv);
    std::string mode;
    while (std::getline(ss, mode, ',')) {
      if (mode.empty()) continue;
      for (auto& v : expand_mode(mode, base)) variants.push_back(std::move(v));
    }
  }
  if (variants.empty()) throw epd::ConfigError("--modes is empty");

  epd::FrequencyTable freq = epd::compute_frequency_table(train);
  epd::PredicatePartition partition =
      epd::partition_predicates(freq, base.head, base.body, base.tail);

  json rows = json::array();
  std::cout << std::left << std::setw(26) << "mode";
  for (int64_t k : base.k_list) std::cout << std::setw(10) << ("R@" + std::to_string(k));
  for (int64_t k : base.k_list) std::cout << std::setw(10) << ("mR@" + std::to_string(k));
  std::cout << std::setw(10) << "Mean" << std::setw(24) << "head/body/tail@max-K"
            << "\n";

  for (auto& variant : variants) {
    epd::Model model = epd::Model::init(variant.cfg, partition);
    epd::TrainOptions opts;
    opts.verbose = verbose;
    if (!out_dir.empty())
      opts.out_dir = (fs::path(out_dir) / variant.name).string();
    epd::train_model(model, train, opts);
    epd::MetricsReport rep = epd::eval_model(model, eval_set, variant.cfg.k_list,
                                             variant.cfg.lambda(),
                                             variant.cfg.graph_constraint);

    const int64_t kmax = *std::max_element(variant.cfg.k_list.begin(),
                                           variant.cfg.k_list.end());
    json row;
    row["mode"] = variant.name;
    for (int64_t k : variant.cfg.k_list) {
      row["r_at_" + std::to_string(k)] = rep.r_at_k.at(k);
      row["mr_at_" + std::to_string(k)] = rep.mr_at_k.at(k);
    }
    row["mean"] = rep.mean_metric;
    row["head"] = rep.groups.at(kmax).head;
    row["body"] = rep.groups.at(kmax).body;
    row["tail"] = rep.groups.at(kmax).tail;
    rows.push_back(row);

    std::cout << std::left << std::setw(26) << variant.name << std::fixed
              << std::setprecision(4);
    for (int64_t k : variant.cfg.k_list) std::cout << std::setw(10) << rep.r_at_k.at(k);
    for (int64_t k : variant.cfg.k_list) std::cout << std::setw(10) << rep.mr_at_k.at(k);
    std::cout << std::setw(10) << rep.mean_metric;
    std::ostringstream g;
    g << std::fixed << std::setprecision(3) << rep.groups.at(kmax).head << "/"
      << rep.groups.at(kmax).body << "/" << rep.groups.at(kmax).tail;
    std::cout << std::setw(24) << g.str() << "\n";
    std::cout.unsetf(std::ios::fixed);
    std::cout << std::setprecision(6);
  }

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream out(fs::path(out_dir) / "ablate_report.json");
    out << rows.dump(2) << "\n";
    std::cout << "wrote " << (fs::path(out_dir) / "ablate_report.json").string() << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ensemble predicate decoding: multi-decoder predicate classification "
               "for long-tailed relation data"};
  app.require_subcommand(1);

  // gen-data
  GenArgs gen;
  auto* sc_gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  sc_gen->add_option("--seed", gen.seed, "Generator seed");
  sc_gen->add_option("--config", gen.config_path, "Generator config file (key = value)");
  sc_gen->add_option("--out", gen.out_dir, "Output directory (train.jsonl, test.jsonl)")
      ->required();
  sc_gen->add_option("--num-images", gen.num_images, "Training images");
  sc_gen->add_option("--test-images", gen.test_images, "Test images");
  sc_gen->add_option("--num-predicates", gen.num_predicates,
                     "Positive predicate classes");
  sc_gen->add_option("--zipf-s", gen.zipf_s, "Zipf exponent");
  sc_gen->add_option("--similar-pairs", gen.similar_pairs,
                     "F:R:delta,... ('none' for no pairs)");
  sc_gen->add_option("--neg-frac", gen.neg_frac, "Negative pairs per positive");

  // partition
  std::string part_data, part_cards = "5,10,35", part_out;
  auto* sc_part = app.add_subcommand("partition", "Compute head/body/tail class blocks");
  sc_part->add_option("--data", part_data, "Dataset file")->required();
  sc_part->add_option("--cardinalities", part_cards, "h,b,t counts");
  sc_part->add_option("--out", part_out, "Output JSON (stdout if omitted)");

  // train
  std::string train_data, train_val, train_config, train_out;
  std::vector<std::string> train_sets;
  uint64_t train_seed = 0;
  bool train_verbose = false, train_keep_dims = false;
  auto* sc_train = app.add_subcommand("train", "Train a model");
  sc_train->add_option("--data", train_data, "Training dataset")->required();
  sc_train->add_option("--val", train_val, "Tracking dataset for best-mR selection");
  sc_train->add_option("--config", train_config, "Run config file (key = value)");
  sc_train->add_option("--set", train_sets, "Override one config key (key=value)");
  auto* train_seed_opt = sc_train->add_option("--seed", train_seed, "Run seed");
  sc_train->add_option("--out", train_out, "Output directory")->required();
  sc_train->add_flag("--verbose", train_verbose, "Per-epoch progress on stderr");
  sc_train->add_flag("--keep-config-dims", train_keep_dims,
                     "Do not adopt dims/vocab from the dataset header");

  // eval
  std::string eval_ckpt, eval_data, eval_k, eval_lambda, eval_config, eval_out;
  std::vector<std::string> eval_sets;
  bool eval_nogc = false, eval_force = false;
  auto* sc_eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  sc_eval->add_option("--ckpt", eval_ckpt, "Checkpoint directory")->required();
  sc_eval->add_option("--data", eval_data, "Dataset file")->required();
  sc_eval->add_option("--k", eval_k, "K values, e.g. 5,10");
  sc_eval->add_option("--lambda", eval_lambda, "Aggregation weights a,b,c");
  sc_eval->add_flag("--no-graph-constraint", eval_nogc,
                    "Rank every class of every pair");
  sc_eval->add_option("--config", eval_config, "Config to cross-check against");
  sc_eval->add_option("--set", eval_sets, "Override one config key (key=value)");
  sc_eval->add_flag("--force", eval_force, "Ignore config mismatches");
  sc_eval->add_option("--out", eval_out, "Report directory");

  // explain
  std::string ex_ckpt, ex_data, ex_image, ex_out;
  int64_t ex_subj = 0, ex_obj = 0, ex_top = 5;
  auto* sc_explain = app.add_subcommand("explain", "Per-decoder score breakdown");
  sc_explain->add_option("--ckpt", ex_ckpt, "Checkpoint directory")->required();
  sc_explain->add_option("--data", ex_data, "Dataset file")->required();
  sc_explain->add_option("--image", ex_image, "Image id")->required();
  sc_explain->add_option("--subj", ex_subj, "Subject object index")->required();
  sc_explain->add_option("--obj", ex_obj, "Object object index")->required();
  sc_explain->add_option("--top", ex_top, "Rows per panel");
  sc_explain->add_option("--out", ex_out, "Optional JSON output path");

  // ablate
  std::string ab_data, ab_test, ab_config, ab_modes, ab_out;
  std::vector<std::string> ab_sets;
  uint64_t ab_seed = 0;
  bool ab_verbose = false;
  auto* sc_ablate = app.add_subcommand("ablate", "Train and compare variants");
  sc_ablate->add_option("--data", ab_data, "Training dataset")->required();
  sc_ablate->add_option("--test", ab_test, "Evaluation dataset (train set if omitted)");
  sc_ablate->add_option("--config", ab_config, "Run config file");
  sc_ablate->add_option("--set", ab_sets, "Override one config key (key=value)");
  auto* ab_seed_opt = sc_ablate->add_option("--seed", ab_seed, "Shared run seed");
  sc_ablate->add_option("--modes", ab_modes, "Comma list of ablation modes")->required();
  sc_ablate->add_option("--out", ab_out, "Output directory");
  sc_ablate->add_flag("--verbose", ab_verbose, "Per-epoch progress on stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (sc_gen->parsed()) return cmd_gen_data(gen);
    if (sc_part->parsed()) return cmd_partition(part_data, part_cards, part_out);
    if (sc_train->parsed())
      return cmd_train(train_data, train_val, train_config, train_sets,
                       train_seed_opt->count() ? &train_seed : nullptr, train_out,
                       train_verbose, train_keep_dims);
    if (sc_eval->parsed())
      return cmd_eval(eval_ckpt, eval_data, eval_k, eval_lambda, eval_nogc,
                      eval_config, eval_sets, eval_force, eval_out);
    if (sc_explain->parsed())
      return cmd_explain(ex_ckpt, ex_data, ex_image, ex_subj, ex_obj, ex_top, ex_out);
    if (sc_ablate->parsed())
      return cmd_ablate(ab_data, ab_test, ab_config, ab_sets,
                        ab_seed_opt->count() ? &ab_seed : nullptr, ab_modes, ab_out,
                        ab_verbose);
  } catch (const epd::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const epd::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const epd::DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const epd::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
