#include "epd/trainer.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "epd/checkpoint.hpp"
#include "epd/rng.hpp"
#include "json.hpp"

namespace epd {

namespace {

void check_header(const RunConfig& cfg, const DatasetHeader& h) {
  if (h.d_v != cfg.d_v)
    throw DataError("dataset d_v " + std::to_string(h.d_v) +
                    " does not match config d_v " + std::to_string(cfg.d_v));
  if (h.num_object_classes != cfg.num_object_classes)
    throw DataError("dataset object vocab does not match config");
  if (h.num_predicate_classes != cfg.num_predicate_classes)
    throw DataError("dataset predicate vocab does not match config");
}

double tracked_mean_recall(Model& m, const Dataset& ds) {
  const int64_t k = *std::max_element(m.cfg.k_list.begin(), m.cfg.k_list.end());
  PredictionSet preds = predict_dataset(m, ds, m.cfg.lambda());
  std::vector<const ImageRecord*> images;
  images.reserve(ds.images.size());
  for (const auto& rec : ds.images) images.push_back(&rec);
  const auto per_class =
      per_class_recall_at_k(images, preds, k, m.cfg.graph_constraint);
  return mean_recall_from(per_class);
}

struct ParamSnapshot {
  std::vector<NumArray> values;
};

ParamSnapshot snapshot(Model& m) {
  ParamSnapshot s;
  for (ParamRef& p : m.param_refs()) s.values.push_back(*p.value);
  return s;
}

void restore(Model& m, const ParamSnapshot& s) {
  auto refs = m.param_refs();
  for (size_t i = 0; i < refs.size(); ++i) *refs[i].value = s.values[i];
}

}  // namespace

std::string epoch_log_line(const EpochLog& e) {
  nlohmann::ordered_json j;
  j["epoch"] = e.epoch;
  j["l_md"] = e.mean.l_md;
  j["l_ad1"] = e.mean.l_ad1;
  j["l_ad2"] = e.mean.l_ad2;
  j["l_agg"] = e.mean.l_agg;
  j["l_obj"] = e.mean.l_obj;
  j["l_total"] = e.mean.l_total;
  j["n_md"] = e.mean.n_md;
  j["n_ad1"] = e.mean.n_ad1;
  j["n_ad2"] = e.mean.n_ad2;
  if (e.tracked) j["mr"] = e.tracked_mr;
  return j.dump();
}

TrainResult train_model(Model& m, const Dataset& train, const TrainOptions& opts) {
  check_header(m.cfg, train.header);
  m.cfg.warn_on_lambda_order();
  const Dataset& tracking = opts.tracking_data ? *opts.tracking_data : train;

  TrainResult result;
  Rng shuffle_rng(derive_seed(m.cfg.seed, 0x5457));

  // Initialization is the baseline for best-mR tracking so epochs=0 still
  // yields a best checkpoint.
  ParamSnapshot best = snapshot(m);
  result.best_epoch = 0;
  result.best_mr = -1.0;

  const int64_t n_images = static_cast<int64_t>(train.images.size());
  for (int64_t epoch = 1; epoch <= m.cfg.epochs; ++epoch) {
    std::vector<int64_t> order = shuffle_rng.permutation(n_images);

    EpochLog log;
    log.epoch = epoch;
    int64_t batches = 0;
    for (int64_t start = 0; start < n_images; start += m.cfg.batch_size) {
      const int64_t end = std::min(start + m.cfg.batch_size, n_images);
      Batch batch = build_batch(
          train, std::span<const int64_t>(order.data() + start,
                                          static_cast<size_t>(end - start)),
          true);
      if (batch.n_relations() == 0) continue;
      LossBreakdown b;
      try {
        b = train_step(m, batch);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(batches + 1) + ": " + e.what());
      }
      log.mean.l_md += b.l_md;
      log.mean.l_ad1 += b.l_ad1;
      log.mean.l_ad2 += b.l_ad2;
      log.mean.l_agg += b.l_agg;
      log.mean.l_obj += b.l_obj;
      log.mean.l_total += b.l_total;
      log.mean.n_md += b.n_md;
      log.mean.n_ad1 += b.n_ad1;
      log.mean.n_ad2 += b.n_ad2;
      ++batches;
    }
    if (batches > 0) {
      log.mean.l_md /= static_cast<double>(batches);
      log.mean.l_ad1 /= static_cast<double>(batches);
      log.mean.l_ad2 /= static_cast<double>(batches);
      log.mean.l_agg /= static_cast<double>(batches);
      log.mean.l_obj /= static_cast<double>(batches);
      log.mean.l_total /= static_cast<double>(batches);
    }

    if (epoch % m.cfg.eval_every == 0 || epoch == m.cfg.epochs) {
      log.tracked = true;
      log.tracked_mr = tracked_mean_recall(m, tracking);
      if (log.tracked_mr > result.best_mr) {
        result.best_mr = log.tracked_mr;
        result.best_epoch = epoch;
        best = snapshot(m);
      }
    }
    if (opts.verbose) {
      std::cerr << "epoch " << epoch << " l_total=" << log.mean.l_total;
      if (log.tracked) std::cerr << " mr=" << log.tracked_mr;
      std::cerr << "\n";
    }
    result.epochs.push_back(std::move(log));
  }

  if (!opts.out_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(opts.out_dir);
    std::ofstream log(fs::path(opts.out_dir) / "train_log.jsonl");
    if (!log) throw DataError("cannot write train log in " + opts.out_dir);
    for (const auto& e : result.epochs) log << epoch_log_line(e) << "\n";

    save_checkpoint(m, (fs::path(opts.out_dir) / "final").string());
    ParamSnapshot final_params = snapshot(m);
    restore(m, best);
    save_checkpoint(m, (fs::path(opts.out_dir) / "best").string());
    restore(m, final_params);
  }
  return result;
}

MetricsReport eval_model(Model& m, const Dataset& ds,
                         const std::vector<int64_t>& k_values,
                         const std::array<float, 3>& lambda, bool graph_constraint) {
  check_header(m.cfg, ds.header);
  PredictionSet preds = predict_dataset(m, ds, lambda);
  std::vector<const ImageRecord*> images;
  images.reserve(ds.images.size());
  for (const auto& rec : ds.images) images.push_back(&rec);
  return evaluate_predictions(images, preds, k_values, m.partition, graph_constraint);
}

}  // namespace epd
