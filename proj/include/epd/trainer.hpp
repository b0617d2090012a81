#pragma once

#include <string>
#include <vector>

#include "epd/metrics.hpp"
#include "epd/model.hpp"

namespace epd {

struct EpochLog {
  int64_t epoch = 0;
  LossBreakdown mean;       // per-batch means; subset counts summed
  bool tracked = false;     // mean recall evaluated this epoch
  double tracked_mr = 0.0;  // mR at the largest configured K
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  int64_t best_epoch = 0;  // epoch of the best tracked mR (0 = initialization)
  double best_mr = 0.0;
};

struct TrainOptions {
  // Dataset used for mean-recall tracking; the training set when null.
  const Dataset* tracking_data = nullptr;
  // Output directory for train_log.jsonl plus final/ and best/ checkpoints;
  // empty trains in memory only.
  std::string out_dir;
  bool verbose = false;
};

// Deterministic epoch loop: seeded shuffling, fixed batch order, loss
// breakdown per epoch. Tracks mR every cfg.eval_every epochs (and on the last
// epoch); the best-tracked parameters are kept and written alongside the
// final ones.
TrainResult train_model(Model& m, const Dataset& train, const TrainOptions& opts);

// Convenience: predictions + metrics report for a dataset.
MetricsReport eval_model(Model& m, const Dataset& ds,
                         const std::vector<int64_t>& k_values,
                         const std::array<float, 3>& lambda, bool graph_constraint);

std::string epoch_log_line(const EpochLog& e);

}  // namespace epd
