#pragma once

#include <string>

#include "epd/model.hpp"

namespace epd {

// Checkpoint = directory with manifest.json plus one little-endian raw
// float32 file per named parameter (batch-norm running stats included).
// load(save(m)) reproduces every array bitwise.
void save_checkpoint(Model& m, const std::string& dir);
Model load_checkpoint(const std::string& dir);

// Structural fields that must match between a checkpoint's config and a
// user-supplied one (dims, vocabs, architecture flags). Returns a description
// of the first mismatch, or an empty string.
std::string config_structural_mismatch(const RunConfig& a, const RunConfig& b);

}  // namespace epd
