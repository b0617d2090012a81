#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "epd/numarray.hpp"

namespace epd {

struct ObjectInstance {
  int64_t label = 0;
  std::array<float, 4> bbox{};  // x1,y1,x2,y2 in [0,1]
  std::vector<float> visual;
};

struct RelationInstance {
  int64_t subj = 0;
  int64_t obj = 0;
  int64_t predicate = 0;  // 0 = no relation
  std::vector<float> union_feat;
};

struct ImageRecord {
  std::string image_id;
  std::vector<ObjectInstance> objects;
  std::vector<RelationInstance> relations;
};

struct DatasetHeader {
  int64_t version = 1;
  int64_t d_v = 0;
  int64_t num_object_classes = 0;
  int64_t num_predicate_classes = 0;  // vocab size including class 0

  int64_t positive_classes() const { return num_predicate_classes - 1; }
};

struct Dataset {
  DatasetHeader header;
  std::vector<ImageRecord> images;
};

// JSON Lines: header on line 1, one image per following line. Loading
// validates every record invariant and reports offending line numbers.
Dataset load_dataset(const std::string& path);
void save_dataset(const Dataset& ds, const std::string& path);

// Checks one record against the header; throws DataError naming `where`.
void validate_record(const ImageRecord& rec, const DatasetHeader& header,
                     const std::string& where);

// Per-predicate-class counts over positive relation instances; counts[0]
// stays zero by construction.
struct FrequencyTable {
  std::vector<int64_t> counts;  // size num_predicate_classes

  int64_t total() const;
  int64_t num_classes() const { return static_cast<int64_t>(counts.size()); }
};

FrequencyTable compute_frequency_table(const Dataset& ds);

// Head/body/tail predicate class blocks, descending by frequency.
struct PredicatePartition {
  std::vector<int64_t> head, body, tail;

  // 0 head, 1 body, 2 tail, -1 unknown class.
  int block_of(int64_t cls) const;
  int64_t num_positive_classes() const {
    return static_cast<int64_t>(head.size() + body.size() + tail.size());
  }
};

// Sorts positive classes by count descending (ties: smaller index first) and
// cuts the sequence at the given cardinalities.
PredicatePartition partition_predicates(const FrequencyTable& freq, int64_t h,
                                        int64_t b, int64_t t);

enum class SubsetMode { nested, disjoint, md_full_disjoint_aux };

SubsetMode subset_mode_from_string(const std::string& s);
std::string to_string(SubsetMode m);

// Per-decoder training class subsets plus O(1) membership masks indexed by
// class id (size num_predicate_classes).
struct SubsetAssignment {
  SubsetMode mode = SubsetMode::nested;
  std::vector<int64_t> md, ad1, ad2;
  std::vector<char> in_md, in_ad1, in_ad2;
};

SubsetAssignment assign_subsets(const PredicatePartition& p, SubsetMode mode,
                                int64_t num_predicate_classes);

}  // namespace epd
