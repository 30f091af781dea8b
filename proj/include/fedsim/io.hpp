#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "fedsim/harness.hpp"
#include "fedsim/model.hpp"
#include "fedsim/partition.hpp"

namespace fedsim {

// Shortest-round-trip-safe formatting: 17 significant digits, so written
// doubles parse back to the identical bit pattern.
std::string fmt17(double v);

// svmlight format: "label idx:val idx:val ..." with 1-based, strictly
// increasing indices; '#' starts a comment; blank lines are skipped.
// Internally indices are 0-based. Zero-valued entries are dropped on read.
// The loss kind is Logistic when every label is +/-1, Quadratic otherwise.
// dim_override = 0 sizes the feature space by the largest index seen.
// Throws ParseError with a 1-based line number on malformed input.
Dataset parse_svmlight(std::istream& in, std::uint32_t dim_override = 0);
Dataset parse_svmlight_file(const std::string& path, std::uint32_t dim_override = 0);
void write_svmlight(const Dataset& data, std::ostream& out);

// Trace serialization. CSV: header "round,objective,gap,test_error", one row
// per record, every double in 17-significant-digit form (missing values are
// "nan"). JSONL: one object per line with the same keys; missing values are
// null.
enum class TraceFormat { Csv, Jsonl };
void write_trace_csv(const Trace& trace, std::ostream& out);
void write_trace_jsonl(const Trace& trace, std::ostream& out);
void write_trace(const Trace& trace, TraceFormat format, std::ostream& out);

// Merged multi-run trace with a leading algorithm column.
void write_compare_csv(const std::vector<std::pair<std::string, Trace>>& runs, std::ostream& out);

// One line per node of space-separated 0-based example indices.
Partition read_partition(std::istream& in, std::uint32_t n);
void write_partition(const Partition& part, std::ostream& out);

// One group label per line, aligned with example order.
std::vector<std::uint32_t> read_groups(std::istream& in);
void write_groups(const std::vector<std::uint32_t>& groups, std::ostream& out);

// Flat key=value file ('#' comments, blank lines allowed) describing a
// synthetic instance. Keys: n, d, groups, support_size, overlap,
// nnz_per_point, label_model (ridge|logistic), noise, seed, size_min,
// size_max, test_fraction. Unknown keys are rejected.
SyntheticSpec read_synthetic_spec(std::istream& in);
SyntheticSpec read_synthetic_spec_file(const std::string& path);

}  // namespace fedsim
