#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mixem/bench.hpp"
#include "mixem/optimize.hpp"
#include "mixem/types.hpp"

namespace mixem {

/// Plain-text formats, all line-oriented and written with maximum
/// float precision so that write/read round-trips bit-exactly and
/// repeated writes are byte-identical. The grammars are documented in
/// the README.

/// One point per line, coordinates whitespace-separated; blank lines
/// and lines starting with '#' are ignored. Every row must have the
/// same width. Errors name the offending line.
Dataset read_dataset(const std::string& path);
void write_dataset(const Dataset& data, const std::string& path, const std::string& comment = "");

GmmParams read_params(const std::string& path);
void write_params(const GmmParams& params, const std::string& path);
GmmParams read_params_stream(std::istream& in);
void write_params_stream(std::ostream& out, const GmmParams& params);

RunRecord read_run_record(const std::string& path);
void write_run_record(const RunRecord& record, const std::string& path);

/// Reads every run-*.txt under `dir` in filename order. Files that do
/// not parse are reported in `errors` (one message naming the file per
/// failure) and skipped.
std::vector<RunRecord> read_run_records_dir(const std::string& dir,
                                            std::vector<std::string>* errors = nullptr);

BenchConfig read_bench_config(const std::string& path);
void write_bench_config(const BenchConfig& config, const std::string& path);

}  // namespace mixem
