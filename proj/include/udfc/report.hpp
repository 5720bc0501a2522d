#pragma once

#include <filesystem>
#include <string>

#include "udfc/harness.hpp"
#include "udfc/pipeline.hpp"

namespace udfc {

/// report.json body. Wall-clock timings are left out so identical inputs give
/// identical bytes; they go to timings.json instead.
std::string report_json(const Report& report);
std::string timings_json(const Report& report);

/// One row per conv block, plus a "head" row when the network has one:
/// layer,pruned_count,l_p,l_q,l_re,s_hat_norm,wbits,size_bytes,flops
std::string report_csv(const Report& report);

std::string eval_json(const EvalResult& result);

/// Writes report.json, report.csv and timings.json into `dir`.
void write_report_files(const Report& report, const std::filesystem::path& dir);

/// Adds `result` to the "evaluations" array of an existing report.json.
void append_eval_to_report(const std::filesystem::path& report_path, const EvalResult& result);

}  // namespace udfc
