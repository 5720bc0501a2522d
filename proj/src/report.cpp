#include "udfc/report.hpp"

#include <cstdio>

#include "json.hpp"
#include "udfc/error.hpp"
#include "udfc/model_io.hpp"

namespace udfc {

using json = nlohmann::ordered_json;

namespace {

json config_json(const CompressionConfig& cfg) {
  json j;
  j["prune_ratio"] = cfg.prune_ratio;
  json overrides = json::object();
  for (const auto& [block, r] : cfg.ratio_overrides) overrides[std::to_string(block)] = r;
  j["ratio_overrides"] = overrides;
  j["criterion"] = to_string(cfg.criterion);
  j["wbits"] = cfg.wbits;
  j["alpha1"] = cfg.alpha1;
  j["alpha2"] = cfg.alpha2;
  j["skip_layers"] = cfg.skip_layers;
  j["ridge"] = cfg.ridge ? json(*cfg.ridge) : json("relative:1e-8*trace/|kept|");
  j["seed"] = cfg.seed;
  return j;
}

json optional_array(const std::vector<std::optional<double>>& v) {
  json a = json::array();
  for (const auto& x : v) a.push_back(x ? json(*x) : json(nullptr));
  return a;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string report_json(const Report& report) {
  json j;
  j["format"] = "udfc-report-1";
  j["compensation"] = to_string(report.compensation);
  j["config"] = config_json(report.config);
  j["flops_unit"] = "MAC";
  j["size_unit"] = "bytes";
  j["size_before"] = report.size_before;
  j["size_after"] = report.size_after;
  j["flops_before"] = report.flops_before;
  j["flops_after"] = report.flops_after;
  double l_p = 0.0, l_q = 0.0;
  json layers = json::array();
  for (const LayerReport& l : report.layers) {
    json r;
    r["layer"] = l.block;
    r["skipped"] = l.skipped;
    r["pruned"] = l.decision.pruned;
    r["kept_count"] = l.decision.kept.size();
    r["pruned_count"] = l.decision.pruned.size();
    r["l_p"] = l.l_p;
    r["l_q"] = l.l_q;
    r["l_re"] = l.l_re;
    r["s_hat_norm"] = l.s_hat_norm();
    r["s_hat"] = l.s_hat;
    r["s_tilde"] = l.s_tilde;
    r["ridge"] = l.ridge;
    r["dead_channels"] = l.dead_channels;
    r["singular_fallbacks"] = l.singular_fallbacks;
    r["degenerate_scales"] = l.degenerate_scales;
    r["wbits"] = l.wbits;
    r["size_bytes"] = l.size_bytes;
    r["flops"] = l.macs;
    layers.push_back(std::move(r));
    l_p += l.l_p;
    l_q += l.l_q;
  }
  j["layers"] = std::move(layers);
  if (report.head) j["head"] = json{{"wbits", report.head->wbits}, {"size_bytes", report.head->size_bytes},
                                    {"flops", report.head->macs}};
  j["totals"] = json{{"l_p", l_p}, {"l_q", l_q}, {"l_re", l_p + l_q}};
  j["warnings"] = report.warnings;
  return j.dump(2) + "\n";
}

std::string timings_json(const Report& report) {
  json j;
  j["total_seconds"] = report.seconds;
  json layers = json::array();
  for (const LayerReport& l : report.layers) layers.push_back(json{{"layer", l.block}, {"seconds", l.seconds}});
  j["layers"] = std::move(layers);
  return j.dump(2) + "\n";
}

std::string report_csv(const Report& report) {
  std::string out = "layer,pruned_count,l_p,l_q,l_re,s_hat_norm,wbits,size_bytes,flops\n";
  for (const LayerReport& l : report.layers) {
    out += std::to_string(l.block) + "," + std::to_string(l.decision.pruned.size()) + "," + num(l.l_p) + "," +
           num(l.l_q) + "," + num(l.l_re) + "," + num(l.s_hat_norm()) + "," + std::to_string(l.wbits) + "," +
           num(l.size_bytes) + "," + std::to_string(l.macs) + "\n";
  }
  if (report.head)
    out += "head,0,0,0,0,0," + std::to_string(report.head->wbits) + "," + num(report.head->size_bytes) + "," +
           std::to_string(report.head->macs) + "\n";
  return out;
}

namespace {

json eval_object(const EvalResult& r) {
  json j;
  j["top1"] = r.top1 ? json(*r.top1) : json(nullptr);
  j["feature_mse"] = optional_array(r.feature_mse);
  j["post_act_mse"] = optional_array(r.post_act_mse);
  j["trials"] = r.trials;
  j["seed"] = r.seed;
  return j;
}

}  // namespace

std::string eval_json(const EvalResult& result) { return eval_object(result).dump(2) + "\n"; }

void write_report_files(const Report& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + dir.string());
  write_text_file(dir / "report.json", report_json(report));
  write_text_file(dir / "report.csv", report_csv(report));
  write_text_file(dir / "timings.json", timings_json(report));
}

void append_eval_to_report(const std::filesystem::path& report_path, const EvalResult& result) {
  json j;
  try {
    j = json::parse(read_text_file(report_path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Validation, report_path.string() + ": " + e.what());
  }
  if (!j.contains("evaluations")) j["evaluations"] = json::array();
  j["evaluations"].push_back(eval_object(result));
  write_text_file(report_path, j.dump(2) + "\n");
}

}  // namespace udfc
