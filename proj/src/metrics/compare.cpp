#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "seqagree/errors.hpp"
#include "seqagree/metrics/metrics.hpp"

namespace seqagree::metrics {

namespace {

constexpr std::pair<Metric, std::string_view> kMetricNames[] = {
    {Metric::kTeacherForcedMse, "teacher_forced_mse"},
    {Metric::kFreeRunMse, "free_run_mse"},
    {Metric::kIntelligibleRate, "intelligible_rate"},
    {Metric::kAlignmentAgreement, "alignment_agreement"},
    {Metric::kOmega, "omega"},
    {Metric::kAgreementTerm, "agreement_term"},
    {Metric::kExposureBiasGap, "exposure_bias_gap"},
};

double require(const std::optional<double>& v, Metric m) {
  if (!v) throw std::invalid_argument("record has no " + std::string(metric_name(m)));
  return *v;
}

}  // namespace

std::string_view metric_name(Metric m) {
  for (const auto& [metric, name] : kMetricNames) {
    if (metric == m) return name;
  }
  return "unknown";
}

Metric parse_metric(std::string_view name) {
  for (const auto& [metric, n] : kMetricNames) {
    if (n == name) return metric;
  }
  throw std::invalid_argument("unknown metric '" + std::string(name) + "'");
}

bool higher_is_better(Metric m) { return m == Metric::kIntelligibleRate; }

double metric_value(const MetricsRecord& r, Metric m) {
  switch (m) {
    case Metric::kTeacherForcedMse: return r.teacher_forced_mse;
    case Metric::kFreeRunMse: return r.free_run_mse;
    case Metric::kIntelligibleRate: return r.intelligible_rate;
    case Metric::kAlignmentAgreement: return require(r.alignment_agreement, m);
    case Metric::kOmega: return require(r.omega, m);
    case Metric::kAgreementTerm: return require(r.agreement_term, m);
    case Metric::kExposureBiasGap: return exposure_bias_gap(r);
  }
  throw std::invalid_argument("unknown metric");
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

RunComparison compare_runs(const std::vector<MetricsRecord>& a, const std::vector<MetricsRecord>& b, Metric metric) {
  std::map<std::uint64_t, const MetricsRecord*> by_seed_a, by_seed_b;
  for (const auto& r : a) by_seed_a[r.seed] = &r;
  for (const auto& r : b) by_seed_b[r.seed] = &r;
  if (by_seed_a.empty()) throw std::invalid_argument("compare_runs: no records");
  std::set<std::uint64_t> seeds_a, seeds_b;
  for (const auto& [s, r] : by_seed_a) seeds_a.insert(s);
  for (const auto& [s, r] : by_seed_b) seeds_b.insert(s);
  if (seeds_a != seeds_b) throw std::invalid_argument("compare_runs: seed sets differ");

  RunComparison out;
  out.metric = metric;
  std::vector<double> va, vb, vd;
  for (const auto& [seed, ra] : by_seed_a) {
    SeedDelta d;
    d.seed = seed;
    d.a = metric_value(*ra, metric);
    d.b = metric_value(*by_seed_b.at(seed), metric);
    d.delta = d.a - d.b;
    if (d.delta == 0.0) {
      ++out.ties;
    } else if ((d.delta > 0.0) == higher_is_better(metric)) {
      ++out.a_better;
    } else {
      ++out.b_better;
    }
    va.push_back(d.a);
    vb.push_back(d.b);
    vd.push_back(d.delta);
    out.per_seed.push_back(d);
  }
  out.median_a = median(va);
  out.median_b = median(vb);
  out.median_delta = median(vd);
  return out;
}

std::string to_json_line(const MetricsRecord& r) {
  nlohmann::ordered_json j;
  j["split"] = r.split;
  j["model"] = r.model_tag;
  j["seed"] = r.seed;
  j["step"] = r.step;
  j["case_count"] = r.case_count;
  j["teacher_forced_mse"] = r.teacher_forced_mse;
  j["free_run_mse"] = r.free_run_mse;
  j["intelligible_rate"] = r.intelligible_rate;
  j["alignment_agreement"] = r.alignment_agreement ? nlohmann::ordered_json(*r.alignment_agreement) : nullptr;
  j["omega"] = r.omega ? nlohmann::ordered_json(*r.omega) : nullptr;
  j["agreement_term"] = r.agreement_term ? nlohmann::ordered_json(*r.agreement_term) : nullptr;
  j["per_position_mse"] = r.per_position_mse;
  return j.dump();
}

MetricsRecord from_json_line(std::string_view line) {
  try {
    const auto j = nlohmann::json::parse(line);
    auto optional = [&](const char* key) -> std::optional<double> {
      if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
      return j.at(key).get<double>();
    };
    MetricsRecord r;
    r.split = j.at("split").get<std::string>();
    r.model_tag = j.at("model").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.step = j.at("step").get<std::uint64_t>();
    r.case_count = j.at("case_count").get<std::size_t>();
    r.teacher_forced_mse = j.at("teacher_forced_mse").get<double>();
    r.free_run_mse = j.at("free_run_mse").get<double>();
    r.intelligible_rate = j.at("intelligible_rate").get<double>();
    r.alignment_agreement = optional("alignment_agreement");
    r.omega = optional("omega");
    r.agreement_term = optional("agreement_term");
    r.per_position_mse = j.at("per_position_mse").get<std::vector<double>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("metrics record: ") + e.what());
  }
}

void write_records(std::ostream& out, const std::vector<MetricsRecord>& records) {
  for (const auto& r : records) out << to_json_line(r) << '\n';
}

std::vector<MetricsRecord> read_records(std::istream& in) {
  std::vector<MetricsRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(from_json_line(line));
  }
  return out;
}

}  // namespace seqagree::metrics
