#include "cfaug/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cfaug/detail/text.hpp"

namespace cfaug {

BinSpec BinSpec::classes(int num_classes) {
  require(num_classes >= 2, "BinSpec: need at least two classes");
  BinSpec spec;
  spec.discrete = true;
  spec.bins = num_classes;
  spec.lo = 0.0;
  spec.hi = static_cast<double>(num_classes - 1);
  return spec;
}

BinSpec BinSpec::continuous(double lo, double hi, int bins) {
  require(bins >= 1, "BinSpec: need at least one bin");
  require(std::isfinite(lo) && std::isfinite(hi) && lo <= hi,
          "BinSpec: range must be finite with lo <= hi");
  BinSpec spec;
  spec.discrete = false;
  spec.bins = bins;
  spec.lo = lo;
  spec.hi = hi;
  return spec;
}

int BinSpec::index_of(double value) const {
  if (discrete) {
    require(std::isfinite(value) && value == std::floor(value) && value >= 0.0 &&
                value < static_cast<double>(bins),
            "BinSpec: label " + detail::format_double(value) +
                " is not a class index below " + std::to_string(bins));
    return static_cast<int>(value);
  }
  require(std::isfinite(value), "BinSpec: value must be finite");
  if (hi <= lo) return 0;
  const double t = (value - lo) / (hi - lo);
  const int idx = static_cast<int>(std::floor(t * static_cast<double>(bins)));
  return std::clamp(idx, 0, bins - 1);
}

double BinSpec::bin_label(int index) const {
  require(index >= 0 && index < bins, "BinSpec: bin index out of range");
  if (discrete) return static_cast<double>(index);
  return lo + (hi - lo) * static_cast<double>(index) / static_cast<double>(bins);
}

std::vector<double> Histogram::probabilities() const {
  std::vector<double> probs(counts.size(), 0.0);
  if (total <= 0) return probs;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    probs[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
  }
  return probs;
}

Histogram make_histogram(std::span<const double> values, const BinSpec& spec) {
  Histogram hist;
  hist.counts.assign(static_cast<std::size_t>(spec.bins), 0);
  for (const double v : values) {
    hist.counts[static_cast<std::size_t>(spec.index_of(v))] += 1;
  }
  hist.total = static_cast<std::int64_t>(values.size());
  return hist;
}

double total_variation(const Histogram& a, const Histogram& b) {
  require(a.counts.size() == b.counts.size(),
          "total_variation: histograms use different bins");
  const std::vector<double> pa = a.probabilities();
  const std::vector<double> pb = b.probabilities();
  double l1 = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) l1 += std::abs(pa[i] - pb[i]);
  return 0.5 * l1;
}

double ks_statistic(std::span<const double> a, std::span<const double> b) {
  require(!a.empty() && !b.empty(), "ks_statistic: empty sample");
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());
  double worst = 0.0;
  std::size_t ia = 0, ib = 0;
  while (ia < sa.size() && ib < sb.size()) {
    const double x = std::min(sa[ia], sb[ib]);
    while (ia < sa.size() && sa[ia] <= x) ++ia;
    while (ib < sb.size() && sb[ib] <= x) ++ib;
    worst = std::max(worst, std::abs(static_cast<double>(ia) / na -
                                     static_cast<double>(ib) / nb));
  }
  return worst;
}

double entropy_nats(const std::vector<double>& probabilities) {
  double h = 0.0;
  for (const double p : probabilities) {
    require(p >= 0.0 && p <= 1.0 + 1e-12, "entropy_nats: probabilities must lie in [0,1]");
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

const SourceHistogram& DistReport::source(const std::string& name) const {
  for (const SourceHistogram& s : histograms) {
    if (s.source == name) return s;
  }
  throw Error("DistReport: no source named " + name);
}

std::string DistReport::plot_data() const {
  std::ostringstream out;
  out << "bin,source,count\n";
  for (const SourceHistogram& s : histograms) {
    for (std::size_t i = 0; i < s.hist.counts.size(); ++i) {
      out << detail::format_double(bin_spec.bin_label(static_cast<int>(i))) << ','
          << s.source << ',' << s.hist.counts[i] << '\n';
    }
  }
  return out.str();
}

std::string DistReport::to_text() const {
  std::ostringstream out;
  for (const SourceHistogram& s : histograms) {
    out << "entropy_" << s.source << " = " << detail::format_double(s.entropy) << '\n';
    out << "count_" << s.source << " = " << s.hist.total << '\n';
  }
  if (tv_distance) out << "tv_distance = " << detail::format_double(*tv_distance) << '\n';
  if (ks) out << "ks_statistic = " << detail::format_double(*ks) << '\n';
  if (agreement) out << "agreement = " << detail::format_double(*agreement) << '\n';
  out << plot_data();
  return out.str();
}

namespace {

BinSpec spec_for(const TaskSpec& task, std::span<const double> pooled) {
  if (task.is_classification()) return BinSpec::classes(task.num_classes);
  double lo = pooled.empty() ? 0.0 : pooled[0];
  double hi = lo;
  for (const double v : pooled) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return BinSpec::continuous(lo, hi);
}

SourceHistogram make_source(std::string name, std::span<const double> values,
                            const BinSpec& spec) {
  SourceHistogram s;
  s.source = std::move(name);
  s.hist = make_histogram(values, spec);
  s.entropy = entropy_nats(s.hist.probabilities());
  return s;
}

}  // namespace

DistReport counterfactual_report(const CfLabels& cf, const OracleVault& vault,
                                 const TaskSpec& task) {
  task.validate();
  require(cf.size() == vault.size(),
          "counterfactual_report: generated ids and vault ids differ");
  std::vector<double> generated, truth;
  generated.reserve(cf.size());
  truth.reserve(cf.size());
  for (const auto& [id, label] : cf.labels) {
    require(vault.contains(id), "counterfactual_report: id " + std::to_string(id) +
                                    " has no vault label");
    generated.push_back(label);
    truth.push_back(vault.label(id));
  }
  require(!generated.empty(), "counterfactual_report: no labels to compare");

  std::vector<double> pooled = generated;
  pooled.insert(pooled.end(), truth.begin(), truth.end());
  DistReport report;
  report.bin_spec = spec_for(task, pooled);
  report.histograms.push_back(make_source("generated", generated, report.bin_spec));
  report.histograms.push_back(make_source("true-counterfactual", truth, report.bin_spec));

  if (task.is_classification()) {
    report.tv_distance =
        total_variation(report.histograms[0].hist, report.histograms[1].hist);
    std::size_t equal = 0;
    for (std::size_t i = 0; i < generated.size(); ++i) {
      if (generated[i] == truth[i]) ++equal;
    }
    report.agreement = static_cast<double>(equal) / static_cast<double>(generated.size());
  } else {
    report.ks = ks_statistic(generated, truth);
  }
  return report;
}

namespace {

DistReport balance_report(const BiasedTrainSet& b, const CorrectedDataset& c,
                          const TaskSpec& task, const OracleVault* vault) {
  task.validate();
  require(b.size() == c.size(),
          "label_balance_report: corrected set size does not match the biased set");

  std::vector<double> observed;
  observed.reserve(b.observed_count());
  for (const BiasedRow& br : b.rows()) {
    if (br.observed) observed.push_back(br.row.y);
  }
  std::vector<double> corrected;
  corrected.reserve(c.size());
  for (const CorrectedRow& cr : c.rows()) corrected.push_back(cr.row.y);

  std::vector<double> full;
  if (vault != nullptr) {
    full.reserve(b.size());
    for (const BiasedRow& br : b.rows()) {
      full.push_back(br.observed ? br.row.y : vault->label(br.row.id));
    }
  }

  std::vector<double> pooled = observed;
  pooled.insert(pooled.end(), corrected.begin(), corrected.end());
  pooled.insert(pooled.end(), full.begin(), full.end());

  DistReport report;
  report.bin_spec = spec_for(task, pooled);
  report.histograms.push_back(make_source("observed", observed, report.bin_spec));
  report.histograms.push_back(make_source("corrected", corrected, report.bin_spec));
  if (vault != nullptr) {
    report.histograms.push_back(make_source("full", full, report.bin_spec));
  }

  if (task.is_classification()) {
    report.tv_distance =
        total_variation(report.histograms[0].hist, report.histograms[1].hist);
  } else if (!observed.empty() && !corrected.empty()) {
    report.ks = ks_statistic(observed, corrected);
  }
  return report;
}

}  // namespace

DistReport label_balance_report(const BiasedTrainSet& b, const CorrectedDataset& c,
                                const TaskSpec& task) {
  return balance_report(b, c, task, nullptr);
}

DistReport label_balance_report_oracle(const BiasedTrainSet& b, const CorrectedDataset& c,
                                       const TaskSpec& task) {
  return balance_report(b, c, task, &b.oracle_vault());
}

PropensityMeanCheck propensity_mean_check_oracle(const BiasedTrainSet& b,
                                                 const PropensityTable& p) {
  require(b.size() > 0, "propensity_mean_check: empty set");
  const OracleVault& vault = b.oracle_vault();
  double weighted_sum = 0.0, weight_sum = 0.0;
  double restored_sum = 0.0;
  for (const BiasedRow& br : b.rows()) {
    if (br.observed) {
      const double w = p.weight_for(br.rec);
      weighted_sum += w * br.row.y;
      weight_sum += w;
      restored_sum += br.row.y;
    } else {
      restored_sum += vault.label(br.row.id);
    }
  }
  require(weight_sum > 0.0, "propensity_mean_check: no observed labels");
  PropensityMeanCheck check;
  check.weighted_mean = weighted_sum / weight_sum;
  check.restored_mean = restored_sum / static_cast<double>(b.size());
  check.gap = std::abs(check.weighted_mean - check.restored_mean);
  return check;
}

}  // namespace cfaug
