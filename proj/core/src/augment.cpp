#include "cfaug/augment.hpp"

#include <fstream>
#include <unordered_set>

#include "cfaug/detail/text.hpp"

namespace cfaug {

CorrectedDataset::CorrectedDataset(std::vector<CorrectedRow> rows, TaskSpec task,
                                   FeatureSchema schema)
    : rows_(std::move(rows)), task_(task), schema_(schema) {
  task_.validate();
  schema_.validate();
  std::unordered_set<std::int64_t> seen;
  seen.reserve(rows_.size());
  for (const CorrectedRow& cr : rows_) {
    if (cr.row.x.size() != schema_.d_tab || cr.row.w.size() != schema_.d_rich) {
      throw Error("CorrectedDataset: row id " + std::to_string(cr.row.id) +
                  " does not match the feature schema");
    }
    validate_label(cr.row.y, task_, cr.row.id);
    if (!seen.insert(cr.row.id).second) {
      throw Error("CorrectedDataset: duplicate row id " + std::to_string(cr.row.id));
    }
    if (cr.source == LabelSource::Observed) ++observed_count_;
  }
}

Dataset CorrectedDataset::as_dataset() const {
  std::vector<Row> rows;
  rows.reserve(rows_.size());
  for (const CorrectedRow& cr : rows_) rows.push_back(cr.row);
  return Dataset(std::move(rows), task_, schema_);
}

CorrectedDataset augment(const BiasedTrainSet& b, const CfLabels& cf) {
  std::unordered_set<std::int64_t> masked;
  for (const BiasedRow& br : b.rows()) {
    if (!br.observed) masked.insert(br.row.id);
  }
  for (const auto& [id, label] : cf.labels) {
    if (masked.count(id) == 0) {
      throw Error("augment: generated label for id " + std::to_string(id) +
                  " which is not a masked row of the training set");
    }
  }
  if (cf.labels.size() != masked.size()) {
    for (const std::int64_t id : masked) {
      if (cf.labels.count(id) == 0) {
        throw Error("augment: no generated label for masked row id " +
                    std::to_string(id));
      }
    }
  }

  std::vector<CorrectedRow> rows;
  rows.reserve(b.size());
  for (const BiasedRow& br : b.rows()) {
    CorrectedRow cr;
    cr.row = br.row;
    if (br.observed) {
      cr.source = LabelSource::Observed;
    } else {
      cr.source = LabelSource::Generated;
      cr.row.y = cf.labels.at(cr.row.id);
    }
    rows.push_back(std::move(cr));
  }
  return CorrectedDataset(std::move(rows), b.task(), b.schema());
}

void save_corrected(const CorrectedDataset& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("save_corrected: cannot open " + path.string() + " for writing");
  out << "id";
  for (int j = 0; j < c.schema().d_tab; ++j) out << ",x" << j;
  for (int j = 0; j < c.schema().d_rich; ++j) out << ",w" << j;
  out << ",y,source\n";
  for (const CorrectedRow& cr : c.rows()) {
    out << cr.row.id;
    for (int j = 0; j < cr.row.x.size(); ++j) out << ',' << detail::format_double(cr.row.x(j));
    for (int j = 0; j < cr.row.w.size(); ++j) out << ',' << detail::format_double(cr.row.w(j));
    out << ',' << detail::format_double(cr.row.y) << ','
        << (cr.source == LabelSource::Observed ? "observed" : "generated") << '\n';
  }
  if (!out) throw Error("save_corrected: write to " + path.string() + " failed");
}

CorrectedDataset load_corrected(const std::filesystem::path& path, const TaskSpec& task) {
  std::ifstream in(path);
  if (!in) throw Error("load_corrected: cannot open " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw Error("load_corrected: " + path.string() + " is empty");
  detail::chomp(header);
  const auto names = detail::split_line(header, ',');
  require(names.size() >= 3 && names.front() == "id" && names[names.size() - 2] == "y" &&
              names.back() == "source",
          "load_corrected: expected columns id,<features>,y,source");
  int d_tab = 0, d_rich = 0;
  for (std::size_t j = 1; j + 2 < names.size(); ++j) {
    if (names[j].starts_with("x")) ++d_tab;
    else if (names[j].starts_with("w")) ++d_rich;
    else throw Error("load_corrected: unexpected feature column '" + names[j] + "'");
  }

  std::vector<CorrectedRow> rows;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    detail::chomp(line);
    if (line.empty()) continue;
    const auto fields = detail::split_line(line, ',');
    if (fields.size() != names.size()) {
      throw Error("load_corrected: " + path.string() + ":" + std::to_string(line_no) +
                  " has wrong field count");
    }
    const std::string context = path.string() + ":" + std::to_string(line_no);
    CorrectedRow cr;
    cr.row.id = detail::parse_int64(fields[0], context);
    cr.row.x.resize(d_tab);
    for (int j = 0; j < d_tab; ++j) {
      cr.row.x(j) = detail::parse_double(fields[static_cast<std::size_t>(1 + j)], context);
    }
    cr.row.w.resize(d_rich);
    for (int j = 0; j < d_rich; ++j) {
      cr.row.w(j) = detail::parse_double(fields[static_cast<std::size_t>(1 + d_tab + j)], context);
    }
    cr.row.y = detail::parse_double(fields[fields.size() - 2], context);
    const std::string& source = fields.back();
    if (source == "observed") cr.source = LabelSource::Observed;
    else if (source == "generated") cr.source = LabelSource::Generated;
    else throw Error(context + ": unknown label source '" + source + "'");
    rows.push_back(std::move(cr));
  }
  return CorrectedDataset(std::move(rows), task, FeatureSchema{d_tab, d_rich});
}

}  // namespace cfaug
