#pragma once

#include <filesystem>
#include <vector>

#include "cfaug/bias.hpp"
#include "cfaug/cgan.hpp"
#include "cfaug/data.hpp"

namespace cfaug {

enum class LabelSource { Observed, Generated };

struct CorrectedRow {
  Row row;
  LabelSource source = LabelSource::Observed;
};

// Union of the observed rows and the generated-label rows: every training
// row exactly once, each with one label. The observed/generated counts are
// the empirical interaction weights of the corrected label mixture.
class CorrectedDataset {
 public:
  CorrectedDataset() = default;
  CorrectedDataset(std::vector<CorrectedRow> rows, TaskSpec task, FeatureSchema schema);

  std::size_t size() const { return rows_.size(); }
  const std::vector<CorrectedRow>& rows() const { return rows_; }
  const TaskSpec& task() const { return task_; }
  const FeatureSchema& schema() const { return schema_; }
  std::size_t observed_count() const { return observed_count_; }
  std::size_t generated_count() const { return rows_.size() - observed_count_; }

  // Plain dataset view (drops provenance) for training.
  Dataset as_dataset() const;

 private:
  std::vector<CorrectedRow> rows_;
  TaskSpec task_;
  FeatureSchema schema_;
  std::size_t observed_count_ = 0;
};

// Fills every masked label from cf and keeps observed labels untouched.
// cf's id domain must equal the masked-row id set exactly; the vault is
// never consulted.
CorrectedDataset augment(const BiasedTrainSet& b, const CfLabels& cf);

void save_corrected(const CorrectedDataset& c, const std::filesystem::path& path);
CorrectedDataset load_corrected(const std::filesystem::path& path, const TaskSpec& task);

}  // namespace cfaug
