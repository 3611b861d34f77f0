#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tableqa/errors.hpp"
#include "tableqa/model_gateway.hpp"
#include "tableqa/table_model.hpp"

namespace tableqa {

/// Model id and sampling settings for one pipeline stage.
struct StageModel {
  std::string model_id;
  double temperature = 0.0;
  int max_output_tokens = 2048;
};

/// Reads an image file and detects PNG/JPEG from its magic bytes.
ImageRef load_image(const std::filesystem::path& path);

struct ExtractionPlan {
  std::vector<std::string> steps;
  std::string raw_response;
};

/// Numbered or bulleted lines become steps (unmarked lines continue the
/// previous step); text without any list marker becomes a single step.
ExtractionPlan parse_plan(const std::string& response);

struct UnderstandingResult {
  ExtractionPlan plan;
  std::string csv_text;  // model output after fence stripping
  TableDocument table;
  int attempts = 1;
  std::vector<std::string> raw_responses;
  std::vector<std::string> parse_errors;  // from failed attempts
};

class ExtractionFailed : public Error {
 public:
  ExtractionFailed(std::vector<std::string> parse_errors, std::vector<std::string> raw_responses);
  const std::vector<std::string>& parse_errors() const noexcept { return parse_errors_; }
  const std::vector<std::string>& raw_responses() const noexcept { return raw_responses_; }

 private:
  std::vector<std::string> parse_errors_;
  std::vector<std::string> raw_responses_;
};

/// Question-independent conversion of a table image into a TableDocument,
/// in two model calls: a flattening plan, then CSV extraction following it.
class TableUnderstanding {
 public:
  TableUnderstanding(Gateway& gateway, StageModel model, int max_tries = 2);

  ExtractionPlan plan_extraction(const ImageRef& image) const;
  UnderstandingResult extract_table(const ImageRef& image, const ExtractionPlan& plan) const;

 private:
  Gateway& gateway_;
  StageModel model_;
  int max_tries_;
};

}  // namespace tableqa
