#include "tableqa/understanding.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <regex>

#include "tableqa/text.hpp"

namespace tableqa {

ImageRef load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read image " + path.string());
  ImageRef image;
  image.bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  static constexpr std::uint8_t kPng[] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  const auto& b = image.bytes;
  if (b.size() >= 8 && std::equal(std::begin(kPng), std::end(kPng), b.begin())) {
    image.media_type = "image/png";
  } else if (b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF) {
    image.media_type = "image/jpeg";
  } else {
    throw Error("image " + path.string() + " is neither PNG nor JPEG");
  }
  return image;
}

ExtractionPlan parse_plan(const std::string& response) {
  static const std::regex kItem(R"(^\s*(?:\d+[.)]|[-*]|•)\s+(.*)$)");
  ExtractionPlan plan;
  plan.raw_response = response;
  if (trim(response).empty()) throw EmptyPlan("extraction plan response is blank");

  bool any_marker = false;
  for (const auto& line : split_lines(response)) {
    std::smatch m;
    if (std::regex_match(line, m, kItem)) {
      any_marker = true;
      std::string step(trim(m[1].str()));
      if (!step.empty()) plan.steps.push_back(std::move(step));
    } else if (any_marker && !trim(line).empty() && !plan.steps.empty()) {
      plan.steps.back() += " " + std::string(trim(line));
    }
  }
  if (!any_marker || plan.steps.empty()) plan.steps = {std::string(trim(response))};
  return plan;
}

ExtractionFailed::ExtractionFailed(std::vector<std::string> parse_errors, std::vector<std::string> raw_responses)
    : Error("table extraction failed after " + std::to_string(raw_responses.size()) +
            " attempt(s): " + (parse_errors.empty() ? std::string("unknown") : parse_errors.back())),
      parse_errors_(std::move(parse_errors)),
      raw_responses_(std::move(raw_responses)) {}

TableUnderstanding::TableUnderstanding(Gateway& gateway, StageModel model, int max_tries)
    : gateway_(gateway), model_(std::move(model)), max_tries_(std::clamp(max_tries, 1, 2)) {}

ExtractionPlan TableUnderstanding::plan_extraction(const ImageRef& image) const {
  if (image.bytes.empty()) throw Error("image is empty");
  ChatRequest req;
  req.model_id = model_.model_id;
  req.temperature = model_.temperature;
  req.max_output_tokens = model_.max_output_tokens;
  req.tag = std::string(to_string(TemplateId::extraction_plan));
  req.messages.push_back({Role::user, {image, render(builtin_template(TemplateId::extraction_plan), {})}});
  return parse_plan(gateway_.complete(req).text);
}

namespace {

std::string numbered(const std::vector<std::string>& steps) {
  std::string out;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    out += std::to_string(i + 1) + ". " + steps[i] + "\n";
  }
  return out;
}

}  // namespace

UnderstandingResult TableUnderstanding::extract_table(const ImageRef& image, const ExtractionPlan& plan) const {
  ChatRequest req;
  req.model_id = model_.model_id;
  req.temperature = model_.temperature;
  req.max_output_tokens = model_.max_output_tokens;
  req.tag = std::string(to_string(TemplateId::extract_csv));
  req.messages.push_back(
      {Role::user, {image, render(builtin_template(TemplateId::extract_csv), {{"plan", numbered(plan.steps)}})}});

  std::vector<std::string> errors;
  std::vector<std::string> responses;
  for (int attempt = 1; attempt <= max_tries_; ++attempt) {
    std::string raw = gateway_.complete(req).text;
    responses.push_back(raw);
    std::string csv = strip_code_fences(raw);
    try {
      UnderstandingResult result;
      result.table = parse_csv(csv);
      result.plan = plan;
      result.csv_text = std::move(csv);
      result.attempts = attempt;
      result.raw_responses = responses;
      result.parse_errors = errors;
      return result;
    } catch (const CsvError& e) {
      errors.emplace_back(e.what());
      req.messages.push_back({Role::user,
                              {"The CSV you returned could not be parsed: " + std::string(e.what()) +
                               "\n\nYour previous output was:\n" + csv +
                               "\n\nReturn the corrected CSV only, inside a single ```csv code block."}});
    }
  }
  throw ExtractionFailed(std::move(errors), std::move(responses));
}

}  // namespace tableqa
