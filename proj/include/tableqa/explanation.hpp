#pragma once

#include <string>

#include "tableqa/codegen.hpp"
#include "tableqa/model_gateway.hpp"
#include "tableqa/understanding.hpp"

namespace tableqa {

struct Explanation {
  std::string text;
  int source_attempt = 0;
};

/// Explains an answer from the code that produced it. The reasoning trace is
/// never shown to the model here.
class ExplanationStage {
 public:
  ExplanationStage(Gateway& gateway, StageModel model) : gateway_(gateway), model_(std::move(model)) {}

  static std::string prompt(const CodeArtifact& code, const std::string& answer, const std::string& question);

  Explanation explain(const CodeArtifact& code, const std::string& answer, const std::string& question) const;

 private:
  Gateway& gateway_;
  StageModel model_;
};

}  // namespace tableqa
