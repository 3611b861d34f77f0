#include "tableqa/explanation.hpp"

#include "tableqa/text.hpp"

namespace tableqa {

std::string ExplanationStage::prompt(const CodeArtifact& code, const std::string& answer, const std::string& question) {
  return render(builtin_template(TemplateId::explanation),
                {{"code", code.source}, {"answer", answer.empty() ? "(empty string)" : answer}, {"question", question}});
}

Explanation ExplanationStage::explain(const CodeArtifact& code, const std::string& answer,
                                      const std::string& question) const {
  ChatRequest req;
  req.model_id = model_.model_id;
  req.temperature = model_.temperature;
  req.max_output_tokens = model_.max_output_tokens;
  req.tag = std::string(to_string(TemplateId::explanation));
  req.messages.push_back({Role::user, {prompt(code, answer, question)}});
  auto response = gateway_.complete(req);
  return Explanation{std::string(trim(response.text)), code.attempt};
}

}  // namespace tableqa
