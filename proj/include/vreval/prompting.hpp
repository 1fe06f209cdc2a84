#pragma once

#include <string>
#include <vector>

#include "vreval/domain.hpp"

namespace vreval {

enum class PromptTemplateId {
  DVRL,
  DRL_EXTRACT,
  DRL_APPLY,
  CA_DESCRIBE,
  CA_REASON,
  RULE_APPLY_ABLATION,  // DRL_APPLY with an externally supplied rule
  DVRL_MINIMAL,
  WG_CAPTION_CHOICE,
  WG_IMAGE_CHOICE,
};

std::string to_string(PromptTemplateId id);

// Unrendered template body for an id (placeholders intact).
const std::string& prompt_template_body(PromptTemplateId id);

// SHA-256 of the template body; keys description caches and run manifests.
std::string prompt_template_hash(PromptTemplateId id);

// All render_* functions are pure and byte-deterministic.

// Single-call prompt over m positives, n negatives and one query image.
std::string render_dvrl(int m, int n);

// DVRL stripped of the structured output contract (ends after task item 3).
std::string render_dvrl_minimal(int m, int n);

// Rule-extraction prompt over the context images. n == 0 selects the
// positives-only branch. Throws ParamError when m < 1 or n < 0.
std::string render_drl_extract(int m, int n);

// Rule-application prompt embedding the summary verbatim. Throws EmptyRule.
std::string render_drl_apply(int m, int n, const RuleSummary& summary);

// Parameterless per-image description prompt (the eight-section schema).
std::string render_ca_describe();

// Splices m+n+1 raw description documents (positives, negatives, query) into
// the text-only reasoning prompt. Throws CountMismatch.
std::string render_ca_reason(const std::vector<std::string>& raw_documents, int m, int n);

enum class WinogroundChoiceKind {
  CaptionChoice,  // anchor = description, options = the two captions (Choice_C)
  ImageChoice,    // anchor = caption, options = the two descriptions (Choice_D)
};

// Two-option forced-choice prompt; option order is fixed (0 -> A, 1 -> B) and
// the model is instructed to answer with a single letter. Throws EmptyField.
std::string render_winoground_choice(WinogroundChoiceKind kind, const std::string& anchor,
                                     const std::string& option_a, const std::string& option_b);

}  // namespace vreval
