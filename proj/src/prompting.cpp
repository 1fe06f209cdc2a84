#include "vreval/prompting.hpp"

#include "vreval/errors.hpp"
#include "vreval/util.hpp"

namespace vreval {

namespace {

// Template bodies are kept in a canonical dedented form; the golden files
// under fixtures/prompts/ pin the rendered bytes.

constexpr const char* kDvrlTemplate =
    R"TPL(You are provided with {total} images: the first {m} samples are `cat_2`, the next {n} samples are `cat_1`, and the last image is the `query image`.
Analyze the common characteristics or patterns found in the `cat_2` samples (positive samples: following 1 common rule) that distinctly separate them from the `cat_1` samples (negative samples: it might not follow any possible rule).
Your task is to:

1. Determine the rule or criterion that distinguishes the `cat_2` samples from the `cat_1` ones.
2. Analyse the `query image` (last image).
3. Provide your conclusion for the `query image` if it can be categorized as either `cat_1` or `cat_2` based on the analysis and the rule.

Ensure that the output is clear, well-formatted, and free of unnecessary explanations.
Omit the ``` tags at the beginning and end of the page. The format of your output should be as follows:

- **Analysis**: (Your analysis here)
- **Rule**: (The distinguishing rule here)
- **Query Image**: (Query image details)
- **Conclusion**: (cat_1 or cat_2)
)TPL";

// DVRL without the structured output contract: ends after task item 3.
constexpr const char* kDvrlMinimalTemplate =
    R"TPL(You are provided with {total} images: the first {m} samples are `cat_2`, the next {n} samples are `cat_1`, and the last image is the `query image`.
Analyze the common characteristics or patterns found in the `cat_2` samples (positive samples: following 1 common rule) that distinctly separate them from the `cat_1` samples (negative samples: it might not follow any possible rule).
Your task is to:

1. Determine the rule or criterion that distinguishes the `cat_2` samples from the `cat_1` ones.
2. Analyse the `query image` (last image).
3. Provide your conclusion for the `query image` if it can be categorized as either `cat_1` or `cat_2` based on the analysis and the rule.
)TPL";

constexpr const char* kDrlExtractBothTemplate =
    R"TPL(You are provided with {total} images: the first {m} samples are cat_2, the next {n} samples are cat_1. Analyze the common characteristics or patterns found in the cat_2 samples (positive samples: following 1 common rule) that distinctly separate them from the cat_1 samples (negative samples: it might not follow any possible rule).
Your task is to provide the rules that defines cat_2 samples. At the end, write "summary" of the rule identified in less than 20 words.
Ensure that the output is clear, well-formatted, and free of unnecessary explanations. Omit the ``` tags at the beginning and end of the page.
)TPL";

constexpr const char* kDrlExtractPosOnlyTemplate =
    R"TPL(You are provided with {m} images: {m} samples are cat_2. Analyze the common characteristics or patterns found in the cat_2 samples (positive samples: following 1 common rule) that distinctly separate them from negative samples which might not follow any possible rule.
Your task is to provide the rules that defines cat_2 samples. At the end, write "summary" of the rule identified in less than 20 words.
Ensure that the output is clear, well-formatted, and free of unnecessary explanations. Omit the ``` tags at the beginning and end of the page.
)TPL";

constexpr const char* kDrlApplyTemplate =
    R"TPL(We are working with Bongard dataset where there are {m} image in the cat_2 and {n} images in the cat_1. Summary of the common characteristics or patterns found in the cat_2 samples (positive samples: following 1 common rule) that distinctly separate them from the cat_1 samples (negative samples: it might not follow any possible rule) is as follows:
{summary}.

Your task is to ponder over the rule and provide your conclusion for the `query image` if it can be categorized as either "cat_1" or "cat_2".

Ensure that the output is clear, well-formatted, and free of unnecessary explanations.
Omit the ``` tags at the beginning and end of the page. The format of your output should be as follows:

- **Analysis**: (Your analysis here)
- **Rule**: (The distinguishing rule here)
- **Query Image**: (Query image details)
- **Conclusion**: (cat_1 or cat_2)
)TPL";

constexpr const char* kCaDescribeTemplate =
    R"TPL(Carefully examine the provided image and identify all possible visual elements, organizing them into a detailed hierarchical structure. Start with broad categories and progress to more specific subcategories. This should cover everything visible in the image, ensuring no detail is overlooked. Structure your findings in a JSON format to enable easy comparison and synthesis of data from other images. This will help discern patterns, contexts, and rules valuable for identifying or understanding query images.

Your hierarchy might encompass the following elements:

1. **Scene/Environment**: Description of the overall setting depicted, such as urban, natural, indoor, or outdoor scenes.
2. **Objects**: Define distinct items or entities present in the scene.
- **Living Beings**: Animals, humans, or other biological entities.
    - Species or classification (e.g., dog, bird, human).
    - Characteristics (e.g., color, posture, movement).
- **Inanimate Objects**: Both synthetic and natural elements.
    - Categories (e.g., vehicle, building, trees).
    - Properties (e.g., color, size, material, shape).
3. **Activities**: Observable actions or interactions involving any objects or beings.
- Specific descriptions of actions (e.g., walking, flying).
- Participants involved in these actions.
4. **Contextual Elements**: Environmental conditions and time markers, such as time of day or weather.
- Detailed characteristics (e.g., cloudy, night, winter).
5. **Visual Patterns**: Prominent colors, textures, and patterns that are visually significant.
6. **Emotional Undertones**: Any emotional presence or expressions evident in the image.
7. **Textual Information**: Any visible text within the image, including what it says and its visual style.
8. **Summary**: A concise narrative summarizing the overall content and context of the image.

Ensure that every aspect from the image is represented under these categories. The information should be presented in the following JSON format:

{
"Scene": {
    "Description": "..."
},
"Objects": {
    "Living Beings": [...],
    "Inanimate Objects": [...]
},
"Activities": [...],
"Contextual Elements": {
    "Time of Day": "...",
    "Weather": "..."
},
"Visual Patterns": {
    "Dominant Colors": [...],
    "Textures": [...]
},
"Emotional Undertones": "..."
"Textual Information": "..."
"Summary": "..."
}
Ensure that the JSON output is clear, well-formatted, and free of unnecessary explanations. Omit the ```json tags at the beginning and end of the page.
)TPL";

constexpr const char* kCaReasonTemplate =
    R"TPL(We are working with the Bongard dataset, which contains {m} images in cat_2 (positive samples) and {n} images in cat_1 (negative samples). These categories are defined as follows:
- Cat_2: Positive samples that follow a single common rule.
- Cat_1: Negative samples that may not follow any specific rule.

The image descriptions for the positive samples, negative samples, and the test image are provided in JSON format. Analyze the common patterns or characteristics in the cat_2 samples that distinguish them from cat_1 samples.

Your task is to:
1. Derive the rule that defines the cat_2 samples.
2. Apply this rule to categorize the test image.

Here are the image descriptions:

### Positive Samples (cat_2):
{positives}

### Negative Samples (cat_1):
{negatives}

### Test Image:
{query}

Provide your output in the following format:

- **Analysis**: (Your analysis here)
- **Rule**: (The distinguishing rule here)
- **Test Image**: (Test image details)
- **Conclusion**: (cat_1 or cat_2)
)TPL";

constexpr const char* kWgCaptionChoiceTemplate =
    R"TPL(You are given a detailed description of an image and two candidate captions.

### Image Description:
{anchor}

### Caption A:
{option_a}

### Caption B:
{option_b}

Decide which caption correctly matches the described image. Reply with exactly one letter: A or B.
)TPL";

constexpr const char* kWgImageChoiceTemplate =
    R"TPL(You are given a caption and two candidate image descriptions.

### Caption:
{anchor}

### Description A:
{option_a}

### Description B:
{option_b}

Decide which description matches the caption. Reply with exactly one letter: A or B.
)TPL";

// Single left-to-right pass; substituted values are never rescanned, so
// spliced documents containing brace tokens cannot corrupt the render.
std::string expand(std::string_view tpl,
                   const std::vector<std::pair<std::string_view, std::string>>& slots) {
  std::string out;
  out.reserve(tpl.size());
  size_t i = 0;
  while (i < tpl.size()) {
    bool matched = false;
    if (tpl[i] == '{') {
      for (const auto& [slot, value] : slots) {
        if (tpl.substr(i, slot.size()) == slot) {
          out += value;
          i += slot.size();
          matched = true;
          break;
        }
      }
    }
    if (!matched) out += tpl[i++];
  }
  return out;
}

void check_counts(int m, int n) {
  if (m < 1) throw ParamError("m must be >= 1, got " + std::to_string(m));
  if (n < 0) throw ParamError("n must be >= 0, got " + std::to_string(n));
}

}  // namespace

std::string to_string(PromptTemplateId id) {
  switch (id) {
    case PromptTemplateId::DVRL: return "dvrl";
    case PromptTemplateId::DRL_EXTRACT: return "drl_extract";
    case PromptTemplateId::DRL_APPLY: return "drl_apply";
    case PromptTemplateId::CA_DESCRIBE: return "ca_describe";
    case PromptTemplateId::CA_REASON: return "ca_reason";
    case PromptTemplateId::RULE_APPLY_ABLATION: return "rule_apply_ablation";
    case PromptTemplateId::DVRL_MINIMAL: return "dvrl_minimal";
    case PromptTemplateId::WG_CAPTION_CHOICE: return "wg_caption_choice";
    case PromptTemplateId::WG_IMAGE_CHOICE: return "wg_image_choice";
  }
  throw Error("unreachable PromptTemplateId");
}

const std::string& prompt_template_body(PromptTemplateId id) {
  static const std::string dvrl = kDvrlTemplate;
  static const std::string dvrl_min = kDvrlMinimalTemplate;
  // Both extraction branches belong to one template id.
  static const std::string drl_extract =
      std::string(kDrlExtractBothTemplate) + "\n---\n" + kDrlExtractPosOnlyTemplate;
  static const std::string drl_apply = kDrlApplyTemplate;
  static const std::string ca_describe = kCaDescribeTemplate;
  static const std::string ca_reason = kCaReasonTemplate;
  static const std::string wg_caption = kWgCaptionChoiceTemplate;
  static const std::string wg_image = kWgImageChoiceTemplate;
  switch (id) {
    case PromptTemplateId::DVRL: return dvrl;
    case PromptTemplateId::DVRL_MINIMAL: return dvrl_min;
    case PromptTemplateId::DRL_EXTRACT: return drl_extract;
    case PromptTemplateId::DRL_APPLY:
    case PromptTemplateId::RULE_APPLY_ABLATION: return drl_apply;
    case PromptTemplateId::CA_DESCRIBE: return ca_describe;
    case PromptTemplateId::CA_REASON: return ca_reason;
    case PromptTemplateId::WG_CAPTION_CHOICE: return wg_caption;
    case PromptTemplateId::WG_IMAGE_CHOICE: return wg_image;
  }
  throw Error("unreachable PromptTemplateId");
}

std::string prompt_template_hash(PromptTemplateId id) {
  return util::sha256_hex(prompt_template_body(id));
}

std::string render_dvrl(int m, int n) {
  check_counts(m, n);
  return expand(kDvrlTemplate, {{"{total}", std::to_string(m + n + 1)},
                                {"{m}", std::to_string(m)},
                                {"{n}", std::to_string(n)}});
}

std::string render_dvrl_minimal(int m, int n) {
  check_counts(m, n);
  return expand(kDvrlMinimalTemplate, {{"{total}", std::to_string(m + n + 1)},
                                       {"{m}", std::to_string(m)},
                                       {"{n}", std::to_string(n)}});
}

std::string render_drl_extract(int m, int n) {
  check_counts(m, n);
  if (n == 0) return expand(kDrlExtractPosOnlyTemplate, {{"{m}", std::to_string(m)}});
  return expand(kDrlExtractBothTemplate, {{"{total}", std::to_string(m + n)},
                                          {"{m}", std::to_string(m)},
                                          {"{n}", std::to_string(n)}});
}

std::string render_drl_apply(int m, int n, const RuleSummary& summary) {
  check_counts(m, n);
  if (util::trim(summary.text).empty()) throw EmptyRule("rule summary is blank");
  return expand(kDrlApplyTemplate, {{"{m}", std::to_string(m)},
                                    {"{n}", std::to_string(n)},
                                    {"{summary}", summary.text}});
}

std::string render_ca_describe() { return kCaDescribeTemplate; }

std::string render_ca_reason(const std::vector<std::string>& raw_documents, int m, int n) {
  check_counts(m, n);
  size_t expected = static_cast<size_t>(m) + static_cast<size_t>(n) + 1;
  if (raw_documents.size() != expected) {
    throw CountMismatch("expected " + std::to_string(expected) + " description documents, got " +
                        std::to_string(raw_documents.size()));
  }
  auto join = [&](size_t begin, size_t end) {
    std::string out;
    for (size_t i = begin; i < end; ++i) {
      if (i > begin) out += "\n\n";
      out += raw_documents[i];
    }
    return out;
  };
  return expand(kCaReasonTemplate,
                {{"{m}", std::to_string(m)},
                 {"{n}", std::to_string(n)},
                 {"{positives}", join(0, static_cast<size_t>(m))},
                 {"{negatives}", join(static_cast<size_t>(m), static_cast<size_t>(m + n))},
                 {"{query}", raw_documents.back()}});
}

std::string render_winoground_choice(WinogroundChoiceKind kind, const std::string& anchor,
                                     const std::string& option_a, const std::string& option_b) {
  if (util::trim(anchor).empty() || util::trim(option_a).empty() || util::trim(option_b).empty()) {
    throw EmptyField("choice prompt requires a non-empty anchor and both options");
  }
  const char* tpl = kind == WinogroundChoiceKind::CaptionChoice ? kWgCaptionChoiceTemplate
                                                                : kWgImageChoiceTemplate;
  return expand(tpl, {{"{anchor}", anchor}, {"{option_a}", option_a}, {"{option_b}", option_b}});
}

}  // namespace vreval
