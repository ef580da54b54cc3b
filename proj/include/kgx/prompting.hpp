#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgx/error.hpp"
#include "kgx/rule.hpp"
#include "kgx/typing.hpp"

namespace kgx {

enum class Strategy { zero_shot, few_shot, typed, cot };
enum class DatasetProfile { freebase, freebase_concat, ogbl };

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string &s);
std::string to_string(DatasetProfile p);
DatasetProfile parse_profile(const std::string &s);

struct Exemplar {
    std::string rule_text;
    std::string explanation;

    bool operator==(const Exemplar &) const = default;
};

struct PromptSpec {
    Strategy strategy = Strategy::zero_shot;
    std::string background;
    std::vector<Exemplar> exemplars;
    std::string rule_text;
    std::optional<std::vector<TypedVariable>> variable_types;
    std::vector<std::string> cot_steps;
};

class PromptError : public Error {
  public:
    using Error::Error;
};

// Dataset syntax primer placed at the top of every generation prompt.
std::string build_background(DatasetProfile profile);

// The two built-in (rule, explanation) pairs used by few-shot prompts.
const std::vector<Exemplar> &default_exemplars();
std::vector<Exemplar> load_exemplars(const std::string &path);
nlohmann::json exemplars_to_json(const std::vector<Exemplar> &exemplars);

const std::vector<std::string> &cot_steps();

// Throws PromptError when the strategy's invariants do not hold: two
// exemplars for few-shot, variable types for typed and cot.
PromptSpec make_prompt_spec(const Rule &rule, Strategy strategy,
                            const std::optional<std::vector<TypedVariable>> &types,
                            DatasetProfile profile,
                            const std::vector<Exemplar> &exemplars = default_exemplars());

void check_prompt_spec(const PromptSpec &spec);

// Background, exemplars, variable types, reasoning steps, the rule, then the
// task instruction. Pure function of the spec.
std::string render_prompt(const PromptSpec &spec, bool include_background = true);

struct GenerationPrompt {
    PromptSpec spec;
    std::string text;
};

GenerationPrompt build_generation_prompt(const Rule &rule, Strategy strategy,
                                         const std::optional<std::vector<TypedVariable>> &types,
                                         DatasetProfile profile,
                                         const std::vector<Exemplar> &exemplars =
                                             default_exemplars());

} // namespace kgx
