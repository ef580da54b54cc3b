#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgx/annotation.hpp"
#include "kgx/eval_metrics.hpp"
#include "kgx/explain.hpp"

namespace kgx {

// Checklist put to the judge before it scores. Keys are the answer labels
// of the reply grammar.
struct CheckQuestion {
    std::string key;
    std::string text;
};
const std::vector<CheckQuestion> &judge_checklist();

struct ScoredExemplar {
    std::string rule_text;
    std::string instance;
    std::string types;
    std::string explanation;
    std::map<std::string, std::string> answers; // checklist key -> answer
    int score = 0;
    std::string rationale;
};
const std::vector<ScoredExemplar> &default_judge_exemplars();
std::vector<ScoredExemplar> load_judge_exemplars(const std::string &path);
nlohmann::json judge_exemplars_to_json(const std::vector<ScoredExemplar> &exemplars);

// Instruction, rubric, three scored exemplars, checklist, then the item:
// rule, one grounded instance, variable types and the explanation. The
// generator's model name is never included.
std::string build_judge_prompt(const ExplanationRecord &record, const GroundedRule *instance,
                               const std::vector<TypedVariable> &types,
                               const std::vector<ScoredExemplar> &exemplars =
                                   default_judge_exemplars());

struct JudgeRun {
    std::optional<int> score; // nullopt for a failed run
    std::map<std::string, std::string> check_answers;
    std::string rationale;
    std::string raw; // last reply received for this run
    bool retried = false;
    bool failed() const noexcept { return !score.has_value(); }
};

// Parses a reply whose last non-empty line is `SCORE: <1-5>`. Lines of the
// form `<KEY>: <answer>` for checklist keys and `RATIONALE: ...` are
// collected. Returns nullopt when the score line is absent or malformed.
std::optional<JudgeRun> parse_judge_reply(const std::string &reply);

struct JudgeVerdict {
    std::string item_id;
    std::string judge_model;
    std::vector<JudgeRun> runs;
    double aggregate_score = 0.0;   // mean over valid runs
    double consistency_spread = 0.0; // max - min over valid runs
    std::size_t valid_runs() const;
};

nlohmann::ordered_json to_json(const JudgeVerdict &v);
JudgeVerdict judge_verdict_from_json(const nlohmann::json &j);
std::vector<JudgeVerdict> read_verdicts_file(const std::string &path);

class JudgeError : public Error {
  public:
    using Error::Error;
};

// Mean and max-min of the valid run scores. Throws JudgeError when no run
// has a score.
void aggregate_runs(JudgeVerdict &verdict);

struct JudgeOptions {
    unsigned runs = 3;
    std::vector<ScoredExemplar> exemplars = default_judge_exemplars();
};

// Runs the judge prompt `runs` times in sequence (run i uses fixture sample
// i). An unparseable reply is retried once with a format reminder, then kept
// as a failed run. Throws JudgeError when every run failed.
JudgeVerdict judge_explanation(const ExplanationRecord &record, LlmGateway &gateway,
                               const ModelConfig &judge_config, const JudgeOptions &options = {});

// Pairs judge aggregates with per-item mean human correctness. Throws
// StatisticsError with fewer than 3 matched items.
AgreementReport agreement(const std::vector<JudgeVerdict> &verdicts,
                          const std::vector<AnnotationRecord> &human);

nlohmann::ordered_json to_json(const AgreementReport &r);

} // namespace kgx
