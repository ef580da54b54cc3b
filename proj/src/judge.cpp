#include "kgx/judge.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <regex>
#include <set>
#include <sstream>

#include "kgx/text.hpp"

namespace kgx {

using nlohmann::json;
using nlohmann::ordered_json;

const std::vector<CheckQuestion> &judge_checklist() {
    static const std::vector<CheckQuestion> questions = {
        {"ENTITIES", "Do all variable entities stated in the rule appear in the explanation?"},
        {"MISSING",
         "If your answer is no, which variable entities are missing from the explanation?"},
        {"RELATIONS", "Do all relations stated in the rule appear in the explanation?"},
        {"DIRECTION", "Does the explanation keep the direction of the implication, with the body "
                      "atoms as the condition and the head atom as the conclusion?"},
        {"HALLUCINATION",
         "Does the explanation mention any entity or relation that is not in the rule?"},
    };
    return questions;
}

const std::vector<ScoredExemplar> &default_judge_exemplars() {
    static const std::vector<ScoredExemplar> exemplars = {
        {"?a\t/film/film/directed_by\t?b & ?b\t/people/person/nationality\t?c => "
         "?a\t/film/film/country\t?c",
         "Solaris\t/film/film/directed_by\tAndrei Tarkovsky & Andrei Tarkovsky\t"
         "/people/person/nationality\tSoviet Union => Solaris\t/film/film/country\tSoviet Union",
         "?a is a film; ?b is a person; ?c is a country",
         "If a film is directed by a person who holds the nationality of some country, then the "
         "film is a production of that country.",
         {{"ENTITIES", "yes"},
          {"MISSING", "none"},
          {"RELATIONS", "yes"},
          {"DIRECTION", "yes"},
          {"HALLUCINATION", "no"}},
         5,
         "Both body atoms and the head are stated with the right variables and the condition "
         "leads to the conclusion."},
        {"?a\t/people/person/spouse_s\t?b & ?b\t/people/person/places_lived\t?c => "
         "?a\t/people/person/places_lived\t?c",
         "Ruby Dee\t/people/person/spouse_s\tOssie Davis & Ossie Davis\t"
         "/people/person/places_lived\tNew Rochelle => Ruby Dee\t/people/person/places_lived\t"
         "New Rochelle",
         "?a is a person; ?b is a person; ?c is a location",
         "If two people are married, then they have lived somewhere.",
         {{"ENTITIES", "no"},
          {"MISSING", "?c"},
          {"RELATIONS", "yes"},
          {"DIRECTION", "yes"},
          {"HALLUCINATION", "no"}},
         3,
         "The place is never identified, so the atom saying the spouse lived in it is lost and "
         "the conclusion no longer says the first person lived in the same place."},
        {"?a\t/sports/sports_team/roster./sports/sports_team_roster/position\t?b => "
         "?a\t/sports/sports_team/sport\t?c",
         "Boston Celtics\t/sports/sports_team/roster./sports/sports_team_roster/position\t"
         "Point guard => Boston Celtics\t/sports/sports_team/sport\tBasketball",
         "?a is a sports team; ?b is a sports position; ?c is a sport",
         "Teams with famous coaches usually win many championships.",
         {{"ENTITIES", "no"},
          {"MISSING", "?a, ?b, ?c"},
          {"RELATIONS", "no"},
          {"DIRECTION", "no"},
          {"HALLUCINATION", "yes"}},
         1,
         "The explanation talks about coaches and championships, which are not in the rule, and "
         "states none of its atoms."},
    };
    return exemplars;
}

json judge_exemplars_to_json(const std::vector<ScoredExemplar> &exemplars) {
    json arr = json::array();
    for (const auto &e : exemplars)
        arr.push_back({{"rule", e.rule_text},
                       {"instance", e.instance},
                       {"types", e.types},
                       {"explanation", e.explanation},
                       {"answers", e.answers},
                       {"score", e.score},
                       {"rationale", e.rationale}});
    return json{{"version", 1}, {"exemplars", arr}};
}

std::vector<ScoredExemplar> load_judge_exemplars(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open judge exemplar file: " + path);
    const json j = json::parse(in);
    std::vector<ScoredExemplar> out;
    for (const auto &e : j.at("exemplars")) {
        ScoredExemplar x;
        x.rule_text = e.at("rule").get<std::string>();
        x.instance = e.value("instance", "");
        x.types = e.value("types", "");
        x.explanation = e.at("explanation").get<std::string>();
        x.answers = e.value("answers", std::map<std::string, std::string>{});
        x.score = e.at("score").get<int>();
        x.rationale = e.value("rationale", "");
        if (x.score < 1 || x.score > 5)
            throw Error("judge exemplar score out of range in " + path);
        out.push_back(std::move(x));
    }
    if (out.size() != 3)
        throw Error("judge exemplar file must hold exactly 3 exemplars: " + path);
    return out;
}

namespace {

std::string format_types(const std::vector<TypedVariable> &types) {
    if (types.empty())
        return "(not available)";
    std::string out;
    for (const auto &t : types) {
        if (!out.empty())
            out += "; ";
        out += t.variable + " is a " + t.type_label;
    }
    return out;
}

void write_answers(std::ostream &os, const std::map<std::string, std::string> &answers) {
    for (const auto &q : judge_checklist()) {
        const auto it = answers.find(q.key);
        os << q.key << ": " << (it == answers.end() ? "none" : it->second) << '\n';
    }
}

const char *kRetryReminder =
    "\n\nYour previous reply could not be read: it must end with a line of the form "
    "SCORE: <1-5>. Reply again using exactly the answer format above.";

} // namespace

std::string build_judge_prompt(const ExplanationRecord &record, const GroundedRule *instance,
                               const std::vector<TypedVariable> &types,
                               const std::vector<ScoredExemplar> &exemplars) {
    std::ostringstream os;
    os << "You are reviewing a natural-language explanation of a logical rule mined from a "
          "knowledge graph. Your task is to assess the quality of the given explanation, not to "
          "regenerate it. Do not write a new explanation.\n\n";

    os << "Score the correctness of the explanation on this scale:\n"
          "5 - all atoms of the rule, the direction of the implication and any constants are "
          "stated correctly.\n"
          "4 - a minor omission that does not change the logic of the rule.\n"
          "3 - one atom is wrong or missing.\n"
          "2 - the direction of the implication is wrong, or several atoms are wrong or "
          "missing.\n"
          "1 - the explanation is unrelated to the rule.\n\n";

    os << "Scored examples:\n";
    for (std::size_t i = 0; i < exemplars.size(); ++i) {
        const auto &e = exemplars[i];
        os << "\nExample " << i + 1 << "\n"
           << "Rule: " << e.rule_text << '\n'
           << "Instance: " << e.instance << '\n'
           << "Variable types: " << e.types << '\n'
           << "Explanation: " << e.explanation << '\n'
           << "Assessment:\n";
        write_answers(os, e.answers);
        os << "RATIONALE: " << e.rationale << '\n' << "SCORE: " << e.score << '\n';
    }

    os << "\nBefore scoring, answer these questions:\n";
    for (const auto &q : judge_checklist())
        os << q.key << ": " << q.text << '\n';

    os << "\nItem to assess\n"
       << "Rule: " << record.rule_text << '\n'
       << "Instance: " << (instance ? render_grounded(*instance) : "(not available)") << '\n'
       << "Variable types: " << format_types(types) << '\n'
       << "Explanation: " << record.explanation << '\n';

    os << "\nAnswer in exactly this format, one line per label, ending with the score line:\n";
    for (const auto &q : judge_checklist())
        os << q.key << ": " << (q.key == "MISSING" ? "<variables, or none>" : "<yes|no>") << '\n';
    os << "RATIONALE: <one or two sentences>\n"
       << "SCORE: <1-5>";
    return os.str();
}

std::optional<JudgeRun> parse_judge_reply(const std::string &reply) {
    std::vector<std::string> lines;
    std::istringstream in(reply);
    std::string line;
    while (std::getline(in, line)) {
        const auto t = text::trim(line);
        if (!t.empty())
            lines.emplace_back(t);
    }
    if (lines.empty())
        return std::nullopt;
    static const std::regex score_re(R"(^\**SCORE\**\s*:\s*\**\s*([1-5])\s*\**\s*\.?$)",
                                     std::regex::icase);
    std::smatch m;
    if (!std::regex_match(lines.back(), m, score_re))
        return std::nullopt;
    JudgeRun run;
    run.score = m[1].str()[0] - '0';
    run.raw = reply;
    static const std::regex label_re(R"(^([A-Za-z]+)\s*:\s*(.*)$)");
    for (std::size_t i = 0; i + 1 < lines.size(); ++i) {
        if (!std::regex_match(lines[i], m, label_re))
            continue;
        const auto key = text::to_lower(m[1].str());
        if (key == "rationale") {
            run.rationale = m[2].str();
            continue;
        }
        for (const auto &q : judge_checklist())
            if (text::to_lower(q.key) == key)
                run.check_answers[q.key] = m[2].str();
    }
    return run;
}

std::size_t JudgeVerdict::valid_runs() const {
    return static_cast<std::size_t>(
        std::count_if(runs.begin(), runs.end(), [](const JudgeRun &r) { return !r.failed(); }));
}

void aggregate_runs(JudgeVerdict &v) {
    std::vector<int> scores;
    for (const auto &r : v.runs)
        if (r.score)
            scores.push_back(*r.score);
    if (scores.empty())
        throw JudgeError("no judge run produced a score for " + v.item_id);
    v.aggregate_score = static_cast<double>(std::accumulate(scores.begin(), scores.end(), 0)) /
                        static_cast<double>(scores.size());
    const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
    v.consistency_spread = static_cast<double>(*hi - *lo);
}

JudgeVerdict judge_explanation(const ExplanationRecord &record, LlmGateway &gateway,
                               const ModelConfig &judge_config, const JudgeOptions &options) {
    const GroundedRule *instance =
        record.sample_instances.empty() ? nullptr : &record.sample_instances.front();
    const auto prompt =
        build_judge_prompt(record, instance, record.variable_types, options.exemplars);

    JudgeVerdict v;
    v.item_id = record.item_id();
    v.judge_model = judge_config.model_name;
    for (unsigned i = 0; i < options.runs; ++i) {
        const auto first = gateway.complete(prompt, judge_config, i);
        if (auto run = parse_judge_reply(first.text)) {
            v.runs.push_back(std::move(*run));
            continue;
        }
        const auto second = gateway.complete(prompt + kRetryReminder, judge_config, i);
        if (auto run = parse_judge_reply(second.text)) {
            run->retried = true;
            v.runs.push_back(std::move(*run));
            continue;
        }
        JudgeRun failed;
        failed.raw = second.text;
        failed.retried = true;
        v.runs.push_back(std::move(failed));
    }
    aggregate_runs(v);
    return v;
}

ordered_json to_json(const JudgeVerdict &v) {
    ordered_json runs = ordered_json::array();
    for (const auto &r : v.runs) {
        ordered_json j;
        j["score"] = r.score ? ordered_json(*r.score) : ordered_json(nullptr);
        ordered_json answers = ordered_json::object();
        for (const auto &q : judge_checklist())
            if (const auto it = r.check_answers.find(q.key); it != r.check_answers.end())
                answers[q.key] = it->second;
        j["check_answers"] = answers;
        j["rationale"] = r.rationale;
        j["retried"] = r.retried;
        if (r.failed())
            j["raw"] = r.raw;
        runs.push_back(j);
    }
    ordered_json j;
    j["item_id"] = v.item_id;
    j["judge_model"] = v.judge_model;
    j["runs"] = runs;
    j["aggregate_score"] = v.aggregate_score;
    j["consistency_spread"] = v.consistency_spread;
    return j;
}

JudgeVerdict judge_verdict_from_json(const json &j) {
    JudgeVerdict v;
    v.item_id = j.at("item_id").get<std::string>();
    v.judge_model = j.value("judge_model", "");
    for (const auto &r : j.at("runs")) {
        JudgeRun run;
        if (r.contains("score") && !r["score"].is_null())
            run.score = r["score"].get<int>();
        run.check_answers = r.value("check_answers", std::map<std::string, std::string>{});
        run.rationale = r.value("rationale", "");
        run.retried = r.value("retried", false);
        run.raw = r.value("raw", "");
        v.runs.push_back(std::move(run));
    }
    v.aggregate_score = j.at("aggregate_score").get<double>();
    v.consistency_spread = j.at("consistency_spread").get<double>();
    return v;
}

std::vector<JudgeVerdict> read_verdicts_file(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open verdicts file: " + path);
    std::vector<JudgeVerdict> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty())
            continue;
        try {
            out.push_back(judge_verdict_from_json(json::parse(line)));
        } catch (const std::exception &e) {
            throw InputError(line_no, std::string("bad verdict: ") + e.what());
        }
    }
    return out;
}

AgreementReport agreement(const std::vector<JudgeVerdict> &verdicts,
                          const std::vector<AnnotationRecord> &human) {
    std::map<std::string, std::pair<double, std::size_t>> sums;
    for (const auto &a : human) {
        auto &[sum, n] = sums[a.item_id];
        sum += a.correctness;
        ++n;
    }
    std::vector<double> judge_scores;
    std::vector<double> human_means;
    std::set<std::string> seen;
    for (const auto &v : verdicts) {
        const auto it = sums.find(v.item_id);
        if (it == sums.end() || !seen.insert(v.item_id).second)
            continue;
        judge_scores.push_back(v.aggregate_score);
        human_means.push_back(it->second.first / static_cast<double>(it->second.second));
    }
    if (judge_scores.size() < 3)
        throw StatisticsError("agreement needs at least 3 matched items, got " +
                              std::to_string(judge_scores.size()));

    AgreementReport r;
    r.n_items = judge_scores.size();
    r.spearman_rho = spearman(judge_scores, human_means);
    RatingMatrix m;
    for (std::size_t i = 0; i < judge_scores.size(); ++i)
        m.push_back({judge_scores[i], human_means[i]});
    r.krippendorff_alpha = krippendorff_alpha(m, MeasurementLevel::ordinal);
    r.method_notes = "judge aggregate (mean of runs) against mean human correctness per item; "
                     "spearman over average ranks; krippendorff alpha, ordinal distance, "
                     "judge and human mean as two raters";
    return r;
}

ordered_json to_json(const AgreementReport &r) {
    ordered_json j;
    j["spearman_rho"] = r.spearman_rho;
    j["krippendorff_alpha"] = r.krippendorff_alpha;
    j["n_items"] = r.n_items;
    j["method_notes"] = r.method_notes;
    return j;
}

} // namespace kgx
