#include "kgx/prompting.hpp"

#include <fstream>
#include <sstream>

namespace kgx {

using nlohmann::json;

std::string to_string(Strategy s) {
    switch (s) {
    case Strategy::zero_shot:
        return "zero_shot";
    case Strategy::few_shot:
        return "few_shot";
    case Strategy::typed:
        return "typed";
    case Strategy::cot:
        return "cot";
    }
    return "zero_shot";
}

Strategy parse_strategy(const std::string &s) {
    if (s == "zero_shot" || s == "zero-shot")
        return Strategy::zero_shot;
    if (s == "few_shot" || s == "few-shot")
        return Strategy::few_shot;
    if (s == "typed")
        return Strategy::typed;
    if (s == "cot")
        return Strategy::cot;
    throw Error("unknown strategy: " + s);
}

std::string to_string(DatasetProfile p) {
    switch (p) {
    case DatasetProfile::freebase:
        return "freebase";
    case DatasetProfile::freebase_concat:
        return "freebase_concat";
    case DatasetProfile::ogbl:
        return "ogbl";
    }
    return "freebase";
}

DatasetProfile parse_profile(const std::string &s) {
    if (s == "freebase")
        return DatasetProfile::freebase;
    if (s == "freebase_concat")
        return DatasetProfile::freebase_concat;
    if (s == "ogbl")
        return DatasetProfile::ogbl;
    throw Error("unknown dataset profile: " + s);
}

namespace {

constexpr const char *kRulePrimer =
    "A rule has the form `body => head`. The body is one or more atoms joined by `&`; "
    "when every body atom holds, the head atom is predicted to hold. Each atom is written "
    "as subject, relation and object separated by tabs. Terms starting with `?` are "
    "variables that stand for any entity making the atoms true; all other terms are "
    "constant entities.";

constexpr const char *kFreebaseLabels =
    "Relation labels follow the format /[domain]/[type]/[label], for example "
    "/american_football/player_rushing_statistics/team. The domain is the broad topic, the "
    "type is the kind of entity the relation starts from, and the label names the property "
    "that links the subject to the object. Read the label together with its type: "
    "/spaceflight/rocket_engine/manufactured_by relates a rocket engine to its manufacturer.";

constexpr const char *kConcatLabels =
    "Some relation labels are concatenated and take the form "
    "domain1/type1/label1-/domain2/type2/label2. They come from converting an n-ary "
    "relationship centered on a mediator node (a Freebase CVT, compound value type) into "
    "binary relations by joining the two edges that pass through the mediator. Such a "
    "relation means that the subject and the object took part in the same n-ary "
    "relationship, for example the same game statistics record. The two halves may share "
    "the domain and the type, but label1 and label2 always differ.";

constexpr const char *kOgblLabels =
    "The knowledge graph is biomedical. It contains five types of entities: diseases, "
    "proteins, drugs, side effects, and protein functions. Every entity is identified by an "
    "id that begins with its type followed by a number, for example drug_742 or "
    "side_effect_19, and each entity has exactly one type. Relation labels name the "
    "interaction between the two entities, such as a drug treating a disease or two "
    "proteins interacting.";

} // namespace

std::string build_background(DatasetProfile profile) {
    std::string out = "Background:\n";
    out += kRulePrimer;
    out += "\n\n";
    switch (profile) {
    case DatasetProfile::freebase:
        out += kFreebaseLabels;
        break;
    case DatasetProfile::freebase_concat:
        out += kFreebaseLabels;
        out += "\n\n";
        out += kConcatLabels;
        break;
    case DatasetProfile::ogbl:
        out += kOgblLabels;
        break;
    }
    out += '\n';
    return out;
}

const std::vector<Exemplar> &default_exemplars() {
    static const std::vector<Exemplar> exemplars = {
        {"?a\t/spaceflight/bipropellant_rocket_engine/oxidizer\tHydrogen peroxide => "
         "?a\t/spaceflight/rocket_engine/manufactured_by\tNPO Energomash",
         "If a bipropellant rocket engine uses hydrogen peroxide as its oxidizer, then that "
         "rocket engine is manufactured by NPO Energomash."},
        {"?b\t/time/event/instance_of_recurring_event\tWorld Series => "
         "World Series\t/sports/sports_championship/events\t?b",
         "If a sports championship event is an instance of the recurring World Series, then "
         "that event is listed among the events of the World Series championship."},
    };
    return exemplars;
}

json exemplars_to_json(const std::vector<Exemplar> &exemplars) {
    json arr = json::array();
    for (const auto &e : exemplars)
        arr.push_back({{"rule", e.rule_text}, {"explanation", e.explanation}});
    return json{{"version", 1}, {"exemplars", arr}};
}

std::vector<Exemplar> load_exemplars(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open exemplar file: " + path);
    const json j = json::parse(in);
    std::vector<Exemplar> out;
    for (const auto &e : j.at("exemplars"))
        out.push_back({e.at("rule").get<std::string>(), e.at("explanation").get<std::string>()});
    return out;
}

const std::vector<std::string> &cot_steps() {
    static const std::vector<std::string> steps = {
        "Restate each body atom in plain words, reading the relation label as described in "
        "the background.",
        "Restate the head atom in plain words.",
        "Identify the type of every variable from the list above and use it consistently "
        "across atoms.",
        "Determine the direction of the implication: the body atoms together imply the head "
        "atom, never the reverse.",
        "Compose one fluent sentence that expresses the whole rule and mentions every "
        "constant and relation.",
    };
    return steps;
}

void check_prompt_spec(const PromptSpec &spec) {
    if (spec.strategy == Strategy::few_shot && spec.exemplars.size() != 2)
        throw PromptError("few-shot prompts carry exactly 2 exemplars, got " +
                          std::to_string(spec.exemplars.size()));
    if (spec.strategy != Strategy::few_shot && !spec.exemplars.empty())
        throw PromptError("only few-shot prompts carry exemplars");
    const bool needs_types = spec.strategy == Strategy::typed || spec.strategy == Strategy::cot;
    if (needs_types && !spec.variable_types)
        throw PromptError(to_string(spec.strategy) + " prompts require variable types");
    if (spec.strategy == Strategy::cot && spec.cot_steps.size() != 5)
        throw PromptError("chain-of-thought prompts carry exactly 5 steps");
    if (spec.strategy != Strategy::cot && !spec.cot_steps.empty())
        throw PromptError("only chain-of-thought prompts carry reasoning steps");
}

PromptSpec make_prompt_spec(const Rule &rule, Strategy strategy,
                            const std::optional<std::vector<TypedVariable>> &types,
                            DatasetProfile profile, const std::vector<Exemplar> &exemplars) {
    PromptSpec spec;
    spec.strategy = strategy;
    spec.background = build_background(profile);
    spec.rule_text = render_rule(rule);
    if (strategy == Strategy::few_shot)
        spec.exemplars = exemplars;
    if (strategy == Strategy::typed || strategy == Strategy::cot)
        spec.variable_types = types;
    if (strategy == Strategy::cot)
        spec.cot_steps = cot_steps();
    check_prompt_spec(spec);
    return spec;
}

std::string render_prompt(const PromptSpec &spec, bool include_background) {
    check_prompt_spec(spec);
    std::ostringstream os;
    if (include_background)
        os << spec.background << '\n';
    if (!spec.exemplars.empty()) {
        os << "Examples:\n";
        for (const auto &e : spec.exemplars)
            os << "Rule: " << e.rule_text << "\nExplanation: " << e.explanation << "\n\n";
    }
    if (spec.variable_types) {
        os << "Variable types:\n";
        for (const auto &v : *spec.variable_types)
            os << v.variable << " is a " << v.type_label << '\n';
        os << '\n';
    }
    if (!spec.cot_steps.empty()) {
        os << "Work through these steps before answering:\n";
        for (std::size_t i = 0; i < spec.cot_steps.size(); ++i)
            os << i + 1 << ". " << spec.cot_steps[i] << '\n';
        os << '\n';
    }
    os << "Rule:\n" << spec.rule_text << "\n\n";
    os << "Task: produce one natural-language explanation of the rule above. "
          "Reply with the explanation only.\n";
    return os.str();
}

GenerationPrompt build_generation_prompt(const Rule &rule, Strategy strategy,
                                         const std::optional<std::vector<TypedVariable>> &types,
                                         DatasetProfile profile,
                                         const std::vector<Exemplar> &exemplars) {
    GenerationPrompt out;
    out.spec = make_prompt_spec(rule, strategy, types, profile, exemplars);
    out.text = render_prompt(out.spec);
    return out;
}

} // namespace kgx
