#include "kgx/typing.hpp"

#include <algorithm>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include "kgx/llm_gateway.hpp"
#include "kgx/text.hpp"

namespace kgx {

using nlohmann::json;

std::string to_string(TypingMethod m) {
    switch (m) {
    case TypingMethod::schema:
        return "schema";
    case TypingMethod::id_prefix:
        return "id-prefix";
    case TypingMethod::llm_inferred:
        return "llm-inferred";
    }
    return "schema";
}

TypingMethod parse_typing_method(const std::string &s) {
    if (s == "schema")
        return TypingMethod::schema;
    if (s == "id-prefix")
        return TypingMethod::id_prefix;
    if (s == "llm-inferred")
        return TypingMethod::llm_inferred;
    throw Error("unknown typing method: " + s);
}

json to_json(const TypedVariable &v) {
    json j{{"variable", v.variable}, {"type", v.type_label}, {"method", to_string(v.method)}};
    if (v.confidence_note)
        j["note"] = *v.confidence_note;
    return j;
}

TypedVariable typed_variable_from_json(const json &j) {
    TypedVariable v;
    v.variable = j.at("variable").get<std::string>();
    v.type_label = j.at("type").get<std::string>();
    v.method = parse_typing_method(j.value("method", "schema"));
    if (j.contains("note") && j["note"].is_string())
        v.confidence_note = j["note"].get<std::string>();
    return v;
}

namespace {

// Distinct entities occupying one atom position, capped at `cap` scanned
// occurrences.
std::vector<EntityId> position_entities(const TripleStore &store, const Atom &atom,
                                        bool var_is_subject, std::size_t cap) {
    std::vector<EntityId> out;
    const auto p = store.predicate(atom.relation);
    if (!p)
        return out;
    const Term &other = var_is_subject ? atom.object : atom.subject;
    const Term &self = var_is_subject ? atom.subject : atom.object;
    const bool reflexive = other.is_variable() && other.text == self.text;

    std::span<const EntityPair> range;
    bool value_is_var = false;
    if (!other.is_variable()) {
        const auto c = store.entity(other.text);
        if (!c)
            return out;
        range = var_is_subject ? store.subjects(*p, *c) : store.objects(*p, *c);
        value_is_var = true;
    } else {
        range = var_is_subject ? store.facts(*p) : store.facts_by_object(*p);
    }
    std::size_t scanned = 0;
    for (const auto &f : range) {
        if (scanned++ >= cap)
            break;
        if (reflexive && f.key != f.value)
            continue;
        const EntityId e = value_is_var ? f.value : f.key;
        if (out.empty() || out.back() != e)
            out.push_back(e);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

bool type_before(const TypeCatalog &catalog, TypeId a, TypeId b) {
    const auto pa = catalog.population(a);
    const auto pb = catalog.population(b);
    if (pa != pb)
        return pa < pb;
    return catalog.type_label(a) < catalog.type_label(b);
}

} // namespace

std::vector<TypedVariable> schema_variable_types(const Rule &rule, const TripleStore &store,
                                                 const TypeCatalog &catalog,
                                                 const SchemaTypingOptions &options) {
    if (catalog.empty())
        throw TypingError("type catalog is empty");

    std::vector<const Atom *> atoms;
    for (const auto &a : rule.body)
        atoms.push_back(&a);
    atoms.push_back(&rule.head);

    std::vector<TypedVariable> out;
    for (const auto &var : rule.variables()) {
        std::vector<std::vector<TypeId>> modes;
        std::map<TypeId, std::size_t> overall;
        std::vector<EntityId> all_entities;

        for (const Atom *a : atoms) {
            for (const bool subject_side : {true, false}) {
                const Term &t = subject_side ? a->subject : a->object;
                if (!t.is_variable() || t.text != var)
                    continue;
                if (!subject_side && a->subject.is_variable() && a->subject.text == var)
                    continue; // reflexive atom already counted from the subject side
                const auto ents = position_entities(store, *a, subject_side, options.sample_cap);
                all_entities.insert(all_entities.end(), ents.begin(), ents.end());
                auto mode = type_vote(catalog, ents, true);
                if (mode.empty())
                    continue;
                for (const EntityId e : ents)
                    for (const TypeId ty : catalog.types_of(e))
                        ++overall[ty];
                std::sort(mode.begin(), mode.end());
                modes.push_back(std::move(mode));
            }
        }

        if (modes.empty()) {
            std::map<std::string, std::size_t> prefix_votes;
            for (const EntityId e : all_entities)
                if (const auto t = infer_type_from_id(store.entities().label(e)))
                    ++prefix_votes[*t];
            if (prefix_votes.empty())
                throw TypingError("untypeable variable " + var);
            const auto best = std::max_element(
                prefix_votes.begin(), prefix_votes.end(),
                [](const auto &x, const auto &y) { return x.second < y.second; });
            out.push_back({var, best->first, TypingMethod::id_prefix, std::nullopt});
            continue;
        }

        std::vector<TypeId> common = modes.front();
        for (std::size_t i = 1; i < modes.size(); ++i) {
            std::vector<TypeId> next;
            std::set_intersection(common.begin(), common.end(), modes[i].begin(), modes[i].end(),
                                  std::back_inserter(next));
            common = std::move(next);
        }

        if (!common.empty()) {
            const TypeId best = *std::min_element(
                common.begin(), common.end(),
                [&](TypeId a, TypeId b) { return type_before(catalog, a, b); });
            out.push_back({var, catalog.type_label(best), TypingMethod::schema, std::nullopt});
            continue;
        }

        const auto best = std::min_element(overall.begin(), overall.end(),
                                           [&](const auto &a, const auto &b) {
                                               if (a.second != b.second)
                                                   return a.second > b.second;
                                               return type_before(catalog, a.first, b.first);
                                           });
        std::string note = "atom positions disagree on the type (";
        for (std::size_t i = 0; i < modes.size(); ++i) {
            if (i > 0)
                note += ", ";
            note += catalog.type_label(modes[i].front());
        }
        note += "); most frequent type chosen";
        out.push_back({var, catalog.type_label(best->first), TypingMethod::schema, note});
    }
    return out;
}

std::string build_typing_prompt(const Rule &rule, std::span<const GroundedRule> instances) {
    std::ostringstream os;
    os << "You are given a logical rule mined from a knowledge graph, together with example "
          "instantiations of the rule.\n"
          "Relation labels follow the pattern /[domain]/[type]/[label]: the domain and type name "
          "the kind of entity the relation describes and the label names the property. "
          "Concatenated labels such as domain1/type1/label1-/domain2/type2/label2 join two "
          "relations through a removed mediator node.\n\n";
    os << "Rule:\n" << render_rule(rule) << "\n\n";
    os << "Instances:\n";
    for (std::size_t i = 0; i < instances.size(); ++i) {
        os << i + 1 << ". " << render_grounded(instances[i]) << '\n';
    }
    const auto vars = rule.variables();
    os << "\nFor each variable of the rule, infer the entity type shared by the entities that "
          "instantiate it, based on the rule context and the relation labels.\n"
          "Answer with exactly one line per variable and nothing else, in the form:\n"
          "?x = <type>\n"
          "Variables:";
    for (const auto &v : vars)
        os << ' ' << v;
    os << '\n';
    return os.str();
}

std::vector<TypedVariable> parse_typing_completion(const std::string &completion,
                                                   const std::vector<std::string> &variables) {
    static const std::regex line_re(R"(^\s*(\?[A-Za-z0-9_]+)\s*=\s*(.*?)\s*$)");
    std::map<std::string, std::string> found;
    std::istringstream in(completion);
    std::string line;
    while (std::getline(in, line)) {
        std::smatch m;
        if (!std::regex_match(line, m, line_re))
            continue;
        std::string type = m[2];
        while (!type.empty() && (type.back() == '.' || type.back() == ','))
            type.pop_back();
        if (type.empty())
            continue;
        found.emplace(m[1], type);
    }
    std::vector<TypedVariable> out;
    for (const auto &v : variables) {
        const auto it = found.find(v);
        if (it == found.end())
            throw TypingError("no type given for " + v + " in completion: " + completion);
        out.push_back({v, it->second, TypingMethod::llm_inferred, std::nullopt});
    }
    return out;
}

std::vector<TypedVariable> llm_variable_types(const Rule &rule,
                                              std::span<const GroundedRule> instances,
                                              LlmGateway &gateway, const ModelConfig &config) {
    const auto vars = rule.variables();
    if (vars.empty())
        return {};
    if (instances.empty() || instances.size() > 5)
        throw TypingError("type inference needs between 1 and 5 instances, got " +
                          std::to_string(instances.size()));

    const std::string base = build_typing_prompt(rule, instances);
    std::string prompt = base;
    std::string last;
    for (int attempt = 0; attempt < 3; ++attempt) {
        if (attempt > 0) {
            prompt = base + "\nYour previous answer could not be parsed (attempt " +
                     std::to_string(attempt + 1) +
                     "). Reply again with exactly one line per variable in the form ?x = <type>.\n";
        }
        last = gateway.complete(prompt, config).text;
        try {
            return parse_typing_completion(last, vars);
        } catch (const TypingError &) {
        }
    }
    throw TypingError("unparseable type inference after retries; raw completion: " + last);
}

std::vector<TypedVariable> reconcile_types(const std::vector<TypedVariable> &schema,
                                           std::vector<TypedVariable> inferred) {
    for (auto &v : inferred) {
        const auto it = std::find_if(schema.begin(), schema.end(),
                                     [&](const TypedVariable &s) { return s.variable == v.variable; });
        if (it == schema.end())
            continue;
        const auto tail = [](const std::string &label) {
            const auto pos = label.find_last_of('/');
            return text::normalize(pos == std::string::npos ? label : label.substr(pos + 1));
        };
        if (tail(it->type_label) != tail(v.type_label))
            v.confidence_note = "schema type is " + it->type_label +
                                "; the inferred type may be overspecific";
    }
    return inferred;
}

} // namespace kgx
