#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgx/error.hpp"
#include "kgx/kg_store.hpp"
#include "kgx/rule.hpp"
#include "kgx/rule_engine.hpp"

namespace kgx {

class LlmGateway;
struct ModelConfig;

enum class TypingMethod { schema, id_prefix, llm_inferred };

std::string to_string(TypingMethod m);
TypingMethod parse_typing_method(const std::string &s);

struct TypedVariable {
    std::string variable;
    std::string type_label;
    TypingMethod method = TypingMethod::schema;
    std::optional<std::string> confidence_note;

    bool operator==(const TypedVariable &) const = default;
};

nlohmann::json to_json(const TypedVariable &v);
TypedVariable typed_variable_from_json(const nlohmann::json &j);

class TypingError : public Error {
  public:
    using Error::Error;
};

struct SchemaTypingOptions {
    // Occurrences examined per atom position.
    std::size_t sample_cap = 10000;
};

// Types each rule variable from the entities the store actually places in
// the variable's atom positions. When the other side of an atom is a
// constant, only facts with that constant are considered. Per position the
// set of most frequent types is kept; the sets are intersected across the
// variable's positions. An empty intersection falls back to the most frequent
// type overall and says so in confidence_note. Variables whose entities are
// all untyped fall back to id prefixes; otherwise TypingError is thrown.
std::vector<TypedVariable> schema_variable_types(const Rule &rule, const TripleStore &store,
                                                 const TypeCatalog &catalog,
                                                 const SchemaTypingOptions &options = {});

// Prompt asking a model to name each variable's type from grounded examples.
std::string build_typing_prompt(const Rule &rule, std::span<const GroundedRule> instances);

// Parses `?x = <type>` lines. Every rule variable must be present; lines
// naming unknown variables are ignored. Throws TypingError.
std::vector<TypedVariable> parse_typing_completion(const std::string &completion,
                                                   const std::vector<std::string> &variables);

// One typing prompt; on an unparseable reply, up to two retries with a
// format reminder. Throws TypingError carrying the last raw completion.
std::vector<TypedVariable> llm_variable_types(const Rule &rule,
                                              std::span<const GroundedRule> instances,
                                              LlmGateway &gateway, const ModelConfig &config);

// Marks model-inferred types that disagree with the schema answer.
std::vector<TypedVariable> reconcile_types(const std::vector<TypedVariable> &schema,
                                           std::vector<TypedVariable> inferred);

} // namespace kgx
