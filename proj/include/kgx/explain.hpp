#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgx/kg_store.hpp"
#include "kgx/llm_gateway.hpp"
#include "kgx/prompting.hpp"
#include "kgx/rule.hpp"
#include "kgx/rule_engine.hpp"
#include "kgx/typing.hpp"

namespace kgx {

nlohmann::json to_json(const GroundedRule &g);
GroundedRule grounded_rule_from_json(const nlohmann::json &j);

struct ExplanationRecord {
    std::string rule_id;
    std::string rule_text;
    Strategy strategy = Strategy::zero_shot;
    std::string model_name;
    std::vector<TypedVariable> variable_types;
    std::vector<GroundedRule> sample_instances;
    std::string explanation;
    std::string prompt;
    std::string created_at;
    GatewayMode generation_mode = GatewayMode::live;

    // Identifier of the (rule, strategy, model) triple, shared by verdicts,
    // review items and dataset entries.
    std::string item_id() const;
};

std::string make_item_id(const std::string &rule_id, Strategy strategy,
                         const std::string &model_name);

// Key order is fixed so that serialized records are byte-stable.
nlohmann::ordered_json to_json(const ExplanationRecord &r);
ExplanationRecord explanation_record_from_json(const nlohmann::json &j);
std::vector<ExplanationRecord> read_records_file(const std::string &path);

// UTC time, ISO-8601 with seconds.
std::string utc_timestamp();

struct ExplainContext {
    const TripleStore *store = nullptr;
    const TypeCatalog *catalog = nullptr; // optional
    LlmGateway *gateway = nullptr;
    ModelConfig generator;
    std::optional<ModelConfig> typer; // enables model-based typing fallback
    DatasetProfile profile = DatasetProfile::freebase;
    Strategy strategy = Strategy::zero_shot;
    std::uint64_t seed = 0;
    std::size_t instances = 3;
    std::vector<Exemplar> exemplars = default_exemplars();
    std::function<std::string()> clock = utc_timestamp;
};

// Per-rule seed: independent of batch order and concurrency.
std::uint64_t rule_seed(std::uint64_t seed, const std::string &rule_id);

// rule -> types -> instances -> prompt -> completion. Types come from the
// schema when a catalog is present, else from the model when a typer is
// configured. Throws on typing, prompting or gateway failure.
ExplanationRecord explain_rule(const Rule &rule, const ExplainContext &ctx);

// Everything explain_rule does short of the generation call: instances,
// types and the rendered prompt. The explanation is left empty.
ExplanationRecord prepare_record(const Rule &rule, const ExplainContext &ctx);

struct BatchSummary {
    std::size_t ok = 0;
    std::size_t failed = 0;
    std::size_t skipped = 0;
};

struct BatchOptions {
    bool resume = false;
    unsigned jobs = 1;
};

// Explains every rule of a rule file, appending records to `output_path`
// (JSONL) in input order and failures to `log_path` (JSONL). With resume,
// rules whose item already appears in the output are skipped. An unreadable
// or unparseable rules file aborts before any model call.
BatchSummary explain_batch(const std::string &rules_path, const std::string &output_path,
                           const std::string &log_path, const ExplainContext &ctx,
                           const BatchOptions &options = {});

} // namespace kgx
