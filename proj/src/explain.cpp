#include "kgx/explain.hpp"

#include <atomic>
#include <chrono>
#include <ctime>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "kgx/text.hpp"

namespace kgx {

using nlohmann::json;
using nlohmann::ordered_json;

json to_json(const GroundedRule &g) {
    json body = json::array();
    for (const auto &t : g.body)
        body.push_back(json::array({t.subject, t.predicate, t.object}));
    return json{{"rule_id", g.rule_id},
                {"bindings", g.bindings},
                {"body", body},
                {"head", json::array({g.head.subject, g.head.predicate, g.head.object})},
                {"head_in_kg", g.head_in_kg}};
}

GroundedRule grounded_rule_from_json(const json &j) {
    GroundedRule g;
    g.rule_id = j.value("rule_id", "");
    g.bindings = j.value("bindings", std::map<std::string, std::string>{});
    auto triple = [](const json &t) {
        return LabelTriple{t.at(0).get<std::string>(), t.at(1).get<std::string>(),
                           t.at(2).get<std::string>()};
    };
    for (const auto &t : j.at("body"))
        g.body.push_back(triple(t));
    g.head = triple(j.at("head"));
    g.head_in_kg = j.value("head_in_kg", false);
    return g;
}

std::string make_item_id(const std::string &rule_id, Strategy strategy,
                         const std::string &model_name) {
    return "item-" + text::hex64(text::fnv1a64(rule_id + "|" + to_string(strategy) + "|" +
                                               model_name));
}

std::string ExplanationRecord::item_id() const {
    return make_item_id(rule_id, strategy, model_name);
}

ordered_json to_json(const ExplanationRecord &r) {
    ordered_json types = ordered_json::array();
    for (const auto &t : r.variable_types)
        types.push_back(ordered_json(to_json(t)));
    ordered_json instances = ordered_json::array();
    for (const auto &g : r.sample_instances)
        instances.push_back(ordered_json(to_json(g)));
    ordered_json j;
    j["item_id"] = r.item_id();
    j["rule_id"] = r.rule_id;
    j["rule_text"] = r.rule_text;
    j["strategy"] = to_string(r.strategy);
    j["model"] = r.model_name;
    j["variable_types"] = types;
    j["sample_instances"] = instances;
    j["explanation"] = r.explanation;
    j["prompt"] = r.prompt;
    j["created_at"] = r.created_at;
    j["generation_mode"] = to_string(r.generation_mode);
    return j;
}

ExplanationRecord explanation_record_from_json(const json &j) {
    ExplanationRecord r;
    r.rule_text = j.at("rule_text").get<std::string>();
    r.rule_id = j.value("rule_id", "");
    if (r.rule_id.empty())
        r.rule_id = parse_rule(r.rule_text).id();
    r.strategy = parse_strategy(j.value("strategy", "zero_shot"));
    r.model_name = j.value("model", "");
    if (j.contains("variable_types"))
        for (const auto &t : j["variable_types"])
            r.variable_types.push_back(typed_variable_from_json(t));
    if (j.contains("sample_instances"))
        for (const auto &g : j["sample_instances"])
            r.sample_instances.push_back(grounded_rule_from_json(g));
    r.explanation = j.at("explanation").get<std::string>();
    r.prompt = j.value("prompt", "");
    r.created_at = j.value("created_at", "");
    r.generation_mode = parse_gateway_mode(j.value("generation_mode", "live"));
    return r;
}

std::vector<ExplanationRecord> read_records_file(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open records file: " + path);
    std::vector<ExplanationRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty())
            continue;
        try {
            out.push_back(explanation_record_from_json(json::parse(line)));
        } catch (const std::exception &e) {
            throw InputError(line_no, std::string("bad explanation record: ") + e.what());
        }
    }
    return out;
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::uint64_t rule_seed(std::uint64_t seed, const std::string &rule_id) {
    return seed ^ text::fnv1a64(rule_id);
}

ExplanationRecord prepare_record(const Rule &rule, const ExplainContext &ctx) {
    if (ctx.store == nullptr || ctx.gateway == nullptr)
        throw Error("explain context needs a store and a gateway");

    ExplanationRecord rec;
    rec.rule_id = rule.id();
    rec.rule_text = render_rule(rule);
    rec.strategy = ctx.strategy;
    rec.model_name = ctx.generator.model_name;
    rec.generation_mode = ctx.gateway->mode() == GatewayMode::replay ? GatewayMode::replay
                                                                       : GatewayMode::live;
    rec.sample_instances =
        sample_instances(rule, *ctx.store, ctx.instances, rule_seed(ctx.seed, rec.rule_id));

    const bool needs_types = ctx.strategy == Strategy::typed || ctx.strategy == Strategy::cot;
    std::optional<std::vector<TypedVariable>> types;
    std::string typing_failure;
    if (ctx.catalog != nullptr && !ctx.catalog->empty()) {
        try {
            types = schema_variable_types(rule, *ctx.store, *ctx.catalog);
        } catch (const TypingError &e) {
            typing_failure = e.what();
        }
    }
    if (!types && needs_types && ctx.typer) {
        if (rec.sample_instances.empty() && !rule.variables().empty())
            throw TypingError("no instances available for model-based typing of rule " +
                              rec.rule_id);
        types = llm_variable_types(rule, rec.sample_instances, *ctx.gateway, *ctx.typer);
    }
    if (!types && needs_types)
        throw TypingError(typing_failure.empty()
                              ? "no variable types available for rule " + rec.rule_id
                              : typing_failure);
    if (types)
        rec.variable_types = *types;

    rec.prompt =
        build_generation_prompt(rule, ctx.strategy, types, ctx.profile, ctx.exemplars).text;
    return rec;
}

ExplanationRecord explain_rule(const Rule &rule, const ExplainContext &ctx) {
    auto rec = prepare_record(rule, ctx);
    rec.explanation =
        std::string(text::trim(ctx.gateway->complete(rec.prompt, ctx.generator).text));
    if (rec.explanation.empty())
        throw Error("empty explanation for rule " + rec.rule_id);
    rec.created_at = ctx.clock ? ctx.clock() : utc_timestamp();
    return rec;
}

BatchSummary explain_batch(const std::string &rules_path, const std::string &output_path,
                           const std::string &log_path, const ExplainContext &ctx,
                           const BatchOptions &options) {
    const auto rows = read_rules_file(rules_path);

    std::set<std::string> done;
    if (options.resume) {
        std::ifstream existing(output_path);
        std::string line;
        while (std::getline(existing, line)) {
            if (text::trim(line).empty())
                continue;
            const auto j = json::parse(line, nullptr, false);
            if (!j.is_discarded() && j.contains("item_id"))
                done.insert(j["item_id"].get<std::string>());
        }
    }

    const auto mode = options.resume ? std::ios::app : std::ios::trunc;
    std::ofstream out(output_path, std::ios::binary | mode);
    std::ofstream log(log_path, std::ios::binary | mode);
    if (!out)
        throw Error("cannot open output file: " + output_path);
    if (!log)
        throw Error("cannot open run log: " + log_path);

    BatchSummary summary;
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto item =
            make_item_id(rows[i].rule.id(), ctx.strategy, ctx.generator.model_name);
        if (!done.insert(item).second) {
            ++summary.skipped;
            continue;
        }
        todo.push_back(i);
    }

    struct Outcome {
        bool finished = false;
        std::optional<ExplanationRecord> record;
        std::string error;
    };
    std::vector<Outcome> outcomes(todo.size());
    std::mutex write_mutex;
    std::size_t next_write = 0;

    // Outcomes are flushed in input order as soon as a contiguous prefix is done.
    auto flush_ready = [&] {
        while (next_write < outcomes.size() && outcomes[next_write].finished) {
            auto &o = outcomes[next_write];
            const auto &row = rows[todo[next_write]];
            if (o.record) {
                out << to_json(*o.record).dump() << '\n';
                ++summary.ok;
            } else {
                ordered_json entry;
                entry["rule_id"] = row.rule.id();
                entry["rule_text"] = render_rule(row.rule);
                entry["line"] = row.line;
                entry["error"] = o.error;
                log << entry.dump() << '\n';
                ++summary.failed;
            }
            o.record.reset();
            ++next_write;
        }
        out.flush();
        log.flush();
    };

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < todo.size(); k = next++) {
            Outcome o;
            try {
                o.record = explain_rule(rows[todo[k]].rule, ctx);
            } catch (const std::exception &e) {
                o.error = e.what();
            }
            o.finished = true;
            std::lock_guard lock(write_mutex);
            outcomes[k] = std::move(o);
            flush_ready();
        }
    };
    const unsigned threads = std::max(1u, options.jobs);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back(worker);
    }
    return summary;
}

} // namespace kgx
