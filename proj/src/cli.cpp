#include "kgx/cli.hpp"

#include <atomic>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "kgx/dataset.hpp"
#include "kgx/eval_metrics.hpp"
#include "kgx/explain.hpp"
#include "kgx/judge.hpp"
#include "kgx/kg_store.hpp"
#include "kgx/rule_engine.hpp"
#include "kgx/service.hpp"
#include "kgx/text.hpp"
#include "kgx/typing.hpp"

namespace kgx::cli {

using nlohmann::json;
using nlohmann::ordered_json;

std::string format_number(double v) {
    auto s = fmt::format("{}", v);
    if (s.find_first_of(".eEn") == std::string::npos)
        s += ".0";
    return s;
}

namespace {

struct ModelFlags {
    std::string name;
    std::string endpoint;
    double temperature = 0.0;
    int max_tokens = 1024;
    std::string api_key_env;

    ModelConfig config() const {
        ModelConfig c;
        c.model_name = name;
        c.endpoint = endpoint;
        c.temperature = temperature;
        c.max_tokens = max_tokens;
        c.api_key_env = api_key_env;
        c.validate();
        return c;
    }
};

void add_model_flags(CLI::App *cmd, ModelFlags &m, const std::string &prefix,
                     const std::string &what) {
    cmd->add_option("--" + prefix + "model", m.name, what + " model name");
    cmd->add_option("--" + prefix + "endpoint", m.endpoint,
                    what + " chat-completions URL (live and record modes)");
    cmd->add_option("--" + prefix + "temperature", m.temperature, what + " sampling temperature")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--" + prefix + "max-tokens", m.max_tokens, what + " completion token limit")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--" + prefix + "api-key-env", m.api_key_env,
                    "environment variable holding the " + what + " API key");
}

struct GatewayFlags {
    std::string mode = "replay";
    std::string fixtures;
};

void add_gateway_flags(CLI::App *cmd, GatewayFlags &g) {
    cmd->add_option("--mode", g.mode, "live, record or replay")
        ->check(CLI::IsMember({"live", "record", "replay"}));
    cmd->add_option("--fixtures", g.fixtures, "fixture directory (record and replay)");
}

std::unique_ptr<LlmGateway> make_gateway(const GatewayFlags &g, unsigned jobs) {
    const auto mode = parse_gateway_mode(g.mode);
    std::shared_ptr<FixtureStore> fixtures;
    if (!g.fixtures.empty())
        fixtures = std::make_shared<FixtureStore>(g.fixtures);
    else if (mode != GatewayMode::live)
        throw Error("--fixtures is required in " + g.mode + " mode");
    GatewayOptions options;
    options.max_in_flight = std::max(4u, jobs);
    return std::make_unique<LlmGateway>(mode, fixtures, std::make_shared<HttpTransport>(),
                                        options);
}

// Output stream: a file when a path is given, else the command's stdout.
class Output {
  public:
    Output(const std::string &path, std::ostream &fallback) {
        if (path.empty() || path == "-") {
            os_ = &fallback;
            return;
        }
        file_.open(path, std::ios::binary | std::ios::trunc);
        if (!file_)
            throw Error("cannot write " + path);
        os_ = &file_;
    }
    std::ostream &operator*() { return *os_; }

  private:
    std::ofstream file_;
    std::ostream *os_;
};

RuleFileFormat parse_format(const std::string &s) {
    if (s == "machine")
        return RuleFileFormat::machine;
    if (s == "miner")
        return RuleFileFormat::miner_tsv;
    return RuleFileFormat::automatic;
}

struct Loaded {
    std::unique_ptr<TripleStore> store;
    std::unique_ptr<TypeCatalog> catalog;
};

Loaded load_graph(const std::string &triples, const std::string &types, bool id_types) {
    Loaded l;
    l.store = std::make_unique<TripleStore>(ingest_triples_file(triples));
    if (!types.empty())
        l.catalog = std::make_unique<TypeCatalog>(ingest_entity_types_file(types, *l.store));
    else if (id_types)
        l.catalog = std::make_unique<TypeCatalog>(synthesize_types_from_ids(*l.store));
    return l;
}

std::vector<json> read_jsonl(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open " + path);
    std::vector<json> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (text::trim(line).empty())
            continue;
        auto j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object())
            throw InputError(n, "not a JSON object");
        out.push_back(std::move(j));
    }
    return out;
}

std::string item_key(const json &j) {
    if (j.contains("item_id") && j["item_id"].is_string())
        return j["item_id"].get<std::string>();
    if (j.contains("rule_id") && j["rule_id"].is_string())
        return j["rule_id"].get<std::string>();
    return {};
}

void write_metrics_row(std::ostream &os, const Rule &rule, const RuleMetrics &m) {
    os << render_rule(rule) << '\t' << m.support << '\t' << format_number(m.head_coverage)
       << '\t' << format_number(m.std_confidence) << '\n';
}

} // namespace

int run(int argc, const char *const *argv, std::ostream &out, std::ostream &err) {
    CLI::App app{"Knowledge-graph rule explanation workbench"};
    app.name("kgx");
    app.require_subcommand(1);
    app.fallthrough(); // global flags may follow the subcommand
    app.set_config("--config", "", "TOML config file; flags override its values");
    app.allow_config_extras(false);
    app.set_version_flag("--version", "kgx 0.1.0");

    std::uint64_t seed = 0;
    unsigned jobs = 1;
    std::string profile_name = "freebase";
    app.add_option("--seed", seed, "seed for every random choice");
    app.add_option("--jobs", jobs, "parallel workers")->check(CLI::PositiveNumber);
    app.add_option("--profile", profile_name, "dataset profile: freebase, freebase_concat, ogbl")
        ->check(CLI::IsMember({"freebase", "freebase_concat", "ogbl"}));

    std::string triples, types, rules, rules_format = "auto", out_path;
    bool id_types = false;
    auto add_graph = [&](CLI::App *cmd, bool need_types) {
        cmd->add_option("--triples", triples, "tab-separated triples")
            ->required()
            ->check(CLI::ExistingFile);
        if (need_types) {
            cmd->add_option("--types", types, "entity<TAB>type file")->check(CLI::ExistingFile);
            cmd->add_flag("--id-types", id_types, "type entities by their id prefix");
        }
    };
    auto add_rules = [&](CLI::App *cmd) {
        cmd->add_option("--rules", rules, "rule file (machine rules or miner TSV)")
            ->required()
            ->check(CLI::ExistingFile);
        cmd->add_option("--rules-format", rules_format, "auto, machine or miner")
            ->check(CLI::IsMember({"auto", "machine", "miner"}));
    };
    auto add_out = [&](CLI::App *cmd) {
        cmd->add_option("--out", out_path, "output file (default stdout)");
    };

    auto *ingest = app.add_subcommand("ingest", "load triples (and types) and report counts");
    add_graph(ingest, true);

    MiningThresholds th;
    auto *mine = app.add_subcommand("mine", "mine closed rules with up to three atoms");
    add_graph(mine, false);
    mine->add_option("--min-hc", th.min_head_coverage, "minimum head coverage");
    mine->add_option("--min-conf", th.min_std_confidence, "minimum standard confidence");
    mine->add_option("--max-atoms", th.max_atoms, "atoms per rule, head included")
        ->check(CLI::Range(2, 3));
    add_out(mine);

    auto *metrics = app.add_subcommand("metrics", "support, head coverage, std confidence");
    add_graph(metrics, false);
    add_rules(metrics);
    add_out(metrics);

    std::size_t k = 3;
    auto *instances = app.add_subcommand("instances", "sample grounded instances per rule");
    add_graph(instances, false);
    add_rules(instances);
    instances->add_option("-k,--count", k, "instances per rule");
    add_out(instances);

    auto *type_of = app.add_subcommand("typeof", "variable types from the schema");
    add_graph(type_of, true);
    add_rules(type_of);
    add_out(type_of);

    ModelFlags generator, typer, judge_model;
    GatewayFlags gw;
    std::string strategy = "zero_shot", log_path, exemplars_path;
    bool resume = false, dump_prompt = false;
    auto *explain = app.add_subcommand("explain", "generate explanations for a rule file");
    add_graph(explain, true);
    add_rules(explain);
    add_gateway_flags(explain, gw);
    add_model_flags(explain, generator, "", "generator");
    add_model_flags(explain, typer, "typer-", "type-inference");
    explain->add_option("--strategy", strategy, "zero_shot, few_shot, typed or cot")
        ->check(CLI::IsMember({"zero_shot", "few_shot", "typed", "cot"}));
    explain->add_option("--instances", k, "grounded instances per record");
    explain->add_option("--exemplars", exemplars_path, "few-shot exemplar JSON")
        ->check(CLI::ExistingFile);
    explain->add_option("--log", log_path, "failure log JSONL (default <out>.errors.jsonl)");
    explain->add_flag("--resume", resume, "skip rules already present in --out");
    explain->add_flag("--dump-prompt", dump_prompt,
                      "print the rendered generation prompts instead of calling the model");
    explain->add_option("--out", out_path, "explanation records JSONL (required unless "
                                           "--dump-prompt)");

    std::string records_path, verdicts_path, annotations_path;
    unsigned runs = 3;
    auto *judge = app.add_subcommand("judge", "score explanation records with a judge model");
    judge->add_option("--records", records_path, "explanation records JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    add_gateway_flags(judge, gw);
    add_model_flags(judge, judge_model, "judge-", "judge");
    judge->add_option("--runs", runs, "scoring runs per item")->check(CLI::Range(1, 10));
    judge->add_option("--exemplars", exemplars_path, "judge exemplar JSON")
        ->check(CLI::ExistingFile);
    add_out(judge);

    std::string candidates_path, references_path, scorer;
    auto *eval = app.add_subcommand("eval", "BLEU, ROUGE-L, METEOR and faithfulness");
    eval->add_option("--candidates", candidates_path, "JSONL with item_id/rule_id, explanation")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--references", references_path,
                     "JSONL with item_id/rule_id and reference or references")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--scorer-endpoint", scorer, "perplexity scorer URL");
    add_out(eval);

    auto *agree = app.add_subcommand("agree", "judge versus human agreement");
    agree->add_option("--verdicts", verdicts_path, "verdict JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    agree->add_option("--annotations", annotations_path, "annotation JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    add_out(agree);

    GateConfig gate_config;
    SplitSizes sizes;
    std::string event_log, split_name = "test";
    std::size_t annotators = 1;
    auto *dataset = app.add_subcommand("dataset", "curate ground-truth datasets");
    dataset->require_subcommand(1);
    auto add_log = [&](CLI::App *cmd) {
        cmd->add_option("--log", event_log, "curation event log (JSONL)")->required();
        cmd->add_option("--annotators", annotators, "annotations needed to resolve an item")
            ->check(CLI::IsMember({1, 3}));
    };
    auto *ds_build = dataset->add_subcommand("build", "gate judged records into the event log");
    add_log(ds_build);
    ds_build->add_option("--records", records_path, "explanation records JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    ds_build->add_option("--verdicts", verdicts_path, "verdict JSONL")->check(CLI::ExistingFile);
    ds_build->add_option("--threshold", gate_config.threshold, "gate threshold")
        ->check(CLI::Range(1.0, 5.0));
    ds_build->add_option("--max-spread", gate_config.max_spread, "largest accepted run spread")
        ->check(CLI::Range(0.0, 4.0));
    auto *ds_annotate = dataset->add_subcommand("annotate", "apply annotation records");
    add_log(ds_annotate);
    ds_annotate->add_option("--annotations", annotations_path, "annotation JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    auto add_sizes = [&](CLI::App *cmd) {
        cmd->add_option("--train", sizes.train, "train split size");
        cmd->add_option("--val", sizes.val, "validation split size");
        cmd->add_option("--test", sizes.test, "test split size");
    };
    auto *ds_splits = dataset->add_subcommand("splits", "print split membership as TSV");
    add_log(ds_splits);
    add_sizes(ds_splits);
    add_out(ds_splits);
    auto *ds_export = dataset->add_subcommand("export", "write one split as chat JSONL");
    add_log(ds_export);
    add_sizes(ds_export);
    ds_export->add_option("--split", split_name, "train, val or test")
        ->check(CLI::IsMember({"train", "val", "test"}));
    add_out(ds_export);

    ServiceOptions service;
    int lease_minutes = 30;
    auto *serve = app.add_subcommand("serve", "HTTP API for the review loop");
    add_log(serve);
    add_sizes(serve);
    serve->add_option("--host", service.host, "bind address");
    serve->add_option("--port", service.port, "port (0 picks one)");
    serve->add_option("--lease-minutes", lease_minutes, "claim lease")->check(CLI::PositiveNumber);

    for (auto *cmd : app.get_subcommands({})) {
        cmd->configurable();
        for (auto *sub : cmd->get_subcommands({}))
            sub->configurable();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        const auto profile = parse_profile(profile_name);
        const auto format = parse_format(rules_format);

        if (*ingest) {
            const auto g = load_graph(triples, types, id_types);
            out << "facts\t" << g.store->fact_count() << '\n'
                << "entities\t" << g.store->entities().size() << '\n'
                << "predicates\t" << g.store->predicates().size() << '\n';
            if (g.catalog)
                out << "type_assignments\t" << g.catalog->assignment_count() << '\n'
                    << "types\t" << g.catalog->types().size() << '\n';
            return 0;
        }
        if (*mine) {
            const auto g = load_graph(triples, "", false);
            Output o(out_path, out);
            *o << "rule\tsupport\thead_coverage\tstd_confidence\n";
            for (const auto &m : mine_rules(*g.store, th, jobs))
                write_metrics_row(*o, m.rule, m.metrics);
            return 0;
        }
        if (*metrics) {
            const auto g = load_graph(triples, "", false);
            const auto rows = read_rules_file(rules, format);
            Output o(out_path, out);
            *o << "rule\tsupport\thead_coverage\tstd_confidence\n";
            for (const auto &r : rows)
                write_metrics_row(*o, r.rule, compute_metrics(r.rule, *g.store));
            return 0;
        }
        if (*instances) {
            const auto g = load_graph(triples, "", false);
            const auto rows = read_rules_file(rules, format);
            Output o(out_path, out);
            for (const auto &r : rows) {
                const auto id = r.rule.id();
                ordered_json j;
                j["rule_id"] = id;
                j["rule"] = render_rule(r.rule);
                j["instances"] = ordered_json::array();
                for (const auto &gr : sample_instances(r.rule, *g.store, k, rule_seed(seed, id)))
                    j["instances"].push_back(ordered_json(to_json(gr)));
                *o << j.dump() << '\n';
            }
            return 0;
        }
        if (*type_of) {
            const auto g = load_graph(triples, types, id_types);
            if (!g.catalog)
                throw Error("typeof needs --types or --id-types");
            const auto rows = read_rules_file(rules, format);
            Output o(out_path, out);
            *o << "rule_id\tvariable\ttype\tmethod\n";
            for (const auto &r : rows)
                for (const auto &t : schema_variable_types(r.rule, *g.store, *g.catalog))
                    *o << r.rule.id() << '\t' << t.variable << '\t' << t.type_label << '\t'
                       << to_string(t.method) << '\n';
            return 0;
        }
        if (*explain) {
            const auto g = load_graph(triples, types, id_types);
            if (dump_prompt && gw.fixtures.empty())
                gw.mode = "live"; // only a model-typing fallback would call out
            auto gateway = make_gateway(gw, jobs);
            ExplainContext ctx;
            ctx.store = g.store.get();
            ctx.catalog = g.catalog.get();
            ctx.gateway = gateway.get();
            ctx.generator = generator.config();
            if (!typer.name.empty()) {
                if (typer.endpoint.empty())
                    typer.endpoint = generator.endpoint;
                if (typer.api_key_env.empty())
                    typer.api_key_env = generator.api_key_env;
                ctx.typer = typer.config();
            }
            ctx.profile = profile;
            ctx.strategy = parse_strategy(strategy);
            ctx.seed = seed;
            ctx.instances = k;
            if (!exemplars_path.empty())
                ctx.exemplars = load_exemplars(exemplars_path);
            if (dump_prompt) {
                Output o(out_path, out);
                for (const auto &r : read_rules_file(rules, format))
                    *o << "### " << r.rule.id() << '\n' << prepare_record(r.rule, ctx).prompt;
                return 0;
            }
            if (out_path.empty())
                throw CLI::RequiredError("--out");
            BatchOptions options;
            options.resume = resume;
            options.jobs = jobs;
            const auto summary = explain_batch(
                rules, out_path, log_path.empty() ? out_path + ".errors.jsonl" : log_path, ctx,
                options);
            err << "explained " << summary.ok << ", failed " << summary.failed << ", skipped "
                << summary.skipped << '\n';
            return summary.failed == 0 ? 0 : 1;
        }
        if (*judge) {
            const auto records = read_records_file(records_path);
            auto gateway = make_gateway(gw, jobs);
            const auto config = judge_model.config();
            JudgeOptions options;
            options.runs = runs;
            if (!exemplars_path.empty())
                options.exemplars = load_judge_exemplars(exemplars_path);
            for (const auto &r : records)
                if (r.model_name == config.model_name) {
                    err << "warning: judge model " << config.model_name
                        << " also generated the explanations; scores may be biased\n";
                    break;
                }
            std::vector<std::optional<JudgeVerdict>> verdicts(records.size());
            std::vector<std::string> errors(records.size());
            std::atomic<std::size_t> next{0};
            auto worker = [&] {
                for (std::size_t i = next++; i < records.size(); i = next++) {
                    try {
                        verdicts[i] = judge_explanation(records[i], *gateway, config, options);
                    } catch (const std::exception &e) {
                        errors[i] = e.what();
                    }
                }
            };
            {
                std::vector<std::jthread> pool;
                for (unsigned t = 1; t < jobs; ++t)
                    pool.emplace_back(worker);
                worker();
            }
            Output o(out_path, out);
            std::size_t failed = 0;
            for (std::size_t i = 0; i < records.size(); ++i) {
                if (verdicts[i]) {
                    *o << to_json(*verdicts[i]).dump() << '\n';
                } else {
                    ++failed;
                    err << "error: " << records[i].item_id() << ": " << errors[i] << '\n';
                }
            }
            return failed == 0 ? 0 : 1;
        }
        if (*eval) {
            std::map<std::string, std::vector<std::string>> refs;
            for (const auto &j : read_jsonl(references_path)) {
                auto &list = refs[item_key(j)];
                if (j.contains("references"))
                    for (const auto &r : j["references"])
                        list.push_back(r.get<std::string>());
                else
                    list.push_back(j.at("reference").get<std::string>());
            }
            Output o(out_path, out);
            *o << "item\tbleu\trouge_l_f1\tmeteor\tmissed_entities\tmissed_relations\t"
                  "hallucinated_entities\thallucinated_relations\tperplexity\n";
            BleuStats corpus;
            double rouge_sum = 0, meteor_sum = 0;
            std::size_t n = 0;
            for (const auto &c : read_jsonl(candidates_path)) {
                const auto key = item_key(c);
                const auto it = refs.find(key);
                if (it == refs.end() || it->second.empty()) {
                    err << "warning: no reference for " << key << '\n';
                    continue;
                }
                const auto cand = c.at("explanation").get<std::string>();
                const auto &rs = it->second;
                double rouge_best = 0, meteor_best = 0;
                for (const auto &r : rs) {
                    rouge_best = std::max(rouge_best, rouge_l(cand, r).f1);
                    meteor_best = std::max(meteor_best, meteor(cand, r));
                }
                corpus.add(cand, rs);
                rouge_sum += rouge_best;
                meteor_sum += meteor_best;
                ++n;
                std::string faith = "NA\tNA\tNA\tNA";
                if (c.contains("rule_text")) {
                    const auto f = faithfulness(parse_rule(c["rule_text"].get<std::string>()), cand);
                    faith = fmt::format("{}\t{}\t{}\t{}", f.missed_entity_count(),
                                        f.missed_relation_count(), f.hallucinated_entity_count(),
                                        f.hallucinated_relation_count());
                }
                std::string ppl = "NA";
                if (!scorer.empty()) {
                    const auto p = external_perplexity(cand, scorer);
                    if (p.skipped())
                        err << "warning: " << p.warning << '\n';
                    else
                        ppl = format_number(*p.perplexity);
                }
                *o << key << '\t' << format_number(bleu(cand, rs)) << '\t'
                   << format_number(rouge_best) << '\t' << format_number(meteor_best) << '\t'
                   << faith << '\t' << ppl << '\n';
            }
            if (n > 0)
                *o << "corpus\t" << format_number(corpus.score()) << '\t'
                   << format_number(rouge_sum / static_cast<double>(n)) << '\t'
                   << format_number(meteor_sum / static_cast<double>(n))
                   << "\tNA\tNA\tNA\tNA\tNA\n";
            return 0;
        }
        if (*agree) {
            const auto report =
                agreement(read_verdicts_file(verdicts_path), read_annotations_file(annotations_path));
            Output o(out_path, out);
            *o << to_json(report).dump(2) << '\n';
            return 0;
        }

        CurationOptions copts;
        copts.policy.required_annotations = annotators;
        copts.lease = std::chrono::minutes(lease_minutes);
        if (*ds_build) {
            CurationStore store(event_log, copts);
            std::vector<JudgeVerdict> verdicts;
            if (!verdicts_path.empty())
                verdicts = read_verdicts_file(verdicts_path);
            const auto s =
                build_dataset(store, read_records_file(records_path), verdicts, gate_config);
            err << "accepted " << s.accepted << ", queued for review " << s.review
                << ", already present " << s.existing << '\n';
            return 0;
        }
        if (*ds_annotate) {
            CurationStore store(event_log, copts);
            std::size_t resolved = 0;
            for (auto a : read_annotations_file(annotations_path)) {
                store.claim(a.item_id, a.annotator_id);
                const auto item = store.submit(a.item_id, a);
                resolved += item.status == ReviewStatus::resolved ? 1 : 0;
            }
            err << "resolved " << resolved << " items\n";
            return 0;
        }
        if (*ds_splits) {
            CurationStore store(event_log, copts);
            const auto splits = build_splits(store.entries(), sizes, seed);
            Output o(out_path, out);
            *o << "split\titem_id\tprovenance\n";
            for (const char *name : {"train", "val", "test"})
                for (const auto &e : splits.get(name))
                    *o << name << '\t' << e.item_id << '\t' << to_string(e.provenance) << '\n';
            return 0;
        }
        if (*ds_export) {
            CurationStore store(event_log, copts);
            const auto entries = store.entries();
            if (entries.empty())
                throw Error("the curation store holds no entries: " + event_log);
            const auto splits = build_splits(entries, sizes, seed);
            Output o(out_path, out);
            *o << export_jsonl(splits.get(split_name), profile);
            return 0;
        }
        if (*serve) {
            CurationStore store(event_log, copts);
            service.profile = profile;
            service.split_sizes = sizes;
            service.seed = seed;
            ApiServer server(store, service);
            const int port = server.bind();
            err << "serving on http://" << service.host << ":" << port << "/api\n";
            server.run();
            return 0;
        }
    } catch (const CLI::Error &e) {
        err << e.what() << '\n';
        return 2;
    } catch (const std::exception &e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    std::vector<const char *> argv;
    argv.reserve(args.size() + 1);
    for (const auto &a : args)
        argv.push_back(a.c_str());
    argv.push_back(nullptr);
    return run(static_cast<int>(args.size()), argv.data(), out, err);
}

} // namespace kgx::cli
