#include <gtest/gtest.h>

#include "kgx/llm_gateway.hpp"
#include "kgx/typing.hpp"
#include "test_support.hpp"

using namespace kgx;
using kgx::testkit::fixture_path;

namespace {

struct Loaded {
    TripleStore store;
    TypeCatalog catalog;
    Rule rule;
};

Loaded load(const std::string &name, bool with_types = true) {
    Loaded l;
    l.store = ingest_triples_file(fixture_path(name + "/kg.tsv").string());
    l.catalog = with_types
                    ? ingest_entity_types_file(fixture_path(name + "/types.tsv").string(), l.store)
                    : synthesize_types_from_ids(l.store);
    l.rule = read_rules_file(fixture_path(name + "/rules.tsv").string())[0].rule;
    return l;
}

// Replies with a fixed script, one entry per call.
class ScriptedTransport final : public Transport {
  public:
    explicit ScriptedTransport(std::vector<std::string> replies) : replies_(std::move(replies)) {}
    HttpResponse post_json(const std::string &, const std::string &,
                           const std::map<std::string, std::string> &) override {
        const auto &r = replies_[std::min(calls, replies_.size() - 1)];
        ++calls;
        return {200, testkit::chat_response_body(r, "typer"), ""};
    }
    std::size_t calls = 0;

  private:
    std::vector<std::string> replies_;
};

ModelConfig typer() {
    ModelConfig c;
    c.model_name = "typer";
    c.endpoint = "http://127.0.0.1:9/v1";
    return c;
}

} // namespace

TEST(SchemaTyping, WorldSeriesPrefersSpecificType) {
    const auto l = load("worldseries");
    const auto types = schema_variable_types(l.rule, l.store, l.catalog);
    ASSERT_EQ(types.size(), 1u);
    EXPECT_EQ(types[0].variable, "?b");
    EXPECT_EQ(types[0].type_label, "/sports/sports_championship_event");
    EXPECT_EQ(types[0].method, TypingMethod::schema);
    EXPECT_FALSE(types[0].confidence_note);
}

TEST(SchemaTyping, OgblIdPrefixes) {
    const auto l = load("ogbl", false);
    const auto types = schema_variable_types(l.rule, l.store, l.catalog);
    ASSERT_EQ(types.size(), 3u);
    std::map<std::string, std::string> by_var;
    for (const auto &t : types)
        by_var[t.variable] = t.type_label;
    EXPECT_EQ(by_var["?a"], "drug");
    EXPECT_EQ(by_var["?b"], "disease");
    EXPECT_EQ(by_var["?c"], "protein");
}

TEST(SchemaTyping, Deterministic) {
    const auto l = load("spaceflight");
    EXPECT_EQ(schema_variable_types(l.rule, l.store, l.catalog),
              schema_variable_types(l.rule, l.store, l.catalog));
}

TEST(SchemaTyping, UntypedEntitiesWithoutPrefixFail) {
    const auto l = load("family5", false);
    const auto rule = read_rules_file(fixture_path("family5/rules.tsv").string())[0].rule;
    EXPECT_THROW(schema_variable_types(rule, l.store, TypeCatalog(l.store)), TypingError);
}

TEST(LlmTyping, ReplayedFixture) {
    testkit::TempDir dir;
    const auto l = load("spaceflight");
    const auto instances = sample_instances(l.rule, l.store, 1, 0);
    const auto prompt = build_typing_prompt(l.rule, instances);
    EXPECT_NE(prompt.find("RD-161P"), std::string::npos);

    FixtureStore fixtures(dir.path());
    Completion c;
    c.text = "?a = rocket engine";
    c.model_name = "typer";
    fixtures.save(fixture_key(prompt, typer()),
                  {{"prompt", prompt}, {"config", to_json(typer())}, {"completion", to_json(c)}});

    LlmGateway gateway(GatewayMode::replay, std::make_shared<FixtureStore>(dir.path()), nullptr);
    const auto types = llm_variable_types(l.rule, instances, gateway, typer());
    ASSERT_EQ(types.size(), 1u);
    EXPECT_EQ(types[0].type_label, "rocket engine");
    EXPECT_EQ(types[0].method, TypingMethod::llm_inferred);
}

TEST(LlmTyping, RetriesUnparseableReplies) {
    const auto l = load("spaceflight");
    const auto instances = sample_instances(l.rule, l.store, 1, 0);
    auto transport = std::make_shared<ScriptedTransport>(
        std::vector<std::string>{"I think it is an engine.", "?a = rocket engine"});
    LlmGateway gateway(GatewayMode::live, nullptr, transport);
    EXPECT_EQ(llm_variable_types(l.rule, instances, gateway, typer())[0].type_label,
              "rocket engine");
    EXPECT_EQ(transport->calls, 2u);

    auto hopeless = std::make_shared<ScriptedTransport>(std::vector<std::string>{"no idea"});
    LlmGateway g2(GatewayMode::live, nullptr, hopeless);
    EXPECT_THROW(llm_variable_types(l.rule, instances, g2, typer()), TypingError);
    EXPECT_EQ(hopeless->calls, 3u);
}

TEST(ParseTypingCompletion, RequiresEveryVariable) {
    const std::vector<std::string> vars{"?a", "?b"};
    const auto t = parse_typing_completion("?a = film\n?zz = ignored\n?b = person\n", vars);
    ASSERT_EQ(t.size(), 2u);
    EXPECT_EQ(t[1].type_label, "person");
    EXPECT_THROW(parse_typing_completion("?a = film\n", vars), TypingError);
}

TEST(Reconcile, FlagsOverspecificInference) {
    const std::vector<TypedVariable> schema{{"?b", "/sports/pro_athlete", TypingMethod::schema, {}}};
    const std::vector<TypedVariable> inferred{
        {"?b", "tennis player", TypingMethod::llm_inferred, {}}};
    const auto out = reconcile_types(schema, inferred);
    ASSERT_TRUE(out[0].confidence_note);
    EXPECT_NE(out[0].confidence_note->find("/sports/pro_athlete"), std::string::npos);

    const std::vector<TypedVariable> agree{{"?b", "pro athlete", TypingMethod::llm_inferred, {}}};
    EXPECT_FALSE(reconcile_types(schema, agree)[0].confidence_note);
}

TEST(TypedVariableJson, RoundTrip) {
    TypedVariable v{"?a", "drug", TypingMethod::id_prefix, std::string("note")};
    EXPECT_EQ(typed_variable_from_json(to_json(v)), v);
}
