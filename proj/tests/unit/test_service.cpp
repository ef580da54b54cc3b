#include <gtest/gtest.h>

#include <httplib.h>

#include "kgx/service.hpp"
#include "test_support.hpp"

using namespace kgx;
using nlohmann::json;
using kgx::testkit::TempDir;

namespace {

struct Fixture {
    TempDir dir;
    std::int64_t now = 5'000;
    std::unique_ptr<CurationStore> store;
    ServiceOptions options;

    explicit Fixture(int items = 1) {
        CurationOptions o;
        o.lease = std::chrono::milliseconds(100);
        o.now_ms = [this] { return now; };
        o.clock = [] { return std::string("2024-01-01T00:00:00Z"); };
        store = std::make_unique<CurationStore>(dir.path() / "events.jsonl", o);
        options.split_sizes = {1, 1, 1};
        for (int i = 0; i < items; ++i) {
            ReviewItem item;
            item.item_id = "item" + std::to_string(i);
            item.draft.item_id = item.item_id;
            item.draft.rule_text = "?a\tp\t?b => ?a\tq" + std::to_string(i) + "\t?b";
            item.draft.explanation = "draft " + std::to_string(i);
            store->add_review(item);
        }
    }

    ApiResponse call(const std::string &method, const std::string &path,
                     std::map<std::string, std::string> query = {}, std::string body = {}) {
        ApiRequest r{method, path, std::move(query), {}, std::move(body)};
        return handle_api_request(*store, options, r);
    }
};

std::string annotation_body(const std::string &who, int correctness,
                            const std::string &edit = "") {
    json j = {{"annotator_id", who}, {"correctness", correctness}, {"clarity", 4},
              {"logicalness", 3}};
    if (!edit.empty())
        j["edited_explanation"] = edit;
    return j.dump();
}

} // namespace

TEST(Api, QueueClaimAndSubmit) {
    Fixture f;
    auto r = f.call("GET", "/api/queue/next", {{"annotator", "a"}});
    ASSERT_EQ(r.status, 200);
    auto j = json::parse(r.body);
    EXPECT_EQ(j["item"]["item_id"], "item0");
    EXPECT_EQ(j["item"]["status"], "in-review");
    EXPECT_FALSE(j["item"]["draft"]["rule_pretty"].get<std::string>().empty());

    // Second claimant sees an empty queue.
    r = f.call("GET", "/api/queue/next", {{"annotator", "b"}});
    EXPECT_TRUE(json::parse(r.body)["item"].is_null());

    r = f.call("POST", "/api/items/item0/annotation", {}, annotation_body("a", 4, "Edited."));
    ASSERT_EQ(r.status, 200) << r.body;
    j = json::parse(r.body);
    EXPECT_EQ(j["status"], "resolved");
    EXPECT_EQ(j["provenance"], "human-edited");

    r = f.call("GET", "/api/items/item0");
    EXPECT_EQ(json::parse(r.body)["annotations"].size(), 1u);
    r = f.call("GET", "/api/items", {{"status", "resolved"}});
    EXPECT_EQ(json::parse(r.body)["items"].size(), 1u);
    r = f.call("GET", "/api/stats");
    EXPECT_EQ(json::parse(r.body)["entries"], 1);
}

TEST(Api, ErrorMapping) {
    Fixture f;
    auto r = f.call("GET", "/api/items/missing");
    EXPECT_EQ(r.status, 404);
    EXPECT_EQ(json::parse(r.body)["code"], "not_found");

    r = f.call("POST", "/api/items/item0/annotation", {}, annotation_body("a", 5));
    EXPECT_EQ(r.status, 409);
    EXPECT_EQ(json::parse(r.body)["code"], "conflict");

    f.call("GET", "/api/queue/next", {{"annotator", "a"}});
    r = f.call("POST", "/api/items/item0/annotation", {}, annotation_body("a", 7));
    EXPECT_EQ(r.status, 400);
    EXPECT_EQ(json::parse(r.body)["code"], "validation");

    r = f.call("POST", "/api/items/item0/annotation", {}, "{not json");
    EXPECT_EQ(r.status, 400);
    r = f.call("GET", "/api/queue/next");
    EXPECT_EQ(r.status, 400);
    r = f.call("GET", "/api/items", {{"status", "weird"}});
    EXPECT_EQ(r.status, 400);
    r = f.call("GET", "/api/export/train");
    EXPECT_EQ(r.status, 409);
    r = f.call("GET", "/api/export/bogus");
    EXPECT_EQ(r.status, 404);
    r = f.call("DELETE", "/api/items/item0");
    EXPECT_EQ(r.status, 404);
}

TEST(Api, LeaseExpiryConflict) {
    Fixture f;
    f.call("GET", "/api/queue/next", {{"annotator", "a"}});
    f.now += 101;
    auto r = f.call("POST", "/api/items/item0/annotation", {}, annotation_body("a", 5));
    EXPECT_EQ(r.status, 409);
    // The draft is intact and the item can be claimed again.
    r = f.call("GET", "/api/queue/next", {{"annotator", "b"}});
    const auto j = json::parse(r.body);
    EXPECT_EQ(j["item"]["item_id"], "item0");
    EXPECT_EQ(j["item"]["draft"]["explanation"], "draft 0");
}

TEST(Api, ExportAfterResolution) {
    Fixture f(3);
    for (int i = 0; i < 3; ++i) {
        f.call("GET", "/api/queue/next", {{"annotator", "a"}});
        f.call("POST", "/api/items/item" + std::to_string(i) + "/annotation", {},
               annotation_body("a", 5));
    }
    // Three human entries and no machine entry: train cannot be filled.
    EXPECT_EQ(f.call("GET", "/api/export/val").status, 409);
    f.options.split_sizes = {0, 1, 2};
    const auto r = f.call("GET", "/api/export/test");
    ASSERT_EQ(r.status, 200);
    EXPECT_EQ(r.content_type, "application/x-ndjson");
    EXPECT_EQ(std::count(r.body.begin(), r.body.end(), '\n'), 2);
}

TEST(ApiServer, ServesOverHttp) {
    Fixture f;
    f.options.port = 0;
    ApiServer server(*f.store, f.options);
    const int port = server.start();
    httplib::Client client("127.0.0.1", port);
    auto res = client.Get("/api/queue/next?annotator=web");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    EXPECT_EQ(json::parse(res->body)["item"]["item_id"], "item0");
    res = client.Post("/api/items/item0/annotation", annotation_body("web", 3, "Edited text."),
                      "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200) << res->body;
    res = client.Get("/api/nothing-here");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 404);
    res = client.Get("/elsewhere");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 404);
    EXPECT_EQ(json::parse(res->body)["code"], "not_found");
    server.stop();
    EXPECT_NE(testkit::read_file(f.dir.path() / "events.jsonl").find("Edited text."),
              std::string::npos);
}
