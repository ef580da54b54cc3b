// Regenerates tests/fixtures/e2e/llm by running explain and judge in record mode against the
// local stub chat server. Usage: kgx_record_fixtures [fixture-dir]
#include "kgx/cli.hpp"
#include "test_support.hpp"

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using kgx::testkit::fixture_path;

int main(int argc, char **argv) {
    const fs::path dir = argc > 1 ? fs::path(argv[1]) : fixture_path("e2e/llm");
    fs::create_directories(dir);
    kgx::testkit::StubChatServer server;
    kgx::testkit::TempDir tmp;
    const auto e2e = [](const char *f) { return fixture_path(std::string("e2e/") + f).string(); };

    const std::vector<std::string> explain = {
        "kgx",         "explain",      "--mode",          "record",
        "--fixtures",  dir.string(),   "--triples",       e2e("kg.tsv"),
        "--types",     e2e("types.tsv"), "--rules",       e2e("rules.tsv"),
        "--strategy",  "cot",          "--model",         "stub-generator",
        "--endpoint",  server.endpoint(), "--seed",       "7",
        "--out",       tmp.file("records.jsonl")};
    if (int rc = kgx::cli::run(explain, std::cout, std::cerr); rc != 0)
        return rc;

    const std::vector<std::string> judge = {
        "kgx",           "judge",          "--mode",           "record",
        "--fixtures",    dir.string(),     "--records",        tmp.file("records.jsonl"),
        "--judge-model", "stub-judge",     "--judge-endpoint", server.endpoint(),
        "--seed",        "7",              "--out",            tmp.file("verdicts.jsonl")};
    if (int rc = kgx::cli::run(judge, std::cout, std::cerr); rc != 0)
        return rc;

    std::cout << "recorded " << server.requests() << " calls into " << dir << '\n';
    return 0;
}
