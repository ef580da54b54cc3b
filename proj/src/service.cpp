#include "kgx/service.hpp"

#include <regex>
#include <thread>

#include <httplib.h>

#include "kgx/text.hpp"

namespace kgx {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

ApiResponse api_error(int status, const std::string &code, const std::string &message) {
    ordered_json j;
    j["code"] = code;
    j["message"] = message;
    return {status, "application/json", j.dump()};
}

ApiResponse ok_json(const ordered_json &j) { return {200, "application/json", j.dump()}; }

std::string find_or(const std::map<std::string, std::string> &m, const std::string &key) {
    const auto it = m.find(key);
    return it == m.end() ? std::string() : it->second;
}

ApiResponse route(CurationStore &store, const ServiceOptions &options, const ApiRequest &req) {
    static const std::regex item_re(R"(^/api/items/([^/]+)$)");
    static const std::regex annotation_re(R"(^/api/items/([^/]+)/annotation$)");
    static const std::regex export_re(R"(^/api/export/([^/]+)$)");
    std::smatch m;

    if (req.method == "GET" && req.path == "/api/queue/next") {
        auto annotator = find_or(req.query, "annotator");
        if (annotator.empty())
            annotator = find_or(req.headers, "x-annotator");
        if (annotator.empty())
            return api_error(400, "validation", "annotator is required");
        const auto item = store.claim_next(annotator);
        ordered_json j;
        j["item"] = item ? to_json(*item) : ordered_json(nullptr);
        return ok_json(j);
    }
    if (req.method == "GET" && std::regex_match(req.path, m, item_re)) {
        const auto item = store.item(m[1].str());
        if (!item)
            return api_error(404, "not_found", "no item " + m[1].str());
        return ok_json(to_json(*item));
    }
    if (req.method == "POST" && std::regex_match(req.path, m, annotation_re)) {
        const auto body = json::parse(req.body, nullptr, false);
        if (body.is_discarded())
            return api_error(400, "validation", "request body is not valid JSON");
        AnnotationRecord a = annotation_from_json(body);
        for (const auto &fallback :
             {find_or(req.query, "annotator"), find_or(req.headers, "x-annotator")})
            if (a.annotator_id.empty())
                a.annotator_id = fallback;
        if (!a.item_id.empty() && a.item_id != m[1].str())
            return api_error(400, "validation", "item_id in body does not match the URL");
        a.item_id = m[1].str();
        const auto item = store.submit(m[1].str(), a);
        ordered_json j;
        j["item_id"] = item.item_id;
        j["status"] = to_string(item.status);
        if (item.status == ReviewStatus::resolved)
            j["provenance"] = to_string(resolved_entry(item).provenance);
        return ok_json(j);
    }
    if (req.method == "GET" && req.path == "/api/items") {
        std::optional<ReviewStatus> status;
        if (const auto s = find_or(req.query, "status"); !s.empty()) {
            try {
                status = parse_review_status(s);
            } catch (const Error &e) {
                return api_error(400, "validation", e.what());
            }
        }
        ordered_json arr = ordered_json::array();
        for (const auto &item : store.items(status))
            arr.push_back(to_json(item));
        ordered_json j;
        j["items"] = arr;
        return ok_json(j);
    }
    if (req.method == "GET" && std::regex_match(req.path, m, export_re)) {
        const auto name = m[1].str();
        if (name != "train" && name != "val" && name != "test")
            return api_error(404, "not_found", "no split " + name);
        const auto splits = build_splits(store.entries(), options.split_sizes, options.seed);
        return {200, "application/x-ndjson", export_jsonl(splits.get(name), options.profile)};
    }
    if (req.method == "GET" && req.path == "/api/stats")
        return ok_json(to_json(store.stats()));
    return api_error(404, "not_found", "no route for " + req.method + " " + req.path);
}

} // namespace

ApiResponse handle_api_request(CurationStore &store, const ServiceOptions &options,
                               const ApiRequest &request) {
    try {
        return route(store, options, request);
    } catch (const NotFoundError &e) {
        return api_error(404, "not_found", e.what());
    } catch (const ConflictError &e) {
        return api_error(409, "conflict", e.what());
    } catch (const SplitError &e) {
        return api_error(409, "conflict", e.what());
    } catch (const ValidationError &e) {
        return api_error(400, "validation", e.what());
    } catch (const std::exception &e) {
        return api_error(500, "internal", e.what());
    }
}

struct ApiServer::Impl {
    CurationStore &store;
    ServiceOptions options;
    httplib::Server server;
    std::thread thread;
    int port = -1;

    Impl(CurationStore &s, ServiceOptions o) : store(s), options(std::move(o)) {
        auto handler = [this](const httplib::Request &req, httplib::Response &res) {
            ApiRequest r;
            r.method = req.method;
            r.path = req.path;
            for (const auto &[k, v] : req.params)
                r.query.emplace(k, v);
            for (const auto &[k, v] : req.headers)
                r.headers.emplace(text::to_lower(k), v);
            r.body = req.body;
            const auto out = handle_api_request(store, options, r);
            res.status = out.status;
            res.set_content(out.body, out.content_type);
        };
        server.Get(R"(/api/.*)", handler);
        server.Post(R"(/api/.*)", handler);
        server.set_error_handler([](const httplib::Request &req, httplib::Response &res) {
            if (!res.body.empty())
                return;
            const auto err = api_error(res.status == 404 ? 404 : res.status,
                                       res.status == 404 ? "not_found" : "internal",
                                       "no route for " + req.method + " " + req.path);
            res.set_content(err.body, err.content_type);
        });
    }
};

ApiServer::ApiServer(CurationStore &store, ServiceOptions options)
    : impl_(std::make_unique<Impl>(store, std::move(options))) {}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind() {
    if (impl_->port >= 0)
        return impl_->port;
    if (impl_->options.port == 0) {
        impl_->port = impl_->server.bind_to_any_port(impl_->options.host);
    } else if (impl_->server.bind_to_port(impl_->options.host, impl_->options.port)) {
        impl_->port = impl_->options.port;
    }
    if (impl_->port < 0)
        throw Error("cannot bind " + impl_->options.host + ":" +
                    std::to_string(impl_->options.port));
    return impl_->port;
}

void ApiServer::run() {
    bind();
    impl_->server.listen_after_bind();
}

int ApiServer::start() {
    const int port = bind();
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return port;
}

void ApiServer::stop() {
    if (!impl_)
        return;
    impl_->server.stop();
    if (impl_->thread.joinable())
        impl_->thread.join();
}

} // namespace kgx
