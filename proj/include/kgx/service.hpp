#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>

#include "kgx/dataset.hpp"

namespace kgx {

struct ServiceOptions {
    std::string host = "127.0.0.1";
    int port = 8080; // 0 picks a free port
    DatasetProfile profile = DatasetProfile::freebase;
    SplitSizes split_sizes;
    std::uint64_t seed = 0;
};

struct ApiRequest {
    std::string method;
    std::string path;
    std::map<std::string, std::string> query;
    std::map<std::string, std::string> headers; // lowercase names
    std::string body;
};

struct ApiResponse {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
};

// Routes one request against the curation store. Errors come back as
// {"code": not_found|conflict|validation|internal, "message": ...}.
ApiResponse handle_api_request(CurationStore &store, const ServiceOptions &options,
                               const ApiRequest &request);

// HTTP front end for handle_api_request.
class ApiServer {
  public:
    ApiServer(CurationStore &store, ServiceOptions options);
    ~ApiServer();
    ApiServer(const ApiServer &) = delete;
    ApiServer &operator=(const ApiServer &) = delete;

    // Binds the socket and returns the port.
    int bind();
    // Serves until stop(); binds first when needed.
    void run();
    // bind() + run() on a background thread.
    int start();
    void stop();

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace kgx
