#include "tsvat/service.hpp"

#include <httplib.h>

#include <thread>

#include "tsvat/error.hpp"
#include "tsvat/hash.hpp"

namespace tsvat::service {
namespace {

using json = nlohmann::json;

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound:
      return 404;
    case ErrorCode::ChecksumMismatch:
    case ErrorCode::IoError:
      return 500;
    default:
      return 400;
  }
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& msg) {
  send_json(res, {{"error", code}, {"message", msg}}, status);
}

void send_bytes(httplib::Response& res, const store::Bytes& b) {
  res.set_header("X-Checksum-SHA256", sha256_hex(std::span<const std::uint8_t>(b)));
  res.set_content(std::string(b.begin(), b.end()), "application/octet-stream");
}

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    fail(ErrorCode::ValidationError, std::string("request body is not JSON: ") + e.what());
  }
}

template <class T>
std::optional<T> query_number(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) return std::nullopt;
  const std::string v = req.get_param_value(key);
  try {
    std::size_t used = 0;
    T out;
    if constexpr (std::is_floating_point_v<T>) {
      out = static_cast<T>(std::stod(v, &used));
    } else {
      out = static_cast<T>(std::stoll(v, &used));
    }
    require(used == v.size(), ErrorCode::ValidationError, "");
    return out;
  } catch (const std::exception&) {
    fail(ErrorCode::ValidationError, std::string("query parameter ") + key + " is not a number");
  }
}

// Wraps a handler so library errors become structured responses.
template <class Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      send_error(res, status_for(e.code()), std::string(to_string(e.code())), e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "InternalError", e.what());
    }
  };
}

}  // namespace

struct Server::Impl {
  explicit Impl(workbench::Workbench& w) : wb(w) {}
  workbench::Workbench& wb;
  httplib::Server http;
  std::thread thread;
};

Server::Server(workbench::Workbench& wb) : impl_(std::make_unique<Impl>(wb)) {
  auto& http = impl_->http;
  auto& w = impl_->wb;

  http.Get("/datasets", guarded([&w](const httplib::Request&, httplib::Response& res) {
    send_json(res, w.list_datasets());
  }));
  http.Post("/datasets", guarded([&w](const httplib::Request& req, httplib::Response& res) {
    send_json(res, w.create_dataset(parse_body(req)), 201);
  }));
  http.Get(R"(/datasets/([^/]+)/values)",
           guarded([&w](const httplib::Request& req, httplib::Response& res) {
             const auto bucket = query_number<Index>(req, "bucket").value_or(1);
             send_json(res, w.dataset_values(req.matches[1], query_number<Index>(req, "from"),
                                             query_number<Index>(req, "to"), bucket));
           }));
  http.Post("/jobs", guarded([&w](const httplib::Request& req, httplib::Response& res) {
    const auto id = w.submit(parse_body(req));
    send_json(res, w.poll(id).to_json(), 202);
  }));
  http.Get(R"(/jobs/([^/]+))", guarded([&w](const httplib::Request& req, httplib::Response& res) {
    send_json(res, w.poll(req.matches[1]).to_json());
  }));
  http.Get(R"(/runs/([^/]+)/manifest)",
           guarded([&w](const httplib::Request& req, httplib::Response& res) {
             send_json(res, w.manifest(req.matches[1]));
           }));
  http.Get(R"(/runs/([^/]+)/embeddings)",
           guarded([&w](const httplib::Request& req, httplib::Response& res) {
             send_bytes(res, w.embeddings(req.matches[1]));
           }));
  http.Get(R"(/runs/([^/]+)/projection)",
           guarded([&w](const httplib::Request& req, httplib::Response& res) {
             workbench::ProjectionQuery q;
             if (req.has_param("method")) q.method = req.get_param_value("method");
             q.perplexity = query_number<double>(req, "perplexity");
             if (const auto s = query_number<long long>(req, "seed")) {
               require(*s >= 0, ErrorCode::ValidationError, "seed must be nonnegative");
               q.seed = static_cast<std::uint64_t>(*s);
             }
             send_bytes(res, w.projection(req.matches[1], q));
           }));
  http.Post(R"(/runs/([^/]+)/selection)",
            guarded([&w](const httplib::Request& req, httplib::Response& res) {
              const json body = parse_body(req);
              const json& list = body.is_array() ? body : body.value("indices", json::array());
              std::vector<Index> indices;
              for (const auto& v : list) {
                require(v.is_number_integer(), ErrorCode::ValidationError,
                        "indices must be integers");
                indices.push_back(v.get<Index>());
              }
              send_json(res, w.selection(req.matches[1], indices));
            }));
  http.Get(R"(/sweeps/([^/]+)/table)",
           guarded([&w](const httplib::Request& req, httplib::Response& res) {
             res.set_content(w.sweep_table(req.matches[1]), "text/csv");
           }));
  http.Get(R"(/sweeps/([^/]+)/report)",
           guarded([&w](const httplib::Request& req, httplib::Response& res) {
             send_json(res, w.sweep_report(req.matches[1]));
           }));
}

Server::~Server() { stop(); }

int Server::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->http.bind_to_any_port(host) : (impl_->http.bind_to_port(host, port) ? port : -1);
  require(bound > 0, ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void Server::listen() { impl_->http.listen_after_bind(); }

int Server::start(const std::string& host, int port) {
  const int bound = bind(host, port);
  impl_->thread = std::thread([this] { listen(); });
  impl_->http.wait_until_ready();
  return bound;
}

void Server::stop() {
  impl_->http.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace tsvat::service
