#pragma once

#include <memory>
#include <string>

#include "tsvat/workbench.hpp"

namespace tsvat::service {

/// HTTP front end over a Workbench. Handlers only read the store or enqueue
/// jobs, so the server stays responsive while computation runs.
///
///   GET  /datasets                      POST /datasets
///   GET  /datasets/{id}/values?from&to&bucket
///   POST /jobs                          GET  /jobs/{id}
///   GET  /runs/{id}/manifest            GET  /runs/{id}/embeddings
///   GET  /runs/{id}/projection?method&perplexity&seed
///   POST /runs/{id}/selection           GET  /sweeps/{id}/table
///   GET  /sweeps/{id}/report
///
/// Errors come back as {"error": code, "message": text} with 400 for
/// validation problems, 404 for unknown ids and 500 otherwise. Binary
/// payloads carry an X-Checksum-SHA256 header.
class Server {
 public:
  explicit Server(workbench::Workbench& wb);
  ~Server();

  /// Binds; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); blocks the caller.
  void listen();
  /// bind() followed by listen() on a background thread.
  int start(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace tsvat::service
