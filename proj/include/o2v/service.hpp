// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0
//
// Newline-delimited JSON request handling over stdio or TCP. Every request is answered
// from the latest published snapshot.

#pragma once

#include <atomic>
#include <functional>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "o2v/snapshot.hpp"

namespace o2v {

using SnapshotSource = std::function<std::shared_ptr<const MapSnapshot>()>;
using TextEmbedder = std::function<Eigen::VectorXd(const std::string&)>;

/// Stateless request handler.
///   {"op":"query","text":T,"top_n":N}            -> {"instances":[{"id","cosine","center"}],...}
///   {"op":"relevance","text":T,"pose":P,"out":F} -> {"ok":true,"out":F}
///   {"op":"render","pose":P,"out":F}             -> {"ok":true,"out":F}
///   {"op":"stats"}                               -> map counters
/// P is {"frame":id} or 12 numbers (row-major rotation, then translation). Failures
/// produce {"error":message}.
class QueryService {
 public:
  QueryService(SnapshotSource source, TextEmbedder embed);

  /// One response line (without the trailing newline) for one request line.
  [[nodiscard]] std::string handle(const std::string& line) const;

  /// Answers lines from `in` on `out` until end of input.
  void serve_stream(std::istream& in, std::ostream& out) const;

 private:
  SnapshotSource source_;
  TextEmbedder embed_;
};

/// Thread-per-connection TCP front end.
class TcpServer {
 public:
  /// Binds host:port; port 0 picks a free port. Throws std::runtime_error on failure.
  TcpServer(const QueryService& service, const std::string& host, int port);
  ~TcpServer();
  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;

  [[nodiscard]] int port() const { return port_; }
  /// Accepts connections until stop() is called.
  void run();
  void stop();

 private:
  void handle_connection(int fd);

  const QueryService& service_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> stopping_{false};
  std::mutex mutex_;
  std::vector<std::thread> workers_;
  std::vector<int> client_fds_;
};

/// Parses "host:port" (or ":port"); throws InputError.
std::pair<std::string, int> parse_endpoint(const std::string& endpoint);

/// Minimal blocking line client, used by tests and tools.
class LineClient {
 public:
  LineClient(const std::string& host, int port);
  ~LineClient();
  LineClient(const LineClient&) = delete;
  LineClient& operator=(const LineClient&) = delete;
  /// Sends one line and waits for one response line.
  std::string request(const std::string& line);

 private:
  int fd_ = -1;
  std::string buffer_;
};

}  // namespace o2v
