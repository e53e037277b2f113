// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0

#include "o2v/service.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <istream>
#include <json.hpp>
#include <ostream>
#include <stdexcept>

#include "o2v/query.hpp"

namespace o2v {
namespace {

using json = nlohmann::json;

constexpr std::size_t kMaxLine = 1 << 20;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string dump(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

std::string error_line(const std::string& message) { return dump(json{{"error", message}}); }

Pose parse_pose(const json& p, const MapSnapshot& snapshot) {
  if (p.is_object() && p.contains("frame")) {
    if (!p["frame"].is_number_unsigned()) throw InputError("pose.frame must be a non-negative integer");
    return snapshot.frame_pose(p["frame"].get<std::uint64_t>());
  }
  if (!p.is_array() || p.size() != 12) throw InputError("pose must be {\"frame\":id} or 12 numbers");
  Mat3 r;
  Vec3 t;
  for (int i = 0; i < 12; ++i) {
    if (!p[static_cast<std::size_t>(i)].is_number()) throw InputError("pose entries must be numbers");
    const double v = p[static_cast<std::size_t>(i)].get<double>();
    if (i < 9) {
      r(i / 3, i % 3) = v;
    } else {
      t(i - 9) = v;
    }
  }
  Pose pose(r, t);
  pose.validate(1e-4);
  return pose;
}

std::string required_string(const json& req, const char* key) {
  if (!req.contains(key) || !req[key].is_string()) throw InputError(std::string("missing string field '") + key + "'");
  return req[key].get<std::string>();
}

json stats_of(const MapSnapshot* snap) {
  if (snap == nullptr) {
    return json{{"frame_counter", 0}, {"frames", 0}, {"instances", 0}, {"consistent", true}};
  }
  const std::uint64_t recomputed = snapshot_digest(*snap);
  return json{{"frame_counter", snap->frame_counter},
              {"frames", snap->frames.size()},
              {"feature_cells", snap->field.feature_cell_count()},
              {"language_cells", snap->field.language_cell_count()},
              {"splits", snap->field.split_count()},
              {"instances", snap->retrieval.entries().size()},
              {"digest", hex64(snap->digest)},
              {"digest_recomputed", hex64(recomputed)},
              {"consistent", recomputed == snap->digest}};
}

}  // namespace

QueryService::QueryService(SnapshotSource source, TextEmbedder embed)
    : source_(std::move(source)), embed_(std::move(embed)) {}

std::string QueryService::handle(const std::string& line) const {
  json req;
  try {
    req = json::parse(line);
  } catch (const json::exception& e) {
    return error_line(std::string("malformed request: ") + e.what());
  }
  try {
    if (!req.is_object()) return error_line("request must be a JSON object");
    const std::string op = required_string(req, "op");
    const std::shared_ptr<const MapSnapshot> snap = source_();

    if (op == "stats") return dump(stats_of(snap.get()));

    if (op == "query") {
      const std::string text = required_string(req, "text");
      std::size_t top_n = 5;
      if (req.contains("top_n")) {
        if (!req["top_n"].is_number_unsigned()) throw InputError("top_n must be a non-negative integer");
        top_n = req["top_n"].get<std::size_t>();
      }
      json instances = json::array();
      if (snap != nullptr && !snap->retrieval.entries().empty()) {
        for (const QueryHit& h : snap->retrieval.query_text(embed_(text), top_n)) {
          instances.push_back(json{{"id", h.id},
                                   {"cosine", h.cosine},
                                   {"center", {h.center.x(), h.center.y(), h.center.z()}},
                                   {"weight", h.weight}});
        }
      }
      return dump(json{{"instances", instances}, {"frame_counter", snap ? snap->frame_counter : 0}});
    }

    if (op == "render" || op == "relevance") {
      if (snap == nullptr) throw InputError("no map published yet");
      if (!req.contains("pose")) throw InputError("missing field 'pose'");
      const Pose pose = parse_pose(req["pose"], *snap);
      const std::string out = required_string(req, "out");
      if (op == "render") {
        const ViewRender view = render_view(*snap, pose, snap->intrinsics);
        write_ppm(out, view.rgb);
        if (req.contains("depth_out")) write_depth(required_string(req, "depth_out"), view.depth);
        return dump(json{{"ok", true}, {"out", out}});
      }
      const std::string text = required_string(req, "text");
      const RelevanceMap rel = render_relevance(*snap, pose, snap->intrinsics, text, embed_(text));
      write_ppm(out, gray_image(rel.relevance, rel.width, rel.height));
      return dump(json{{"ok", true}, {"out", out}, {"max_raw", rel.raw.size() ? rel.raw.maxCoeff() : 0.0}});
    }
    return error_line("unknown op '" + op + "'");
  } catch (const std::exception& e) {
    return error_line(e.what());
  }
}

void QueryService::serve_stream(std::istream& in, std::ostream& out) const {
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    out << handle(line) << '\n' << std::flush;
  }
}

std::pair<std::string, int> parse_endpoint(const std::string& endpoint) {
  const auto colon = endpoint.rfind(':');
  if (colon == std::string::npos) throw InputError("endpoint must be host:port");
  std::string host = endpoint.substr(0, colon);
  if (host.empty()) host = "127.0.0.1";
  int port = 0;
  try {
    std::size_t used = 0;
    port = std::stoi(endpoint.substr(colon + 1), &used);
    if (used != endpoint.size() - colon - 1) throw InputError("bad port");
  } catch (const std::logic_error&) {
    throw InputError("bad port in endpoint '" + endpoint + "'");
  }
  if (port < 0 || port > 65535) throw InputError("port out of range");
  return {host, port};
}

namespace {

sockaddr_in resolve(const std::string& host, int port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  const std::string h = host == "localhost" ? "127.0.0.1" : host;
  if (inet_pton(AF_INET, h.c_str(), &addr.sin_addr) != 1) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    addrinfo* res = nullptr;
    if (getaddrinfo(h.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
      throw std::runtime_error("cannot resolve host '" + host + "'");
    }
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    freeaddrinfo(res);
  }
  return addr;
}

bool send_all(int fd, const std::string& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace

TcpServer::TcpServer(const QueryService& service, const std::string& host, int port) : service_(service) {
  const sockaddr_in addr = resolve(host, port);
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw std::runtime_error("socket: " + std::string(std::strerror(errno)));
  const int one = 1;
  setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(listen_fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 64) != 0) {
    const std::string msg = std::strerror(errno);
    ::close(listen_fd_);
    throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port) + ": " + msg);
  }
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
}

TcpServer::~TcpServer() {
  stop();
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(mutex_);
    workers.swap(workers_);
  }
  for (auto& w : workers) {
    if (w.joinable()) w.join();
  }
  ::close(listen_fd_);
}

void TcpServer::run() {
  while (!stopping_.load()) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR || errno == ECONNABORTED) continue;
      break;
    }
    std::lock_guard lock(mutex_);
    if (stopping_.load()) {
      ::close(fd);
      break;
    }
    client_fds_.push_back(fd);
    workers_.emplace_back([this, fd] { handle_connection(fd); });
  }
}

void TcpServer::stop() {
  if (stopping_.exchange(true)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  std::lock_guard lock(mutex_);
  for (int fd : client_fds_) ::shutdown(fd, SHUT_RDWR);
}

void TcpServer::handle_connection(int fd) {
  std::string buffer;
  bool discarding = false;
  char chunk[4096];
  while (!stopping_.load()) {
    const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    buffer.append(chunk, static_cast<std::size_t>(n));
    bool ok = true;
    std::size_t start = 0;
    for (std::size_t nl; ok && (nl = buffer.find('\n', start)) != std::string::npos; start = nl + 1) {
      std::string line = buffer.substr(start, nl - start);
      if (discarding) {
        discarding = false;
        continue;
      }
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      ok = send_all(fd, service_.handle(line) + "\n");
    }
    buffer.erase(0, start);
    if (!ok) break;
    if (buffer.size() > kMaxLine) {
      buffer.clear();
      if (!discarding && !send_all(fd, error_line("request line too long") + "\n")) break;
      discarding = true;
    }
  }
  std::lock_guard lock(mutex_);
  std::erase(client_fds_, fd);
  ::close(fd);
}

LineClient::LineClient(const std::string& host, int port) {
  const sockaddr_in addr = resolve(host, port);
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0 || ::connect(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
    const std::string msg = std::strerror(errno);
    if (fd_ >= 0) ::close(fd_);
    throw std::runtime_error("connect failed: " + msg);
  }
}

LineClient::~LineClient() {
  if (fd_ >= 0) ::close(fd_);
}

std::string LineClient::request(const std::string& line) {
  if (!send_all(fd_, line + "\n")) throw std::runtime_error("send failed");
  char chunk[4096];
  for (;;) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string out = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return out;
    }
    const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw std::runtime_error("connection closed");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

}  // namespace o2v
