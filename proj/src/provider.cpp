#include "beliefkit/provider.hpp"

#include <cerrno>
#include <cmath>
#include <csignal>
#include <cstring>
#include <deque>

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

namespace beliefkit {

using nlohmann::json;

namespace {

void write_all(int fd, std::string_view data, bool socket) {
  while (!data.empty()) {
    const ssize_t n = socket ? ::send(fd, data.data(), data.size(), MSG_NOSIGNAL)
                             : ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("provider write failed: ") + std::strerror(errno));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

std::string read_line(int fd, std::string& buffer, std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    if (auto nl = buffer.find('\n'); nl != std::string::npos) {
      std::string line = buffer.substr(0, nl);
      buffer.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return line;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) throw ProviderTimeout("provider did not answer in time");
    pollfd pfd{fd, POLLIN, 0};
    const int r = ::poll(&pfd, 1, static_cast<int>(left.count()));
    if (r < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("poll failed: ") + std::strerror(errno));
    }
    if (r == 0) throw ProviderTimeout("provider did not answer in time");
    char chunk[4096];
    const ssize_t n = ::read(fd, chunk, sizeof chunk);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("provider read failed: ") + std::strerror(errno));
    }
    if (n == 0) throw TransportError("provider closed the connection");
    buffer.append(chunk, static_cast<std::size_t>(n));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Transports

ProcessTransport::ProcessTransport(const std::string& command) {
  std::signal(SIGPIPE, SIG_IGN);
  int in[2], out[2];
  if (::pipe(in) != 0) throw TransportError("pipe() failed");
  if (::pipe(out) != 0) {
    ::close(in[0]);
    ::close(in[1]);
    throw TransportError("pipe() failed");
  }
  pid_ = ::fork();
  if (pid_ < 0) throw TransportError("fork() failed");
  if (pid_ == 0) {
    ::dup2(in[0], STDIN_FILENO);
    ::dup2(out[1], STDOUT_FILENO);
    ::close(in[0]);
    ::close(in[1]);
    ::close(out[0]);
    ::close(out[1]);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(in[0]);
  ::close(out[1]);
  to_child_ = in[1];
  from_child_ = out[0];
}

ProcessTransport::~ProcessTransport() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  if (pid_ > 0) {
    int status = 0;
    // Closing stdin asks a well-behaved provider to exit; don't wait forever.
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) == pid_) return;
      ::usleep(10'000);
    }
    ::kill(pid_, SIGTERM);
    ::waitpid(pid_, &status, 0);
  }
}

void ProcessTransport::send_line(std::string_view line) {
  std::string framed(line);
  framed.push_back('\n');
  write_all(to_child_, framed, false);
}

std::string ProcessTransport::receive_line(std::chrono::milliseconds timeout) {
  return read_line(from_child_, buffer_, timeout);
}

TcpTransport::TcpTransport(const std::string& host, int port) : host_(host), port_(port) {}

void TcpTransport::connect() {
  const std::string& host = host_;
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port_);
  if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0) {
    throw TransportError("cannot resolve " + host + ": " + ::gai_strerror(rc));
  }
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    fd_ = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd_ < 0) continue;
    if (::connect(fd_, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd_);
    fd_ = -1;
  }
  ::freeaddrinfo(res);
  if (fd_ < 0) throw TransportError("cannot connect to " + host + ":" + service);
}

TcpTransport::~TcpTransport() {
  if (fd_ >= 0) ::close(fd_);
}

void TcpTransport::send_line(std::string_view line) {
  if (fd_ < 0) connect();
  std::string framed(line);
  framed.push_back('\n');
  write_all(fd_, framed, true);
}

std::string TcpTransport::receive_line(std::chrono::milliseconds timeout) {
  if (fd_ < 0) throw TransportError("not connected to " + host_);
  return read_line(fd_, buffer_, timeout);
}

std::unique_ptr<LineTransport> connect_endpoint(const std::string& endpoint) {
  if (endpoint.rfind("exec:", 0) == 0) {
    return std::make_unique<ProcessTransport>(endpoint.substr(5));
  }
  if (endpoint.rfind("tcp:", 0) == 0) {
    const std::string rest = endpoint.substr(4);
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos) throw std::invalid_argument("tcp endpoint needs host:port");
    int port = 0;
    try {
      port = std::stoi(rest.substr(colon + 1));
    } catch (const std::exception&) {
      throw std::invalid_argument("bad port in endpoint '" + endpoint + "'");
    }
    return std::make_unique<TcpTransport>(rest.substr(0, colon), port);
  }
  throw std::invalid_argument("unknown provider endpoint '" + endpoint +
                              "' (expected exec:<cmd> or tcp:<host>:<port>)");
}

// ---------------------------------------------------------------------------
// Codec

std::string encode_request(std::uint64_t id, std::string_view query, std::string_view positive,
                           std::string_view negative) {
  json req{{"id", id}, {"query", query}, {"options", {positive, negative}}};
  return req.dump();
}

ProviderResponse decode_response(std::string_view line) {
  json doc;
  try {
    doc = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ProviderError(std::string("malformed provider response: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("id") || !doc["id"].is_number_unsigned() ||
      !doc.contains("likelihoods") || !doc["likelihoods"].is_array() ||
      doc["likelihoods"].size() != 2 || !doc["likelihoods"][0].is_number() ||
      !doc["likelihoods"][1].is_number()) {
    throw ProviderError("provider response must be {\"id\":n,\"likelihoods\":[a,b]}: " +
                        std::string(line));
  }
  return {doc["id"].get<std::uint64_t>(), doc["likelihoods"][0].get<double>(),
          doc["likelihoods"][1].get<double>()};
}

double normalize_likelihoods(double positive, double negative) {
  if (!std::isfinite(positive) || !std::isfinite(negative) || positive <= 0 || negative <= 0) {
    throw ProviderError("provider returned non-positive likelihoods (" + std::to_string(positive) +
                        ", " + std::to_string(negative) + ")");
  }
  return positive / (positive + negative);
}

// ---------------------------------------------------------------------------
// Client

ProviderClient::ProviderClient(std::unique_ptr<LineTransport> transport, ProviderOptions options)
    : transport_(std::move(transport)), options_(options) {
  if (options_.max_in_flight < 1) throw std::invalid_argument("max_in_flight must be >= 1");
}

double ProviderClient::belief(const Fact& fact, const QueryTemplate& tmpl) {
  const QueryTemplate one[] = {tmpl};
  return beliefs(std::span<const Fact>(&fact, 1), one).front();
}

double ProviderClient::belief(const Fact& fact) {
  return beliefs(std::span<const Fact>(&fact, 1)).front();
}

std::vector<double> ProviderClient::beliefs(std::span<const Fact> facts,
                                            std::span<const QueryTemplate> templates) {
  if (!templates.empty() && templates.size() != facts.size()) {
    throw std::invalid_argument("need one template per fact");
  }
  const auto describe = [&](std::size_t i) {
    return "(" + facts[i].subject + ", " + facts[i].property + ")";
  };
  std::vector<double> out(facts.size());
  std::map<std::uint64_t, std::size_t> pending;
  std::size_t sent = 0;
  while (sent < facts.size() || !pending.empty()) {
    while (sent < facts.size() && pending.size() < static_cast<std::size_t>(options_.max_in_flight)) {
      const QueryTemplate tmpl = templates.empty()
                                     ? PhrasingTable::builtin().template_for(facts[sent].property)
                                     : templates[sent];
      const std::uint64_t id = next_id_++;
      try {
        transport_->send_line(encode_request(id, render_query(facts[sent], tmpl), tmpl.positive(),
                                             tmpl.negative()));
      } catch (const ProviderError& e) {
        throw TransportError(std::string(e.what()) + " while querying fact " + describe(sent));
      }
      pending.emplace(id, sent++);
    }
    std::string line;
    try {
      line = transport_->receive_line(options_.timeout);
    } catch (const ProviderTimeout& e) {
      throw ProviderTimeout(std::string(e.what()) + " for fact " + describe(pending.begin()->second));
    } catch (const ProviderError& e) {
      throw TransportError(std::string(e.what()) + " while querying fact " +
                           describe(pending.begin()->second));
    }
    const ProviderResponse resp = decode_response(line);
    auto it = pending.find(resp.id);
    if (it == pending.end()) {
      throw ProviderError("provider answered unknown request id " + std::to_string(resp.id));
    }
    try {
      out[it->second] = normalize_likelihoods(resp.positive, resp.negative);
    } catch (const ProviderError& e) {
      throw ProviderError(std::string(e.what()) + " for fact " + describe(it->second));
    }
    pending.erase(it);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Frozen model

ProviderBeliefModel::ProviderBeliefModel(Vocabulary vocab, std::shared_ptr<ProviderClient> client)
    : BeliefModel(std::move(vocab)), client_(std::move(client)) {}

double ProviderBeliefModel::belief(FactIndex f) const {
  if (auto it = cache_.find({f.subject, f.property}); it != cache_.end()) return it->second;
  const FactIndex one[] = {f};
  prefetch(one);
  return cache_.at({f.subject, f.property});
}

void ProviderBeliefModel::prefetch(std::span<const FactIndex> facts) const {
  std::vector<Fact> missing;
  std::vector<FactIndex> keys;
  for (const auto& f : facts) {
    if (cache_.count({f.subject, f.property}) != 0) continue;
    if (f.subject < 0 || f.subject >= vocab_.num_subjects() || f.property < 0 ||
        f.property >= vocab_.num_properties()) {
      throw UnregisteredFact("fact index out of range");
    }
    missing.push_back({vocab_.subjects().name(f.subject), vocab_.properties().name(f.property),
                       std::nullopt});
    keys.push_back(f);
  }
  if (missing.empty()) return;
  const auto values = client_->beliefs(missing);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    cache_[{keys[i].subject, keys[i].property}] = values[i];
  }
}

void ProviderBeliefModel::add_gradient(FactIndex, double, GradientBuffer&) const {
  throw std::logic_error("provider beliefs are not trainable");
}

std::unique_ptr<BeliefModel> ProviderBeliefModel::clone() const {
  return std::make_unique<ProviderBeliefModel>(*this);
}

}  // namespace beliefkit
