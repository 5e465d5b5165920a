#ifndef BELIEFKIT_PROVIDER_HPP_
#define BELIEFKIT_PROVIDER_HPP_

#include <chrono>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "beliefkit/belief.hpp"

namespace beliefkit {

// Wire protocol (one JSON object per line, UTF-8, '\n' terminated):
//
//   request:  {"id":<uint>,"query":"<prompt>","options":["<positive>","<negative>"]}
//   response: {"id":<uint>,"likelihoods":[<l_positive>,<l_negative>]}
//
// Responses may arrive in any order and are matched by id. Likelihoods must
// be finite and strictly positive; the belief is l_positive / (l_positive +
// l_negative).

class ProviderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TransportError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

class ProviderTimeout : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

/// A bidirectional newline-delimited channel.
class LineTransport {
 public:
  virtual ~LineTransport() = default;
  virtual void send_line(std::string_view line) = 0;
  /// Throws ProviderTimeout when nothing arrives within `timeout` and
  /// TransportError when the peer has gone away.
  virtual std::string receive_line(std::chrono::milliseconds timeout) = 0;
};

/// Spawns `/bin/sh -c command` and talks over its stdin/stdout.
class ProcessTransport final : public LineTransport {
 public:
  explicit ProcessTransport(const std::string& command);
  ~ProcessTransport() override;
  ProcessTransport(const ProcessTransport&) = delete;
  ProcessTransport& operator=(const ProcessTransport&) = delete;

  void send_line(std::string_view line) override;
  std::string receive_line(std::chrono::milliseconds timeout) override;

 private:
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

/// TCP connection to host:port, opened on the first request.
class TcpTransport final : public LineTransport {
 public:
  TcpTransport(const std::string& host, int port);
  ~TcpTransport() override;
  TcpTransport(const TcpTransport&) = delete;
  TcpTransport& operator=(const TcpTransport&) = delete;

  void send_line(std::string_view line) override;
  std::string receive_line(std::chrono::milliseconds timeout) override;

 private:
  void connect();

  std::string host_;
  int port_;
  int fd_ = -1;
  std::string buffer_;
};

/// "exec:<shell command>" or "tcp:<host>:<port>".
std::unique_ptr<LineTransport> connect_endpoint(const std::string& endpoint);

struct ProviderOptions {
  std::chrono::milliseconds timeout{30'000};
  int max_in_flight = 8;
};

std::string encode_request(std::uint64_t id, std::string_view query, std::string_view positive,
                           std::string_view negative);

struct ProviderResponse {
  std::uint64_t id = 0;
  double positive = 0;
  double negative = 0;
};

ProviderResponse decode_response(std::string_view line);

/// l_positive / (l_positive + l_negative); throws ProviderError unless both
/// are finite and positive.
double normalize_likelihoods(double positive, double negative);

class ProviderClient {
 public:
  explicit ProviderClient(std::unique_ptr<LineTransport> transport, ProviderOptions options = {});

  double belief(const Fact& fact, const QueryTemplate& tmpl);
  double belief(const Fact& fact);

  /// Pipelined queries, at most options.max_in_flight outstanding.
  /// `templates` is either empty (phrasing table) or one entry per fact.
  std::vector<double> beliefs(std::span<const Fact> facts,
                              std::span<const QueryTemplate> templates = {});

 private:
  std::unique_ptr<LineTransport> transport_;
  ProviderOptions options_;
  std::uint64_t next_id_ = 1;
};

/// A frozen BeliefModel backed by an external provider. Beliefs are fetched
/// on demand and cached; prefetch() batches requests.
class ProviderBeliefModel final : public BeliefModel {
 public:
  ProviderBeliefModel(Vocabulary vocab, std::shared_ptr<ProviderClient> client);

  std::string kind() const override { return "provider"; }
  double belief(FactIndex f) const override;
  using BeliefModel::belief;
  bool trainable() const override { return false; }
  Eigen::VectorXd& parameters() override { return empty_; }
  const Eigen::VectorXd& parameters() const override { return empty_; }
  void add_gradient(FactIndex, double, GradientBuffer&) const override;
  std::unique_ptr<BeliefModel> clone() const override;

  void prefetch(std::span<const FactIndex> facts) const;

 private:
  std::shared_ptr<ProviderClient> client_;
  mutable std::map<std::pair<int, int>, double> cache_;
  Eigen::VectorXd empty_;
};

}  // namespace beliefkit

#endif  // BELIEFKIT_PROVIDER_HPP_
