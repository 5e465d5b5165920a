#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cmath>
#include <limits>
#include <string>
#include <thread>

#include "beliefkit/provider.hpp"

using namespace beliefkit;
using namespace std::chrono_literals;

namespace {

std::string exec_endpoint(const std::string& args) {
  return std::string("exec:") + FAKE_PROVIDER + " " + args;
}

ProviderClient client_for(const std::string& args, ProviderOptions options = {}) {
  return ProviderClient(connect_endpoint(exec_endpoint(args)), options);
}

std::string error_of(auto&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

/// One-connection TCP server answering every request line with (0.09, 0.01).
class LineServer {
 public:
  LineServer() {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    REQUIRE(::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
    REQUIRE(::listen(fd_, 1) == 0);
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    thread_ = std::thread([this] { serve(); });
  }
  ~LineServer() {
    thread_.join();
    ::close(fd_);
  }
  int port() const { return port_; }

 private:
  void serve() {
    const int conn = ::accept(fd_, nullptr, nullptr);
    if (conn < 0) return;
    std::string buf;
    char chunk[512];
    for (;;) {
      const ssize_t n = ::read(conn, chunk, sizeof chunk);
      if (n <= 0) break;
      buf.append(chunk, static_cast<std::size_t>(n));
      for (auto nl = buf.find('\n'); nl != std::string::npos; nl = buf.find('\n')) {
        const std::string line = buf.substr(0, nl);
        buf.erase(0, nl + 1);
        const auto id_at = line.find("\"id\":") + 5;
        const std::string id = line.substr(id_at, line.find_first_of(",}", id_at) - id_at);
        const std::string reply = "{\"id\":" + id + ",\"likelihoods\":[0.09,0.01]}\n";
        if (::write(conn, reply.data(), reply.size()) < 0) break;
      }
    }
    ::close(conn);
  }

  int fd_ = -1;
  int port_ = 0;
  std::thread thread_;
};

const Fact kDaffodil{"daffodil", "IsAflower", true};

}  // namespace

TEST_SUITE("provider") {

TEST_CASE("likelihood normalization") {
  CHECK(normalize_likelihoods(0.09, 0.01) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK_THROWS_AS(normalize_likelihoods(0, 0), ProviderError);
  CHECK_THROWS_AS(normalize_likelihoods(0.5, 0), ProviderError);
  CHECK_THROWS_AS(normalize_likelihoods(-0.1, 0.5), ProviderError);
  CHECK_THROWS_AS(normalize_likelihoods(std::numeric_limits<double>::infinity(), 1), ProviderError);
  CHECK_THROWS_AS(normalize_likelihoods(std::nan(""), 1), ProviderError);
}

TEST_CASE("wire format") {
  const std::string req = encode_request(7, "Is a daffodil a flower?", "Yes", "No");
  CHECK(req == R"({"id":7,"options":["Yes","No"],"query":"Is a daffodil a flower?"})");
  const ProviderResponse r = decode_response(R"({"id": 7, "likelihoods": [0.25, 0.5]})");
  CHECK(r.id == 7);
  CHECK(r.positive == 0.25);
  CHECK(r.negative == 0.5);
  CHECK_THROWS_AS(decode_response("not json"), ProviderError);
  CHECK_THROWS_AS(decode_response(R"({"id": 1, "likelihoods": [0.5]})"), ProviderError);
  CHECK_THROWS_AS(decode_response(R"({"likelihoods": [0.5, 0.5]})"), ProviderError);
}

TEST_CASE("process provider") {
  auto client = client_for("fixed 0.09 0.01");
  CHECK(client.belief(kDaffodil) == doctest::Approx(0.9));
  auto keyword = client_for("keyword flower");
  CHECK(keyword.belief(kDaffodil) == doctest::Approx(0.9));
  CHECK(keyword.belief({"daffodil", "CanFly", {}}) == doctest::Approx(0.1));
}

TEST_CASE("zero likelihoods are an error naming the fact") {
  auto client = client_for("fixed 0 0");
  const std::string msg = error_of([&] { client.belief(kDaffodil); });
  CHECK(msg.find("daffodil") != std::string::npos);
  CHECK(msg.find("IsAflower") != std::string::npos);
}

TEST_CASE("pipelined answers are matched by id") {
  ProviderOptions options;
  options.max_in_flight = 4;
  auto client = client_for("reverse 4", options);
  std::vector<Fact> facts;
  for (int i = 0; i < 8; ++i) facts.push_back({"s" + std::to_string(i), "IsAthing", {}});
  const auto beliefs = client.beliefs(facts);
  REQUIRE(beliefs.size() == 8);
  for (int i = 0; i < 8; ++i) CHECK(beliefs[i] == doctest::Approx(0.01 * (i + 2)));
}

TEST_CASE("timeouts and dead providers") {
  ProviderOptions options;
  options.timeout = 200ms;
  auto silent = client_for("silent", options);
  CHECK_THROWS_AS(silent.belief(kDaffodil), ProviderTimeout);
  auto dead = client_for("exit", options);
  const std::string msg = error_of([&] { dead.belief(kDaffodil); });
  CHECK(msg.find("daffodil") != std::string::npos);
}

TEST_CASE("tcp provider") {
  LineServer server;
  {
    ProviderClient client(connect_endpoint("tcp:127.0.0.1:" + std::to_string(server.port())));
    CHECK(client.belief(kDaffodil) == doctest::Approx(0.9));
    CHECK(client.belief({"albatross", "IsAbird", {}}) == doctest::Approx(0.9));
  }
}

TEST_CASE("unreachable provider reports the fact") {
  // Port 1 on loopback is reserved and normally closed.
  ProviderClient client(connect_endpoint("tcp:127.0.0.1:1"));
  const std::string msg = error_of([&] { client.belief(kDaffodil); });
  CHECK(msg.find("(daffodil, IsAflower)") != std::string::npos);
  CHECK_THROWS_AS(connect_endpoint("udp:x"), std::invalid_argument);
}

TEST_CASE("provider-backed model caches and is frozen") {
  Vocabulary vocab({"daffodil"}, {"IsAflower", "CanFly"});
  ProviderBeliefModel model(vocab, std::make_shared<ProviderClient>(
                                       connect_endpoint(exec_endpoint("keyword flower"))));
  CHECK_FALSE(model.trainable());
  CHECK(model.belief("daffodil", "IsAflower") == doctest::Approx(0.9));
  CHECK(model.belief("daffodil", "CanFly") == doctest::Approx(0.1));
  GradientBuffer g(0);
  CHECK_THROWS_AS(model.add_gradient({0, 0}, 1.0, g), std::logic_error);
}

}
