#pragma once

// Remote evaluator over length-prefixed frames on a byte stream (child
// process stdio pipes or TCP).
//
//   frame     := u32 byte count | message
//   handshake := "AZEV" | u16 version            (client sends, server echoes)
//   request   := u8 tag (0 = policy+value) | u16 count | count x (u32 len | state encoding)
//   response  := u16 count | count x (p x f32 policy | f32 value)
//
// A server that cannot parse a request answers with a zero-count response.

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "alphazzle/evaluators.hpp"
#include "alphazzle/serialization.hpp"

namespace alphazzle {

inline constexpr std::string_view kProtocolMagic = "AZEV";
inline constexpr std::uint16_t kProtocolVersion = 1;
inline constexpr std::uint8_t kTagPolicyValue = 0;
inline constexpr std::uint32_t kMaxFrameBytes = 1u << 30;

/// Byte stream over a pair of file descriptors. Closes what it owns.
class FdStream {
 public:
  FdStream(int read_fd, int write_fd, pid_t child = -1) : read_fd_(read_fd), write_fd_(write_fd), child_(child) {}

  FdStream(const FdStream&) = delete;
  FdStream& operator=(const FdStream&) = delete;

  ~FdStream() {
    close_write();
    if (read_fd_ >= 0) ::close(read_fd_);
    if (child_ > 0) {
      int status = 0;
      ::waitpid(child_, &status, 0);
    }
  }

  void write_all(std::span<const std::uint8_t> data) {
    std::size_t done = 0;
    while (done < data.size()) {
      const ssize_t n = send_or_write(write_fd_, data.data() + done, data.size() - done);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw Error(ErrorKind::RemoteUnreachable, std::string("write failed: ") + std::strerror(errno));
      done += static_cast<std::size_t>(n);
    }
  }

  /// False on clean end-of-stream before the first byte.
  bool read_exact(std::span<std::uint8_t> out) {
    std::size_t done = 0;
    while (done < out.size()) {
      const ssize_t n = ::read(read_fd_, out.data() + done, out.size() - done);
      if (n < 0 && errno == EINTR) continue;
      if (n < 0) throw Error(ErrorKind::RemoteUnreachable, std::string("read failed: ") + std::strerror(errno));
      if (n == 0) {
        if (done == 0) return false;
        throw Error(ErrorKind::RemoteUnreachable, "stream closed mid-frame");
      }
      done += static_cast<std::size_t>(n);
    }
    return true;
  }

  void close_write() {
    if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
    if (write_fd_ == read_fd_ && write_fd_ >= 0) ::shutdown(write_fd_, SHUT_WR);
    write_fd_ = -1;
  }

 private:
  static ssize_t send_or_write(int fd, const void* buf, std::size_t len) {
    const ssize_t n = ::send(fd, buf, len, MSG_NOSIGNAL);
    if (n < 0 && errno == ENOTSOCK) return ::write(fd, buf, len);
    return n;
  }

  int read_fd_;
  int write_fd_;
  pid_t child_;
};

inline void write_frame(FdStream& stream, std::span<const std::uint8_t> message) {
  ByteWriter header;
  header.u32(static_cast<std::uint32_t>(message.size()));
  stream.write_all(header.bytes());
  stream.write_all(message);
}

/// nullopt on clean end-of-stream.
inline std::optional<std::vector<std::uint8_t>> read_frame(FdStream& stream) {
  std::array<std::uint8_t, 4> header{};
  if (!stream.read_exact(header)) return std::nullopt;
  const std::uint32_t size = ByteReader(header).u32();
  if (size > kMaxFrameBytes) throw Error(ErrorKind::ProtocolViolation, "frame too large");
  std::vector<std::uint8_t> message(size);
  if (size > 0 && !stream.read_exact(message)) throw Error(ErrorKind::RemoteUnreachable, "stream closed mid-frame");
  return message;
}

inline std::vector<std::uint8_t> encode_handshake(std::uint16_t version = kProtocolVersion) {
  ByteWriter w;
  w.raw(kProtocolMagic);
  w.u16(version);
  return std::move(w).bytes();
}

inline bool is_valid_handshake(std::span<const std::uint8_t> message) {
  if (message.size() != 6) return false;
  if (!std::equal(kProtocolMagic.begin(), kProtocolMagic.end(), message.begin())) return false;
  return ByteReader(message.subspan(4)).u16() == kProtocolVersion;
}

inline std::vector<std::uint8_t> encode_request(std::span<const GameState> states) {
  if (states.size() > 0xffff) throw Error(ErrorKind::Config, "batch larger than 65535 states");
  ByteWriter w;
  w.u8(kTagPolicyValue);
  w.u16(static_cast<std::uint16_t>(states.size()));
  for (const GameState& s : states) {
    const auto payload = encode_state(s);
    w.u32(static_cast<std::uint32_t>(payload.size()));
    w.raw(payload);
  }
  return std::move(w).bytes();
}

inline std::vector<StateEncoding> decode_request(std::span<const std::uint8_t> message) {
  ByteReader r(message, ErrorKind::ProtocolViolation);
  if (r.u8() != kTagPolicyValue) throw Error(ErrorKind::ProtocolViolation, "unknown request tag");
  const std::uint16_t count = r.u16();
  std::vector<StateEncoding> out;
  out.reserve(count);
  for (std::uint16_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32();
    out.push_back(decode_state(r.raw(len)));
  }
  if (!r.done()) throw Error(ErrorKind::ProtocolViolation, "trailing bytes after request");
  return out;
}

/// Verdict entries are narrowed to f32 on the wire.
inline std::vector<std::uint8_t> encode_response(std::span<const EvaluatorVerdict> verdicts) {
  ByteWriter w;
  w.u16(static_cast<std::uint16_t>(verdicts.size()));
  for (const auto& v : verdicts) {
    for (double x : v.policy) w.f32(static_cast<float>(x));
    w.f32(static_cast<float>(v.value));
  }
  return std::move(w).bytes();
}

inline std::vector<EvaluatorVerdict> decode_response(std::span<const std::uint8_t> message, std::size_t expected_count,
                                                     int positions) {
  ByteReader r(message, ErrorKind::MalformedResponse);
  const std::uint16_t count = r.u16();
  if (count != expected_count) {
    throw Error(ErrorKind::MalformedResponse,
                "expected " + std::to_string(expected_count) + " verdicts, got " + std::to_string(count));
  }
  std::vector<EvaluatorVerdict> out(count);
  for (auto& v : out) {
    v.policy.resize(static_cast<std::size_t>(positions));
    double mass = 0.0;
    for (double& x : v.policy) {
      x = r.f32();
      if (!std::isfinite(x) || x < 0.0) throw Error(ErrorKind::MalformedResponse, "policy entry not a probability");
      mass += x;
    }
    // f32 entries: allow rounding well above 1e-6.
    if (std::abs(mass - 1.0) > 1e-4) throw Error(ErrorKind::MalformedResponse, "policy does not sum to 1");
    v.value = r.f32();
    if (!(v.value >= 0.0 && v.value <= 1.0)) throw Error(ErrorKind::MalformedResponse, "value outside [0,1]");
  }
  if (!r.done()) throw Error(ErrorKind::MalformedResponse, "trailing bytes after response");
  return out;
}

/// Connects to host:port.
inline std::unique_ptr<FdStream> connect_tcp(const std::string& host, int port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res) {
    throw Error(ErrorKind::RemoteUnreachable, "cannot resolve " + host);
  }
  int fd = -1;
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw Error(ErrorKind::RemoteUnreachable, "cannot connect to " + host + ":" + std::to_string(port));
  return std::make_unique<FdStream>(fd, fd);
}

/// Runs `argv` with its stdin/stdout connected to the returned stream.
inline std::unique_ptr<FdStream> spawn_process(const std::vector<std::string>& argv) {
  if (argv.empty()) throw Error(ErrorKind::Config, "empty command");
  int to_child[2], from_child[2];
  if (::pipe(to_child) != 0) throw Error(ErrorKind::RemoteUnreachable, "pipe failed");
  if (::pipe(from_child) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    throw Error(ErrorKind::RemoteUnreachable, "pipe failed");
  }
  ::signal(SIGPIPE, SIG_IGN);
  const pid_t pid = ::fork();
  if (pid < 0) throw Error(ErrorKind::RemoteUnreachable, "fork failed");
  if (pid == 0) {
    ::dup2(to_child[0], STDIN_FILENO);
    ::dup2(from_child[1], STDOUT_FILENO);
    ::close(to_child[0]);
    ::close(to_child[1]);
    ::close(from_child[0]);
    ::close(from_child[1]);
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    ::execvp(args[0], args.data());
    ::_exit(127);
  }
  ::close(to_child[0]);
  ::close(from_child[1]);
  return std::make_unique<FdStream>(from_child[0], to_child[1], pid);
}

/// Client side. One connection, so calls are serialized and the evaluator
/// declares itself exclusive.
class RemoteEvaluator final : public Evaluator {
 public:
  using Evaluator::evaluate;

  explicit RemoteEvaluator(std::unique_ptr<FdStream> stream, std::string label = "remote")
      : stream_(std::move(stream)), label_(std::move(label)) {
    write_frame(*stream_, encode_handshake());
    const auto reply = read_frame(*stream_);
    if (!reply) throw Error(ErrorKind::RemoteUnreachable, "server closed during handshake");
    if (!is_valid_handshake(*reply)) throw Error(ErrorKind::MalformedResponse, "handshake rejected");
  }

  std::vector<EvaluatorVerdict> evaluate(std::span<const GameState> states) override {
    if (states.empty()) return {};
    std::lock_guard lock(mutex_);
    std::vector<EvaluatorVerdict> out;
    out.reserve(states.size());
    constexpr std::size_t kChunk = 0xffff;
    for (std::size_t start = 0; start < states.size(); start += kChunk) {
      const auto chunk = states.subspan(start, std::min(kChunk, states.size() - start));
      write_frame(*stream_, encode_request(chunk));
      const auto reply = read_frame(*stream_);
      if (!reply) throw Error(ErrorKind::RemoteUnreachable, "server closed the stream");
      auto verdicts = decode_response(*reply, chunk.size(), chunk.front().spec().positions());
      out.insert(out.end(), std::make_move_iterator(verdicts.begin()), std::make_move_iterator(verdicts.end()));
    }
    return out;
  }

  bool exclusive() const override { return true; }
  std::string name() const override { return label_; }

 private:
  std::unique_ptr<FdStream> stream_;
  std::string label_;
  std::mutex mutex_;
};

/// Endpoint grammar: "tcp:HOST:PORT" or "exec:COMMAND ARGS..." (whitespace split).
inline EvaluatorPtr make_remote_evaluator(const std::string& endpoint) {
  if (endpoint.rfind("tcp:", 0) == 0) {
    const auto rest = endpoint.substr(4);
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos) throw Error(ErrorKind::Config, "tcp endpoint needs HOST:PORT");
    int port = 0;
    try {
      port = std::stoi(rest.substr(colon + 1));
    } catch (const std::exception&) {
      throw Error(ErrorKind::Config, "bad port in " + endpoint);
    }
    return std::make_shared<RemoteEvaluator>(connect_tcp(rest.substr(0, colon), port), endpoint);
  }
  if (endpoint.rfind("exec:", 0) == 0) {
    std::istringstream words(endpoint.substr(5));
    std::vector<std::string> argv;
    for (std::string w; words >> w;) argv.push_back(w);
    return std::make_shared<RemoteEvaluator>(spawn_process(argv), endpoint);
  }
  throw Error(ErrorKind::Config, "unknown evaluator endpoint: " + endpoint);
}

using VerdictHandler = std::function<EvaluatorVerdict(const StateEncoding&)>;

/// Server loop for one connection. Returns on end-of-stream or after a
/// handshake mismatch; malformed request frames are logged and rejected.
inline bool serve_connection(FdStream& stream, const VerdictHandler& handler, std::ostream& log = std::cerr) {
  const auto hello = read_frame(stream);
  if (!hello) return false;
  write_frame(stream, encode_handshake());
  if (!is_valid_handshake(*hello)) {
    log << "protocol: version mismatch, closing\n";
    return false;
  }
  for (;;) {
    std::optional<std::vector<std::uint8_t>> frame;
    try {
      frame = read_frame(stream);
    } catch (const Error& e) {
      log << "protocol: " << e.what() << "\n";
      return true;
    }
    if (!frame) return true;
    std::vector<EvaluatorVerdict> verdicts;
    try {
      const auto states = decode_request(*frame);
      verdicts.reserve(states.size());
      for (const auto& s : states) verdicts.push_back(handler(s));
    } catch (const Error& e) {
      log << "protocol: rejected frame: " << e.what() << "\n";
      verdicts.clear();
    }
    write_frame(stream, encode_response(verdicts));
  }
}

}  // namespace alphazzle
