#pragma once

// Framed binary protocol for external agents over a subprocess's standard
// streams. Layout (version 1, all integers little-endian):
//
//   offset  size  field
//   0       4     magic "DICE"
//   4       1     version = 1
//   5       1     msg_type (0 hello, 1 image-request, 2 sinogram-request,
//                 3 response, 4 error)
//   6       4     rows (u32)
//   10      4     cols (u32)
//   14      ...   sinogram-request only: observed-view bitmap, ceil(rows/8)
//                 bytes, bit (i % 8) of byte i / 8 set when view i is observed
//           ...   payload: rows * cols f32, row-major
//
// Hello frames carry rows = cols = 0. Error frames carry rows = 1 and
// cols = message length; their payload is the UTF-8 message bytes.

#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <bit>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "dice/types.hpp"

namespace dice::protocol {

inline constexpr std::array<std::uint8_t, 4> magic = {'D', 'I', 'C', 'E'};
inline constexpr std::uint8_t version = 1;
inline constexpr std::size_t header_size = 14;

enum class MsgType : std::uint8_t {
  hello = 0,
  image_request = 1,
  sinogram_request = 2,
  response = 3,
  error = 4,
};

struct Frame {
  MsgType type = MsgType::hello;
  std::uint8_t version = protocol::version;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<bool> observed;  // sinogram-request only, length rows
  std::vector<float> payload;  // rows * cols, except error frames
  std::string message;         // error frames only

  friend bool operator==(const Frame&, const Frame&) = default;
};

/// Malformed bytes on the wire.
struct frame_error : transport_error {
  using transport_error::transport_error;
};

inline Frame hello_frame() { return Frame{}; }

inline Frame error_frame(std::string msg) {
  Frame f;
  f.type = MsgType::error;
  f.rows = 1;
  f.cols = static_cast<std::uint32_t>(msg.size());
  f.message = std::move(msg);
  return f;
}

inline Frame image_request(const Image& img) {
  Frame f;
  f.type = MsgType::image_request;
  f.rows = static_cast<std::uint32_t>(img.height);
  f.cols = static_cast<std::uint32_t>(img.width);
  f.payload.assign(img.values.begin(), img.values.end());
  return f;
}

inline Frame sinogram_request(const Sinogram& sino, const AngularMask& mask) {
  if (mask.size() != sino.n_angles) throw shape_error("sinogram request: mask length mismatch");
  Frame f;
  f.type = MsgType::sinogram_request;
  f.rows = static_cast<std::uint32_t>(sino.n_angles);
  f.cols = static_cast<std::uint32_t>(sino.n_detectors);
  f.observed = mask.flags();
  f.payload.assign(sino.values.begin(), sino.values.end());
  return f;
}

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(in[at + i]) << (8 * i);
  return v;
}

struct Header {
  MsgType type;
  std::uint32_t rows;
  std::uint32_t cols;
};

inline Header parse_header(std::span<const std::uint8_t> in) {
  if (in.size() < header_size) throw frame_error("frame shorter than header");
  if (!std::equal(magic.begin(), magic.end(), in.begin())) throw frame_error("bad magic");
  if (in[4] != version)
    throw frame_error("unsupported protocol version " + std::to_string(int(in[4])));
  if (in[5] > static_cast<std::uint8_t>(MsgType::error))
    throw frame_error("unknown message type " + std::to_string(int(in[5])));
  return {static_cast<MsgType>(in[5]), get_u32(in, 6), get_u32(in, 10)};
}

/// Body length in bytes implied by a header.
inline std::size_t body_size(const Header& h) {
  const std::size_t cells = std::size_t(h.rows) * std::size_t(h.cols);
  switch (h.type) {
    case MsgType::hello:
      return 0;
    case MsgType::error:
      return cells;
    case MsgType::sinogram_request:
      return (std::size_t(h.rows) + 7) / 8 + 4 * cells;
    default:
      return 4 * cells;
  }
}

}  // namespace detail

inline std::vector<std::uint8_t> encode(const Frame& f) {
  const std::size_t cells = std::size_t(f.rows) * std::size_t(f.cols);
  if (f.type == MsgType::error) {
    if (f.rows != 1 || f.cols != f.message.size())
      throw frame_error("error frame must have rows = 1 and cols = message length");
  } else if (f.type == MsgType::hello) {
    if (cells != 0) throw frame_error("hello frame must be empty");
  } else if (f.payload.size() != cells) {
    throw frame_error("payload length does not match rows * cols");
  }
  if (f.type == MsgType::sinogram_request && f.observed.size() != f.rows)
    throw frame_error("mask bitmap length does not match rows");

  std::vector<std::uint8_t> out(magic.begin(), magic.end());
  out.push_back(f.version);
  out.push_back(static_cast<std::uint8_t>(f.type));
  detail::put_u32(out, f.rows);
  detail::put_u32(out, f.cols);
  if (f.type == MsgType::error) {
    out.insert(out.end(), f.message.begin(), f.message.end());
    return out;
  }
  if (f.type == MsgType::sinogram_request) {
    std::vector<std::uint8_t> bits((f.rows + 7) / 8, 0);
    for (std::size_t i = 0; i < f.rows; ++i)
      if (f.observed[i]) bits[i / 8] |= std::uint8_t(1u << (i % 8));
    out.insert(out.end(), bits.begin(), bits.end());
  }
  for (float v : f.payload) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

/// Decodes exactly one frame; trailing bytes are an error.
inline Frame decode(std::span<const std::uint8_t> bytes) {
  const auto h = detail::parse_header(bytes);
  const std::size_t body = detail::body_size(h);
  if (bytes.size() != header_size + body)
    throw frame_error("frame length " + std::to_string(bytes.size()) + " does not match header (" +
                      std::to_string(header_size + body) + ")");
  Frame f;
  f.type = h.type;
  f.version = bytes[4];
  f.rows = h.rows;
  f.cols = h.cols;
  std::size_t at = header_size;
  if (h.type == MsgType::hello) {
    if (h.rows != 0 || h.cols != 0) throw frame_error("hello frame must be empty");
    return f;
  }
  if (h.type == MsgType::error) {
    f.message.assign(reinterpret_cast<const char*>(bytes.data() + at), body);
    return f;
  }
  if (h.type == MsgType::sinogram_request) {
    f.observed.resize(h.rows);
    for (std::size_t i = 0; i < h.rows; ++i) f.observed[i] = (bytes[at + i / 8] >> (i % 8)) & 1u;
    at += (h.rows + 7) / 8;
  }
  const std::size_t cells = std::size_t(h.rows) * std::size_t(h.cols);
  f.payload.resize(cells);
  for (std::size_t i = 0; i < cells; ++i)
    f.payload[i] = std::bit_cast<float>(detail::get_u32(bytes, at + 4 * i));
  return f;
}

// ---- blocking fd I/O with deadlines -------------------------------------

namespace detail {

using clock = std::chrono::steady_clock;

inline int remaining_ms(clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now());
  return left.count() > 0 ? static_cast<int>(left.count()) : 0;
}

inline void wait_fd(int fd, short events, clock::time_point deadline) {
  for (;;) {
    pollfd p{fd, events, 0};
    const int rc = ::poll(&p, 1, remaining_ms(deadline));
    if (rc > 0) return;
    if (rc == 0) throw transport_error("agent timed out");
    if (errno != EINTR) throw transport_error(std::string("poll: ") + std::strerror(errno));
  }
}

inline void read_exact(int fd, std::uint8_t* dst, std::size_t n, clock::time_point deadline) {
  while (n > 0) {
    wait_fd(fd, POLLIN, deadline);
    const ssize_t got = ::read(fd, dst, n);
    if (got == 0) throw transport_error("agent closed its output stream");
    if (got < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw transport_error(std::string("read: ") + std::strerror(errno));
    }
    dst += got;
    n -= static_cast<std::size_t>(got);
  }
}

inline void write_all(int fd, std::span<const std::uint8_t> data, clock::time_point deadline,
                      bool is_socket) {
  std::size_t done = 0;
  while (done < data.size()) {
    wait_fd(fd, POLLOUT, deadline);
    const ssize_t put = is_socket ? ::send(fd, data.data() + done, data.size() - done, MSG_NOSIGNAL)
                                  : ::write(fd, data.data() + done, data.size() - done);
    if (put < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw transport_error(std::string("write: ") + std::strerror(errno));
    }
    done += static_cast<std::size_t>(put);
  }
}

}  // namespace detail

/// Reads one complete frame from `fd`.
inline Frame read_frame(int fd, std::chrono::milliseconds timeout = std::chrono::seconds(30)) {
  const auto deadline = detail::clock::now() + timeout;
  std::vector<std::uint8_t> buf(header_size);
  detail::read_exact(fd, buf.data(), header_size, deadline);
  const auto h = detail::parse_header(buf);
  const std::size_t body = detail::body_size(h);
  buf.resize(header_size + body);
  detail::read_exact(fd, buf.data() + header_size, body, deadline);
  return decode(buf);
}

inline void write_frame(int fd, const Frame& f,
                        std::chrono::milliseconds timeout = std::chrono::seconds(30),
                        bool is_socket = false) {
  const auto bytes = encode(f);
  detail::write_all(fd, bytes, detail::clock::now() + timeout, is_socket);
}

// ---- client ---------------------------------------------------------------

/// Handle to an external agent process speaking the protocol on its
/// standard input and output. Requests on one handle are serialized; a
/// transport failure marks the handle dead.
class AgentClient {
 public:
  /// Launches `command` through /bin/sh and performs the hello exchange.
  static std::shared_ptr<AgentClient> spawn(const std::string& command,
                                            std::chrono::milliseconds timeout = std::chrono::seconds(30)) {
    int sv[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0)
      throw transport_error(std::string("socketpair: ") + std::strerror(errno));
    const pid_t pid = ::fork();
    if (pid < 0) {
      ::close(sv[0]);
      ::close(sv[1]);
      throw transport_error(std::string("fork: ") + std::strerror(errno));
    }
    if (pid == 0) {
      ::setpgid(0, 0);  // own group, so teardown reaches anything the shell starts
      ::dup2(sv[1], STDIN_FILENO);
      ::dup2(sv[1], STDOUT_FILENO);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::setpgid(pid, pid);
    ::close(sv[1]);
    auto client = std::shared_ptr<AgentClient>(new AgentClient(sv[0], pid, command, timeout));
    client->handshake();
    return client;
  }

  AgentClient(const AgentClient&) = delete;
  AgentClient& operator=(const AgentClient&) = delete;

  ~AgentClient() {
    if (fd_ >= 0) ::close(fd_);
    if (pid_ > 0) {
      for (int i = 0; i < 100; ++i) {
        if (::waitpid(pid_, nullptr, WNOHANG) == pid_) return;
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
      }
      ::kill(-pid_, SIGKILL);
      ::waitpid(pid_, nullptr, 0);
    }
  }

  bool alive() const {
    std::lock_guard lock(mutex_);
    return alive_;
  }
  const std::string& command() const { return command_; }

  /// One request, one response. Agent-reported errors surface as
  /// transport_error carrying the agent's message.
  Frame call(const Frame& request) {
    std::lock_guard lock(mutex_);
    if (!alive_) throw transport_error("agent '" + command_ + "' is not live");
    Frame reply;
    try {
      write_frame(fd_, request, timeout_, true);
      reply = read_frame(fd_, timeout_);
    } catch (const transport_error&) {
      alive_ = false;
      throw;
    }
    if (reply.type == MsgType::error)
      throw transport_error("agent '" + command_ + "' reported: " + reply.message);
    if (reply.type != MsgType::response && request.type != MsgType::hello) {
      alive_ = false;
      throw frame_error("agent replied with unexpected message type");
    }
    return reply;
  }

  Image process_image(const Image& img) {
    const Frame reply = call(image_request(img));
    if (reply.rows != img.height || reply.cols != img.width)
      throw transport_error("image agent returned a " + std::to_string(reply.rows) + "x" +
                            std::to_string(reply.cols) + " image");
    Image out(img.width, img.height, img.pixel_size);
    std::copy(reply.payload.begin(), reply.payload.end(), out.values.begin());
    if (!all_finite(out.values)) throw numerical_error("image agent returned non-finite values");
    return out;
  }

  Sinogram complete_sinogram(const Sinogram& sino, const AngularMask& mask) {
    const Frame reply = call(sinogram_request(sino, mask));
    if (reply.rows != sino.n_angles || reply.cols != sino.n_detectors)
      throw transport_error("completion agent returned a " + std::to_string(reply.rows) + "x" +
                            std::to_string(reply.cols) + " sinogram");
    Sinogram out(sino.n_angles, sino.n_detectors);
    std::copy(reply.payload.begin(), reply.payload.end(), out.values.begin());
    if (!all_finite(out.values)) throw numerical_error("completion agent returned non-finite values");
    return out;
  }

 private:
  AgentClient(int fd, pid_t pid, std::string command, std::chrono::milliseconds timeout)
      : fd_(fd), pid_(pid), command_(std::move(command)), timeout_(timeout) {}

  void handshake() {
    const Frame reply = call(hello_frame());
    if (reply.type != MsgType::hello || reply.version != version) {
      alive_ = false;
      throw frame_error("agent did not answer hello with version 1");
    }
  }

  int fd_;
  pid_t pid_;
  std::string command_;
  std::chrono::milliseconds timeout_;
  mutable std::mutex mutex_;
  bool alive_ = true;
};

using AgentHandle = std::shared_ptr<AgentClient>;

}  // namespace dice::protocol
