#include "flair/denoisers.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>

#include "binary_io.hpp"
#include "flair/degrade.hpp"

namespace flair {

VideoTensor OracleDenoiser::predict(const VideoTensor& x_t, const VideoTensor*, int t,
                                    const NoiseSchedule& sched) {
  require_same_shape(x_t, truth_, "OracleDenoiser");
  return recompute_epsilon(x_t, truth_, t, sched);
}

VideoTensor ZeroDenoiser::predict(const VideoTensor& x_t, const VideoTensor*, int,
                                  const NoiseSchedule&) {
  return VideoTensor(x_t.shape());
}

ShrinkageDenoiser::ShrinkageDenoiser(double strength) : strength_(strength) {
  if (!(strength >= 0.0) || !std::isfinite(strength)) {
    throw std::invalid_argument("ShrinkageDenoiser: strength must be finite and >= 0");
  }
}

VideoTensor ShrinkageDenoiser::estimate_x0(const VideoTensor& x_t, int t,
                                           const NoiseSchedule& sched) const {
  const double ab = sched.alpha_bar(t);
  const double radius = strength_ * std::sqrt(1.0 - ab) / std::sqrt(ab);
  return gaussian_smooth((1.0 / std::sqrt(ab)) * x_t, radius);
}

VideoTensor ShrinkageDenoiser::predict(const VideoTensor& x_t, const VideoTensor*, int t,
                                       const NoiseSchedule& sched) {
  if (strength_ == 0.0) return VideoTensor(x_t.shape());
  return recompute_epsilon(x_t, estimate_x0(x_t, t, sched), t, sched);
}

UnsharpEnhancer::UnsharpEnhancer(double amount, double radius) : amount_(amount), radius_(radius) {
  if (!(amount >= 0.0)) throw std::invalid_argument("UnsharpEnhancer: amount must be >= 0");
  if (!(radius > 0.0)) throw std::invalid_argument("UnsharpEnhancer: radius must be > 0");
}

VideoTensor UnsharpEnhancer::enhance(const VideoTensor& x) {
  if (amount_ == 0.0) return x;
  VideoTensor smooth = gaussian_smooth(x, radius_);
  return clamp_model_range(linear_combination(1.0 + amount_, x, -amount_, smooth));
}

// ---------------------------------------------------------------------------
// Subprocess transport

namespace detail {

class ChildProcess {
 public:
  explicit ChildProcess(const std::string& command) : command_(command) {
    // A dead child must surface as EPIPE, not kill the host.
    ::signal(SIGPIPE, SIG_IGN);
    int to_child[2];
    int from_child[2];
    if (::pipe(to_child) != 0) throw std::runtime_error("pipe failed: " + std::string(std::strerror(errno)));
    if (::pipe(from_child) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw std::runtime_error("pipe failed: " + std::string(std::strerror(errno)));
    }
    pid_ = ::fork();
    if (pid_ < 0) throw std::runtime_error("fork failed for '" + command + "'");
    if (pid_ == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
    ::fcntl(write_fd_, F_SETFD, FD_CLOEXEC);
    ::fcntl(read_fd_, F_SETFD, FD_CLOEXEC);
  }

  ~ChildProcess() {
    if (write_fd_ >= 0) ::close(write_fd_);
    if (read_fd_ >= 0) ::close(read_fd_);
    if (pid_ > 0) {
      int status = 0;
      ::waitpid(pid_, &status, 0);
    }
  }

  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  void write_all(std::uint64_t id, const std::string& bytes) {
    const char* p = bytes.data();
    std::size_t left = bytes.size();
    while (left > 0) {
      ssize_t n = ::write(write_fd_, p, left);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) {
        throw ProtocolError(id, "backend '" + command_ + "' stopped accepting input (" +
                                    std::strerror(errno) + ")");
      }
      p += n;
      left -= static_cast<std::size_t>(n);
    }
  }

  std::string read_exact(std::uint64_t id, std::size_t count) {
    std::string out(count, '\0');
    std::size_t got = 0;
    while (got < count) {
      ssize_t n = ::read(read_fd_, out.data() + got, count - got);
      if (n < 0 && errno == EINTR) continue;
      if (n < 0) throw ProtocolError(id, "read from backend failed: " + std::string(std::strerror(errno)));
      if (n == 0) {
        throw ProtocolError(id, "backend '" + command_ + "' closed its output after " +
                                    std::to_string(got) + " of " + std::to_string(count) +
                                    " bytes");
      }
      got += static_cast<std::size_t>(n);
    }
    return out;
  }

 private:
  std::string command_;
  pid_t pid_ = -1;
  int write_fd_ = -1;
  int read_fd_ = -1;
};

namespace {

void put_shape(std::string& out, const VideoShape& s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.frames));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.height));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.width));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.channels));
}

void put_payload(std::string& out, const VideoTensor& v) {
  for (double x : v.values()) put_le<float>(out, static_cast<float>(x));
}

VideoTensor read_response(ChildProcess& child, std::uint64_t id, const char* magic,
                          const VideoShape& shape) {
  std::string header = child.read_exact(id, 12);
  if (std::memcmp(header.data(), magic, 4) != 0) {
    throw ProtocolError(id, std::string("bad response magic, expected ") + std::string(magic, 4));
  }
  auto got_id = get_le<std::uint64_t>(header.data() + 4);
  if (got_id != id) {
    throw ProtocolError(id, "response carries request id " + std::to_string(got_id));
  }
  std::string payload = child.read_exact(id, shape.size() * sizeof(float));
  VideoTensor out(shape);
  auto vals = out.values();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    float f = get_le<float>(payload.data() + i * sizeof(float));
    if (!std::isfinite(f)) throw ProtocolError(id, "backend returned a non-finite value");
    vals[i] = static_cast<double>(f);
  }
  out.set_unclamped(true);
  return out;
}

}  // namespace
}  // namespace detail

SubprocessDenoiser::SubprocessDenoiser(const std::string& command)
    : child_(std::make_unique<detail::ChildProcess>(command)) {}

SubprocessDenoiser::~SubprocessDenoiser() = default;

VideoTensor SubprocessDenoiser::predict(const VideoTensor& x_t, const VideoTensor* condition, int t,
                                        const NoiseSchedule&) {
  const std::uint64_t id = next_id_++;
  if (condition) require_same_shape(x_t, *condition, "SubprocessDenoiser condition");
  std::string req;
  req.reserve(29 + 8 * x_t.size());
  req.append("FLDN", 4);
  detail::put_le<std::uint64_t>(req, id);
  detail::put_le<std::uint32_t>(req, static_cast<std::uint32_t>(t));
  detail::put_le<std::uint8_t>(req, condition ? 0 : 1);
  detail::put_shape(req, x_t.shape());
  detail::put_payload(req, x_t);
  if (condition) {
    detail::put_payload(req, *condition);
  } else {
    req.append(x_t.size() * sizeof(float), '\0');
  }
  child_->write_all(id, req);
  return detail::read_response(*child_, id, "FLEP", x_t.shape());
}

SubprocessEnhancer::SubprocessEnhancer(const std::string& command)
    : child_(std::make_unique<detail::ChildProcess>(command)) {}

SubprocessEnhancer::~SubprocessEnhancer() = default;

VideoTensor SubprocessEnhancer::enhance(const VideoTensor& x) {
  const std::uint64_t id = next_id_++;
  std::string req;
  req.append("FLEN", 4);
  detail::put_le<std::uint64_t>(req, id);
  detail::put_shape(req, x.shape());
  detail::put_payload(req, x);
  child_->write_all(id, req);
  return detail::read_response(*child_, id, "FLEO", x.shape());
}

}  // namespace flair
