#include "bwc/subprocess.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include "bwc/textnorm.hpp"

namespace bwc {

namespace {

// A dead child must surface as an EngineError, not kill the core.
void ignore_sigpipe_once() {
  static const bool done = [] {
    std::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)done;
}

bool write_all(int fd, const std::string& data) {
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::write(fd, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    off += static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace

SubprocessChannel::SubprocessChannel(std::vector<std::string> argv) {
  if (argv.empty()) throw ValidationError("subprocess engine needs a command");
  ignore_sigpipe_once();
  int in_pipe[2], out_pipe[2];
  if (::pipe(in_pipe) != 0) throw IoError(std::string("pipe failed: ") + std::strerror(errno));
  if (::pipe(out_pipe) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw IoError(std::string("pipe failed: ") + std::strerror(errno));
  }
  std::vector<char*> cargv;
  for (auto& a : argv) cargv.push_back(a.data());
  cargv.push_back(nullptr);

  const pid_t pid = ::fork();
  if (pid < 0) throw IoError(std::string("fork failed: ") + std::strerror(errno));
  if (pid == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    ::execvp(cargv[0], cargv.data());
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::fcntl(in_pipe[1], F_SETFD, FD_CLOEXEC);
  ::fcntl(out_pipe[0], F_SETFD, FD_CLOEXEC);
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
}

SubprocessChannel::~SubprocessChannel() { shutdown(); }

void SubprocessChannel::shutdown() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    int status = 0;
    // Closing stdin asks a well-behaved backend to exit; give it a moment.
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) == pid_) {
        pid_ = -1;
        return;
      }
      ::usleep(2000);
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

bool SubprocessChannel::read_line(std::string& line, std::chrono::steady_clock::time_point deadline) {
  while (true) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return true;
    }
    const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (remaining.count() <= 0) return false;
    pollfd pfd{from_child_, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw IoError(std::string("poll failed: ") + std::strerror(errno));
    }
    if (rc == 0) return false;
    char buf[4096];
    const ssize_t n = ::read(from_child_, buf, sizeof buf);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError(std::string("read failed: ") + std::strerror(errno));
    }
    if (n == 0) throw IoError("backend closed its output");
    buffer_.append(buf, static_cast<std::size_t>(n));
  }
}

wire::Response SubprocessChannel::call(wire::Request request, std::chrono::milliseconds timeout,
                                       const std::string& engine_name) {
  if (pid_ <= 0) throw EngineError(EngineFailure::unavailable, engine_name, "backend process is gone");
  request.id = next_id_++;
  if (!write_all(to_child_, wire::encode(request) + "\n")) {
    shutdown();
    throw EngineError(EngineFailure::unavailable, engine_name, "backend stopped accepting requests");
  }
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  std::string line;
  try {
    while (read_line(line, deadline)) {
      wire::Response resp;
      try {
        resp = wire::decode_response(line);
      } catch (const Error& e) {
        throw EngineError(EngineFailure::protocol, engine_name, e.what());
      }
      if (resp.id == request.id) return resp;
      // Late answer to a request that already timed out.
    }
  } catch (const IoError& e) {
    shutdown();
    throw EngineError(EngineFailure::unavailable, engine_name, e.what());
  }
  throw EngineError(EngineFailure::timeout, engine_name,
                    "no response within " + std::to_string(timeout.count()) + " ms");
}

ChannelPool::ChannelPool(std::vector<std::string> argv, std::size_t size) {
  if (size == 0) size = 1;
  for (std::size_t i = 0; i < size; ++i) channels_.push_back(std::make_unique<SubprocessChannel>(argv));
  busy_.assign(size, false);
}

wire::Response ChannelPool::call(wire::Request request, std::chrono::milliseconds timeout,
                                 const std::string& engine_name) {
  std::size_t slot = 0;
  {
    std::unique_lock lock(mutex_);
    free_.wait(lock, [&] {
      for (std::size_t i = 0; i < busy_.size(); ++i) {
        if (!busy_[i]) {
          slot = i;
          return true;
        }
      }
      return false;
    });
    busy_[slot] = true;
  }
  struct Release {
    ChannelPool* pool;
    std::size_t slot;
    ~Release() {
      {
        std::lock_guard lock(pool->mutex_);
        pool->busy_[slot] = false;
      }
      pool->free_.notify_one();
    }
  } release{this, slot};
  return channels_[slot]->call(std::move(request), timeout, engine_name);
}

namespace {

wire::Request base_request(wire::Op op, const AudioRef& audio, const Segment& segment) {
  wire::Request r;
  r.op = op;
  r.audio_path = audio.path;
  r.start_s = segment.start();
  r.end_s = segment.end();
  return r;
}

[[noreturn]] void raise_failure(const wire::Response& resp, const std::string& engine, EngineFailure kind) {
  throw EngineError(kind, engine, resp.error.value_or("backend reported failure"));
}

}  // namespace

SubprocessTranscriber::SubprocessTranscriber(std::string name, const SubprocessOptions& options)
    : desc_{std::move(name), EngineKind::transcriber, Transport::subprocess},
      timeout_(options.timeout),
      pool_(options.argv, options.pool_size) {}

std::string SubprocessTranscriber::transcribe(const AudioRef& audio, const Segment& segment) {
  check_bounds(desc_, audio, segment);
  const auto resp = pool_.call(base_request(wire::Op::transcribe, audio, segment), timeout_, desc_.name);
  if (!resp.ok) raise_failure(resp, desc_.name, EngineFailure::unavailable);
  if (!resp.text) throw EngineError(EngineFailure::protocol, desc_.name, "response lacks 'text'");
  return *resp.text;
}

SubprocessAligner::SubprocessAligner(std::string name, const SubprocessOptions& options)
    : desc_{std::move(name), EngineKind::forced_aligner, Transport::subprocess},
      timeout_(options.timeout),
      pool_(options.argv, options.pool_size) {}

std::vector<WordTiming> SubprocessAligner::force_align(const AudioRef& audio, const Segment& segment,
                                                       std::string_view transcript) {
  const auto tokens = normalize(transcript).tokens;
  if (tokens.empty()) throw EngineError(EngineFailure::precondition, desc_.name, "empty transcript");
  check_bounds(desc_, audio, segment);
  auto req = base_request(wire::Op::force_align, audio, segment);
  req.transcript = std::string(transcript);
  const auto resp = pool_.call(std::move(req), timeout_, desc_.name);
  if (!resp.ok) raise_failure(resp, desc_.name, EngineFailure::alignment_failure);
  if (!resp.words) throw EngineError(EngineFailure::protocol, desc_.name, "response lacks 'words'");
  std::vector<WordTiming> out;
  std::int64_t prev_end = segment.start_ms();
  for (const auto& w : *resp.words) {
    Segment span = Segment::from_millis(0, 1);
    try {
      span = Segment::from_seconds(w.s, w.e);
    } catch (const Error& e) {
      throw EngineError(EngineFailure::alignment_failure, desc_.name, e.what());
    }
    if (span.start_ms() < prev_end || span.end_ms() > segment.end_ms()) {
      throw EngineError(EngineFailure::alignment_failure, desc_.name,
                        "word timings unsorted, overlapping or outside the segment");
    }
    prev_end = span.end_ms();
    out.push_back({w.w, span});
  }
  if (out.size() != tokens.size()) {
    throw EngineError(EngineFailure::alignment_failure, desc_.name,
                      "returned " + std::to_string(out.size()) + " words for " +
                          std::to_string(tokens.size()) + " tokens");
  }
  return out;
}

SubprocessScorer::SubprocessScorer(std::string name, const SubprocessOptions& options)
    : desc_{std::move(name), EngineKind::frame_scorer, Transport::subprocess},
      timeout_(options.timeout),
      pool_(options.argv, options.pool_size) {}

double SubprocessScorer::score_frames(const MelFeatures& features, const ChunkContext& context) {
  check_shape(desc_, features, input_bins());
  wire::Request req;
  req.op = wire::Op::score_frames;
  req.audio_path = context.audio_path;
  if (context.segment) {
    req.start_s = context.segment->start();
    req.end_s = context.segment->end();
  }
  // Rows are mel bins, columns frames.
  std::vector<std::vector<double>> rows(features.bins, std::vector<double>(features.frames));
  for (std::size_t b = 0; b < features.bins; ++b) {
    for (std::size_t t = 0; t < features.frames; ++t) rows[b][t] = features.at(b, t);
  }
  req.features = std::move(rows);
  const auto resp = pool_.call(std::move(req), timeout_, desc_.name);
  if (!resp.ok) raise_failure(resp, desc_.name, EngineFailure::unavailable);
  if (!resp.score || !(*resp.score >= 0.0 && *resp.score <= 1.0)) {
    throw EngineError(EngineFailure::protocol, desc_.name, "score missing or outside [0, 1]");
  }
  return *resp.score;
}

}  // namespace bwc
