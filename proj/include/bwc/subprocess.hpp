#pragma once

#include <chrono>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "bwc/engines.hpp"
#include "bwc/wire.hpp"

namespace bwc {

/// A child process speaking the line protocol on stdin/stdout. One request
/// is in flight at a time; callers serialize through `call`.
class SubprocessChannel {
 public:
  explicit SubprocessChannel(std::vector<std::string> argv);
  ~SubprocessChannel();
  SubprocessChannel(const SubprocessChannel&) = delete;
  SubprocessChannel& operator=(const SubprocessChannel&) = delete;

  /// Sends `request` (its id is overwritten) and waits for the response
  /// with the matching id. Responses for earlier, timed-out ids are
  /// discarded. Throws EngineError(timeout) after `timeout`, and
  /// EngineError(unavailable/protocol) if the child dies or misbehaves.
  wire::Response call(wire::Request request, std::chrono::milliseconds timeout,
                      const std::string& engine_name);

  bool alive() const noexcept { return pid_ > 0; }

 private:
  bool read_line(std::string& line, std::chrono::steady_clock::time_point deadline);
  void shutdown();

  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::int64_t next_id_ = 1;
  std::string buffer_;
};

/// Fixed set of channels to the same backend command. `acquire` blocks
/// until one is free.
class ChannelPool {
 public:
  ChannelPool(std::vector<std::string> argv, std::size_t size);
  wire::Response call(wire::Request request, std::chrono::milliseconds timeout,
                      const std::string& engine_name);

 private:
  std::vector<std::unique_ptr<SubprocessChannel>> channels_;
  std::vector<bool> busy_;
  std::mutex mutex_;
  std::condition_variable free_;
};

struct SubprocessOptions {
  std::vector<std::string> argv;
  std::chrono::milliseconds timeout{120000};
  std::size_t pool_size = 1;
};

class SubprocessTranscriber final : public Transcriber {
 public:
  SubprocessTranscriber(std::string name, const SubprocessOptions& options);
  const EngineDescriptor& descriptor() const override { return desc_; }
  std::string transcribe(const AudioRef& audio, const Segment& segment) override;

 private:
  EngineDescriptor desc_;
  std::chrono::milliseconds timeout_;
  ChannelPool pool_;
};

class SubprocessAligner final : public ForcedAligner {
 public:
  SubprocessAligner(std::string name, const SubprocessOptions& options);
  const EngineDescriptor& descriptor() const override { return desc_; }
  std::vector<WordTiming> force_align(const AudioRef& audio, const Segment& segment,
                                      std::string_view transcript) override;

 private:
  EngineDescriptor desc_;
  std::chrono::milliseconds timeout_;
  ChannelPool pool_;
};

class SubprocessScorer final : public FrameScorer {
 public:
  SubprocessScorer(std::string name, const SubprocessOptions& options);
  const EngineDescriptor& descriptor() const override { return desc_; }
  double score_frames(const MelFeatures& features, const ChunkContext& context = {}) override;

 private:
  EngineDescriptor desc_;
  std::chrono::milliseconds timeout_;
  ChannelPool pool_;
};

}  // namespace bwc
