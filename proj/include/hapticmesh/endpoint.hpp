#pragma once

// Delivery side of a session: per-limb endpoints fed through bounded queues,
// each drained by its own transport thread.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "hapticmesh/error.hpp"
#include "hapticmesh/log.hpp"
#include "hapticmesh/net.hpp"
#include "hapticmesh/wire.hpp"

namespace hapticmesh {

using Clock = std::chrono::steady_clock;

struct OutboundMessage {
  wire::CollisionMessage msg;
  std::uint64_t tick = 0;
  Clock::time_point produced;
};

class Endpoint {
 public:
  virtual ~Endpoint() = default;
  // Called from the endpoint's transport thread only. Throws on delivery failure.
  virtual void deliver(std::span<const OutboundMessage> batch) = 0;
  [[nodiscard]] virtual std::string name() const = 0;
};

// In-process sink that keeps everything it was handed.
class MemoryEndpoint final : public Endpoint {
 public:
  struct Delivered {
    OutboundMessage message;
    Clock::time_point delivered;
  };

  void deliver(std::span<const OutboundMessage> batch) override {
    const auto now = Clock::now();
    std::lock_guard lock(mu_);
    for (const auto& m : batch) delivered_.push_back({m, now});
  }
  [[nodiscard]] std::string name() const override { return "in-process"; }

  [[nodiscard]] std::vector<Delivered> delivered() const {
    std::lock_guard lock(mu_);
    return delivered_;
  }

 private:
  mutable std::mutex mu_;
  std::vector<Delivered> delivered_;
};

// Length-prefixed frames over a reliable stream. One write per batch.
class StreamEndpoint final : public Endpoint {
 public:
  StreamEndpoint(net::TcpStream stream, std::string label) : stream_(std::move(stream)), label_(std::move(label)) {}
  ~StreamEndpoint() override { stream_.shutdown(); }

  void deliver(std::span<const OutboundMessage> batch) override {
    buffer_.clear();
    for (const auto& m : batch) wire::append_frame(buffer_, wire::encode_collision(m.msg));
    stream_.write_all(buffer_);
  }
  [[nodiscard]] std::string name() const override { return label_; }

 private:
  net::TcpStream stream_;
  std::string label_;
  std::vector<std::uint8_t> buffer_;
};

// Bounded FIFO. When full, the oldest continuous message is dropped to make
// room; onset messages are never dropped, so the queue may exceed capacity
// when it holds nothing else.
class MessageQueue {
 public:
  explicit MessageQueue(std::size_t capacity) : capacity_(capacity) {}

  void push(std::span<const OutboundMessage> batch) {
    {
      std::lock_guard lock(mu_);
      for (const auto& m : batch) {
        if (items_.size() >= capacity_) drop_one_continuous();
        items_.push_back(m);
      }
    }
    cv_.notify_one();
  }

  // Blocks up to `wait` for data; returns everything queued.
  std::vector<OutboundMessage> pop_all(std::chrono::milliseconds wait) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, wait, [&] { return !items_.empty() || closed_; });
    std::vector<OutboundMessage> out(items_.begin(), items_.end());
    items_.clear();
    return out;
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  [[nodiscard]] bool drained() const {
    std::lock_guard lock(mu_);
    return closed_ && items_.empty();
  }
  [[nodiscard]] std::uint64_t dropped() const {
    std::lock_guard lock(mu_);
    return dropped_;
  }

 private:
  void drop_one_continuous() {
    for (auto it = items_.begin(); it != items_.end(); ++it) {
      if (!it->msg.onset) {
        items_.erase(it);
        ++dropped_;
        return;
      }
    }
  }

  std::size_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<OutboundMessage> items_;
  bool closed_ = false;
  std::uint64_t dropped_ = 0;
};

struct EndpointStats {
  std::string name;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
  std::uint64_t failed = 0;
  std::uint64_t bytes = 0;
  std::vector<double> latencies_ms;  // production to write completion
};

// Owns the transport thread for one endpoint.
class EndpointPump {
 public:
  EndpointPump(std::shared_ptr<Endpoint> endpoint, std::size_t capacity)
      : endpoint_(std::move(endpoint)), queue_(capacity) {
    stats_.name = endpoint_->name();
    thread_ = std::thread([this] { loop(); });
  }
  EndpointPump(const EndpointPump&) = delete;
  EndpointPump& operator=(const EndpointPump&) = delete;
  ~EndpointPump() { finish(); }

  void push(std::span<const OutboundMessage> batch) { queue_.push(batch); }

  // Drains the queue and joins the transport thread.
  EndpointStats finish() {
    queue_.close();
    if (thread_.joinable()) thread_.join();
    stats_.dropped = queue_.dropped();
    return stats_;
  }

 private:
  void loop() {
    while (!queue_.drained()) {
      auto batch = queue_.pop_all(std::chrono::milliseconds(20));
      if (batch.empty()) continue;
      if (failed_) {
        stats_.failed += batch.size();
        continue;
      }
      try {
        endpoint_->deliver(batch);
      } catch (const Error& e) {
        logger()->error("delivery to {} failed: {}", endpoint_->name(), e.what());
        failed_ = true;
        stats_.failed += batch.size();
        continue;
      }
      const auto now = Clock::now();
      for (const auto& m : batch) {
        stats_.latencies_ms.push_back(std::chrono::duration<double, std::milli>(now - m.produced).count());
      }
      stats_.delivered += batch.size();
      stats_.bytes += batch.size() * (wire::kCollisionPayloadSize + 1);
    }
  }

  std::shared_ptr<Endpoint> endpoint_;
  MessageQueue queue_;
  EndpointStats stats_;
  bool failed_ = false;
  std::thread thread_;
};

}  // namespace hapticmesh
