// Copyright 2026 The layerserve Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef LAYERSERVE_CHANNEL_HPP_
#define LAYERSERVE_CHANNEL_HPP_

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "layerserve/envelope.hpp"
#include "layerserve/executor.hpp"
#include "layerserve/tensor.hpp"
#include "layerserve/wire.hpp"

namespace layerserve {

/// The connection to the executor failed or was closed.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The executor answered with something that does not match the request.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The executor rejected a request (bad width, unknown layer, shutdown).
class ExecutorRejected : public std::runtime_error {
 public:
  ExecutorRejected(wire::ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  wire::ErrorCode code() const { return code_; }

 private:
  wire::ErrorCode code_;
};

/// Per-client exchange area of capacity_tokens x width floats. Requests and
/// replies of every layer share it, so width is the model's largest layer
/// dimension. Grows to exactly the requested token count when a request does
/// not fit and never shrinks.
class SharedBuffer {
 public:
  SharedBuffer(std::uint32_t owner, std::size_t capacity_tokens,
               std::size_t width);

  std::uint32_t owner() const { return owner_; }
  std::size_t capacity_tokens() const { return capacity_tokens_; }
  std::size_t width() const { return width_; }
  std::size_t bytes() const { return data_.size() * sizeof(float); }
  std::size_t resize_count() const { return resizes_; }

  void ensure(std::size_t tokens);
  std::span<float> view(std::size_t floats);

 private:
  std::uint32_t owner_;
  std::size_t capacity_tokens_;
  std::size_t width_;
  std::size_t resizes_ = 0;
  std::vector<float> data_;
};

/// Client side of a client/executor connection. One logical stream: at most
/// one request in flight.
class Channel {
 public:
  virtual ~Channel() = default;

  virtual void open(std::uint32_t client_id, JobKind kind) = 0;
  virtual void close() = 0;

  /// Sends `input` ([tokens, width]) for one layer pass and blocks for the
  /// [tokens, out_width] reply.
  virtual Tensor call(const LayerAddress& layer, Pass pass, const Tensor& input,
                      std::size_t out_width) = 0;

  /// Payload copies made by the channel itself (serialization), excluding
  /// the client's write into the exchange area.
  virtual std::uint64_t payload_copies() const = 0;
  /// Bytes of client-owned transfer buffers.
  virtual std::uint64_t buffer_bytes() const = 0;
  virtual std::string name() const = 0;

  std::uint64_t requests_sent() const { return requests_; }

 protected:
  std::uint64_t next_request_id() { return ++requests_; }
  std::uint64_t requests_ = 0;
};

/// Co-located client: payload goes through the client's SharedBuffer and only
/// metadata is handed to the executor.
class LocalChannel : public Channel {
 public:
  LocalChannel(ExecutorService& executor, std::size_t batch, std::size_t seq,
               std::size_t max_width);
  ~LocalChannel() override;

  void open(std::uint32_t client_id, JobKind kind) override;
  void close() override;
  Tensor call(const LayerAddress& layer, Pass pass, const Tensor& input,
              std::size_t out_width) override;
  std::uint64_t payload_copies() const override { return 0; }
  std::uint64_t buffer_bytes() const override;
  std::string name() const override { return "local"; }

  const SharedBuffer& buffer() const { return *buffer_; }

 private:
  ExecutorService& executor_;
  std::size_t batch_;
  std::size_t seq_;
  std::size_t max_width_;
  std::uint32_t client_id_ = 0;
  bool open_ = false;
  std::unique_ptr<SharedBuffer> buffer_;
};

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

/// Parses "host:port".
Endpoint parse_endpoint(const std::string& text);
std::string to_string(const Endpoint& endpoint);

/// Remote client: frames every request over a TCP byte stream.
class RemoteChannel : public Channel {
 public:
  explicit RemoteChannel(Endpoint endpoint);
  ~RemoteChannel() override;

  void open(std::uint32_t client_id, JobKind kind) override;
  void close() override;
  Tensor call(const LayerAddress& layer, Pass pass, const Tensor& input,
              std::size_t out_width) override;
  std::uint64_t payload_copies() const override { return copies_; }
  std::uint64_t buffer_bytes() const override;
  std::string name() const override { return "remote"; }

  /// Writes raw bytes to the stream; used to exercise server-side rejection.
  void send_raw(std::span<const std::uint8_t> bytes);

 private:
  wire::Frame read_frame();

  Endpoint endpoint_;
  int fd_ = -1;
  std::uint32_t client_id_ = 0;
  std::uint64_t copies_ = 0;
  std::vector<std::uint8_t> scratch_;
};

/// Executor side of the byte-stream transport. One thread per connection;
/// a dropped connection deregisters its clients and fails nothing else.
class RemoteServer {
 public:
  RemoteServer(ExecutorService& executor, Endpoint bind);
  ~RemoteServer();
  RemoteServer(const RemoteServer&) = delete;
  RemoteServer& operator=(const RemoteServer&) = delete;

  void start();
  void stop();
  /// Bound port (useful when constructed with port 0).
  std::uint16_t port() const { return port_; }
  std::uint64_t connections_accepted() const { return accepted_; }
  std::uint64_t connections_rejected() const { return rejected_; }

 private:
  struct Connection;
  void accept_loop();
  void serve(std::shared_ptr<Connection> conn);

  ExecutorService& executor_;
  Endpoint bind_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread accept_thread_;
  std::mutex mu_;
  std::vector<std::shared_ptr<Connection>> connections_;
  std::vector<std::thread> threads_;
  std::atomic<std::uint64_t> accepted_{0};
  std::atomic<std::uint64_t> rejected_{0};
};

}  // namespace layerserve

#endif  // LAYERSERVE_CHANNEL_HPP_
