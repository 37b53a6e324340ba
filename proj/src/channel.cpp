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

#include "layerserve/channel.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <future>
#include <set>

namespace layerserve {
namespace {

bool write_all(int fd, const std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::send(fd, data, n, MSG_NOSIGNAL);
    if (w < 0 && errno == EINTR) continue;
    if (w <= 0) return false;
    data += w;
    n -= static_cast<std::size_t>(w);
  }
  return true;
}

bool read_all(int fd, std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    const ssize_t r = ::recv(fd, data, n, 0);
    if (r < 0 && errno == EINTR) continue;
    if (r <= 0) return false;
    data += r;
    n -= static_cast<std::size_t>(r);
  }
  return true;
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

}  // namespace

SharedBuffer::SharedBuffer(std::uint32_t owner, std::size_t capacity_tokens,
                           std::size_t width)
    : owner_(owner),
      capacity_tokens_(capacity_tokens),
      width_(width),
      data_(capacity_tokens * width) {}

void SharedBuffer::ensure(std::size_t tokens) {
  if (tokens <= capacity_tokens_) return;
  capacity_tokens_ = tokens;
  data_.resize(tokens * width_);
  ++resizes_;
}

std::span<float> SharedBuffer::view(std::size_t floats) {
  return std::span<float>(data_).first(floats);
}

LocalChannel::LocalChannel(ExecutorService& executor, std::size_t batch,
                           std::size_t seq, std::size_t max_width)
    : executor_(executor), batch_(batch), seq_(seq), max_width_(max_width) {}

LocalChannel::~LocalChannel() {
  if (open_) close();
}

void LocalChannel::open(std::uint32_t client_id, JobKind kind) {
  client_id_ = client_id;
  buffer_ = std::make_unique<SharedBuffer>(client_id, batch_ * seq_, max_width_);
  executor_.register_client(client_id, kind);
  open_ = true;
}

void LocalChannel::close() {
  if (!open_) return;
  executor_.deregister_client(client_id_);
  open_ = false;
}

std::uint64_t LocalChannel::buffer_bytes() const {
  return buffer_ ? buffer_->bytes() : 0;
}

Tensor LocalChannel::call(const LayerAddress& layer, Pass pass,
                          const Tensor& input, std::size_t out_width) {
  if (!open_) throw TransportError("local channel is not open");
  const std::size_t tokens = input.rows();
  const std::size_t in_w = input.cols();
  if (in_w > buffer_->width() || out_width > buffer_->width()) {
    throw ProtocolError("layer width exceeds shared buffer width");
  }
  buffer_->ensure(tokens);
  auto in_view = buffer_->view(tokens * in_w);
  std::copy(input.data().begin(), input.data().end(), in_view.begin());

  std::promise<Status> promise;
  auto reply = promise.get_future();
  PendingRequest req;
  req.client_id = client_id_;
  req.request_id = next_request_id();
  req.layer = layer;
  req.pass = pass;
  req.token_count = static_cast<std::uint32_t>(tokens);
  req.width = static_cast<std::uint32_t>(in_w);
  req.input = in_view;
  req.output = buffer_->view(tokens * out_width);
  req.done = [&promise](const Status& s) { promise.set_value(s); };
  executor_.submit(std::move(req));
  const Status s = reply.get();
  if (!s.ok) {
    if (s.code == wire::ErrorCode::kShutdown) {
      throw TransportError("layer " + to_string(layer) + ": " + s.message);
    }
    throw ExecutorRejected(s.code, "layer " + to_string(layer) + ": " + s.message);
  }
  auto out_view = buffer_->view(tokens * out_width);
  return Tensor({tokens, out_width}, std::vector<float>(out_view.begin(), out_view.end()));
}

Endpoint parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) {
    throw std::invalid_argument("endpoint '" + text + "' is not host:port");
  }
  Endpoint e;
  e.host = text.substr(0, colon);
  const int port = std::stoi(text.substr(colon + 1));
  if (port < 0 || port > 65535) {
    throw std::invalid_argument("endpoint port out of range: " + text);
  }
  e.port = static_cast<std::uint16_t>(port);
  return e;
}

std::string to_string(const Endpoint& endpoint) {
  return endpoint.host + ":" + std::to_string(endpoint.port);
}

RemoteChannel::RemoteChannel(Endpoint endpoint) : endpoint_(std::move(endpoint)) {}

RemoteChannel::~RemoteChannel() { close(); }

void RemoteChannel::open(std::uint32_t client_id, JobKind kind) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(endpoint_.port);
  if (::getaddrinfo(endpoint_.host.c_str(), port.c_str(), &hints, &res) != 0) {
    throw TransportError("cannot resolve " + to_string(endpoint_));
  }
  fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd_ < 0 || ::connect(fd_, res->ai_addr, res->ai_addrlen) != 0) {
    ::freeaddrinfo(res);
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
    throw TransportError("cannot connect to " + to_string(endpoint_) + ": " +
                         std::strerror(errno));
  }
  ::freeaddrinfo(res);
  set_nodelay(fd_);
  client_id_ = client_id;
  wire::Frame reg;
  reg.client_id = client_id;
  reg.kind = wire::Kind::kRegister;
  reg.token_count = static_cast<std::uint32_t>(kind);
  wire::encode_into(reg, scratch_);
  if (!write_all(fd_, scratch_.data(), scratch_.size())) {
    throw TransportError("registration with " + to_string(endpoint_) + " failed");
  }
}

void RemoteChannel::close() {
  if (fd_ < 0) return;
  wire::Frame bye;
  bye.client_id = client_id_;
  bye.kind = wire::Kind::kDeregister;
  wire::encode_into(bye, scratch_);
  write_all(fd_, scratch_.data(), scratch_.size());
  ::shutdown(fd_, SHUT_RDWR);
  ::close(fd_);
  fd_ = -1;
}

std::uint64_t RemoteChannel::buffer_bytes() const { return scratch_.capacity(); }

void RemoteChannel::send_raw(std::span<const std::uint8_t> bytes) {
  if (fd_ < 0 || !write_all(fd_, bytes.data(), bytes.size())) {
    throw TransportError("raw write failed");
  }
}

wire::Frame RemoteChannel::read_frame() {
  std::uint8_t header[wire::kHeaderSize];
  if (!read_all(fd_, header, sizeof(header))) {
    throw TransportError("connection to " + to_string(endpoint_) + " closed");
  }
  wire::Frame f = wire::decode_header(header);
  scratch_.resize(wire::payload_bytes(f));
  if (!read_all(fd_, scratch_.data(), scratch_.size())) {
    throw TransportError("connection to " + to_string(endpoint_) +
                         " closed mid-frame");
  }
  wire::decode_payload(scratch_, f);
  ++copies_;
  return f;
}

Tensor RemoteChannel::call(const LayerAddress& layer, Pass pass,
                           const Tensor& input, std::size_t out_width) {
  if (fd_ < 0) throw TransportError("remote channel is not open");
  wire::Frame req;
  req.client_id = client_id_;
  req.request_id = next_request_id();
  req.block = layer.block;
  req.role = static_cast<std::uint8_t>(layer.role);
  req.kind = wire::request_kind(pass);
  req.token_count = static_cast<std::uint32_t>(input.rows());
  req.width = static_cast<std::uint32_t>(input.cols());
  req.payload.assign(input.data().begin(), input.data().end());
  wire::encode_into(req, scratch_);
  copies_ += 2;
  if (!write_all(fd_, scratch_.data(), scratch_.size())) {
    throw TransportError("layer " + to_string(layer) + ": send to " +
                         to_string(endpoint_) + " failed");
  }
  wire::Frame reply;
  try {
    reply = read_frame();
  } catch (const TransportError& e) {
    throw TransportError("layer " + to_string(layer) + ": " + e.what());
  }
  if (reply.client_id != client_id_ || reply.request_id != req.request_id) {
    throw ProtocolError("reply for client " + std::to_string(reply.client_id) +
                        " request " + std::to_string(reply.request_id) +
                        " does not match request " + std::to_string(req.request_id));
  }
  if (reply.kind == wire::Kind::kError) {
    throw ExecutorRejected(static_cast<wire::ErrorCode>(reply.width),
                           "layer " + to_string(layer) + " rejected by executor");
  }
  if (reply.kind != wire::reply_kind(pass) || reply.token_count != req.token_count ||
      reply.width != out_width) {
    throw ProtocolError("layer " + to_string(layer) + ": reply shape [" +
                        std::to_string(reply.token_count) + "," +
                        std::to_string(reply.width) + "] does not match request");
  }
  return Tensor({reply.token_count, reply.width}, std::move(reply.payload));
}

struct RemoteServer::Connection {
  int fd = -1;
  std::mutex write_mu;
  std::atomic<bool> closed{false};
  std::set<std::uint32_t> clients;

  void send(const wire::Frame& f) {
    std::vector<std::uint8_t> bytes = wire::encode(f);
    std::lock_guard lock(write_mu);
    if (closed) return;
    if (!write_all(fd, bytes.data(), bytes.size())) closed = true;
  }
};

RemoteServer::RemoteServer(ExecutorService& executor, Endpoint bind)
    : executor_(executor), bind_(std::move(bind)) {}

RemoteServer::~RemoteServer() { stop(); }

void RemoteServer::start() {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw TransportError("socket() failed");
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(bind_.port);
  if (::inet_pton(AF_INET, bind_.host.c_str(), &addr.sin_addr) != 1) {
    throw TransportError("bad bind address " + bind_.host);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
      ::listen(listen_fd_, 64) != 0) {
    throw TransportError("cannot listen on " + to_string(bind_) + ": " +
                         std::strerror(errno));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  accept_thread_ = std::thread([this] { accept_loop(); });
}

void RemoteServer::stop() {
  if (stopping_.exchange(true)) return;
  if (listen_fd_ >= 0) {
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
  }
  if (accept_thread_.joinable()) accept_thread_.join();
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(mu_);
    for (auto& c : connections_) {
      if (c->fd >= 0) ::shutdown(c->fd, SHUT_RDWR);
    }
    threads.swap(threads_);
  }
  for (auto& t : threads) t.join();
}

void RemoteServer::accept_loop() {
  while (!stopping_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (stopping_) return;
      if (errno == EINTR) continue;
      return;
    }
    set_nodelay(fd);
    auto conn = std::make_shared<Connection>();
    conn->fd = fd;
    ++accepted_;
    std::lock_guard lock(mu_);
    connections_.push_back(conn);
    threads_.emplace_back([this, conn] { serve(conn); });
  }
}

void RemoteServer::serve(std::shared_ptr<Connection> conn) {
  std::uint8_t header[wire::kHeaderSize];
  while (!stopping_ && read_all(conn->fd, header, sizeof(header))) {
    wire::Frame frame;
    try {
      frame = wire::decode_header(header);
    } catch (const wire::WireError&) {
      // Bad magic or version: the stream cannot be trusted past this point.
      ++rejected_;
      break;
    }
    if (frame.kind == wire::Kind::kRegister) {
      conn->clients.insert(frame.client_id);
      executor_.register_client(frame.client_id,
                                static_cast<JobKind>(frame.token_count));
      continue;
    }
    if (frame.kind == wire::Kind::kDeregister) {
      conn->clients.erase(frame.client_id);
      executor_.deregister_client(frame.client_id);
      continue;
    }
    if (!wire::is_request(frame.kind)) {
      ++rejected_;
      break;
    }
    auto inflight = std::make_shared<wire::Frame>(std::move(frame));
    std::vector<std::uint8_t> payload(wire::payload_bytes(*inflight));
    if (!read_all(conn->fd, payload.data(), payload.size())) break;
    wire::decode_payload(payload, *inflight);

    const Pass pass = wire::pass_of(inflight->kind);
    const LayerAddress layer{inflight->block,
                             static_cast<Role>(std::min<std::uint8_t>(inflight->role, 7))};
    std::size_t out_w = 0;
    if (executor_.host().hosts(layer)) {
      out_w = output_width(executor_.host().config(), layer, pass);
    }
    auto output = std::make_shared<std::vector<float>>(
        static_cast<std::size_t>(inflight->token_count) * out_w);

    PendingRequest req;
    req.client_id = inflight->client_id;
    req.request_id = inflight->request_id;
    req.layer = layer;
    req.pass = pass;
    req.token_count = inflight->token_count;
    req.width = inflight->width;
    req.input = inflight->payload;
    req.output = *output;
    req.done = [conn, inflight, output, pass, out_w](const Status& s) {
      wire::Frame reply;
      reply.client_id = inflight->client_id;
      reply.request_id = inflight->request_id;
      reply.block = inflight->block;
      reply.role = inflight->role;
      if (s.ok) {
        reply.kind = wire::reply_kind(pass);
        reply.token_count = inflight->token_count;
        reply.width = static_cast<std::uint32_t>(out_w);
        reply.payload = std::move(*output);
      } else {
        reply.kind = wire::Kind::kError;
        reply.width = static_cast<std::uint32_t>(s.code);
      }
      conn->send(reply);
    };
    executor_.submit(std::move(req));
  }
  {
    std::lock_guard lock(conn->write_mu);
    conn->closed = true;
  }
  for (std::uint32_t id : conn->clients) executor_.deregister_client(id);
  std::lock_guard lock(mu_);
  ::close(conn->fd);
  conn->fd = -1;
}

}  // namespace layerserve
