// Copyright 2026 The MPDL Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mpdl/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>
#include <unordered_set>

#include <openssl/sha.h>

#include "mpdl/errors.hpp"
#include "mpdl/paillier.hpp"

namespace mpdl::transport {

std::string_view to_string(ActorId a) {
  switch (a) {
    case ActorId::kA: return "A";
    case ActorId::kB: return "B";
    case ActorId::kC: return "C";
  }
  return "?";
}

std::string_view to_string(MessageKind k) {
  switch (k) {
    case MessageKind::kInferredBatch: return "InferredBatch";
    case MessageKind::kGradTerm: return "GradTerm";
    case MessageKind::kCipherBlock: return "CipherBlock";
    case MessageKind::kPartialSum: return "PartialSum";
    case MessageKind::kDeltaError: return "DeltaError";
    case MessageKind::kBlindedIds: return "BlindedIds";
    case MessageKind::kMatrixBlock: return "MatrixBlock";
    case MessageKind::kControl: return "Control";
  }
  return "?";
}

bool carries_matrix(MessageKind k) {
  return k == MessageKind::kInferredBatch || k == MessageKind::kGradTerm ||
         k == MessageKind::kPartialSum || k == MessageKind::kDeltaError ||
         k == MessageKind::kMatrixBlock;
}

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::span<const std::uint8_t> b) {
    u32(static_cast<std::uint32_t>(b.size()));
    out_.insert(out_.end(), b.begin(), b.end());
  }
  void raw(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{in_[pos_++]} << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{in_[pos_++]} << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::span<const std::uint8_t> bytes() {
    const std::uint32_t n = u32();
    need(n);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::span<const std::uint8_t> rest() {
    auto s = in_.subspan(pos_);
    pos_ = in_.size();
    return s;
  }
  void finish() const {
    if (pos_ != in_.size()) throw SchemaError("payload has trailing bytes");
  }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw SchemaError("payload truncated");
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

Bytes encode_matrix(const Tensor2& m) {
  Writer w;
  w.u32(static_cast<std::uint32_t>(m.rows));
  w.u32(static_cast<std::uint32_t>(m.cols));
  for (double v : m.data) w.f64(v);
  return w.take();
}

Tensor2 decode_matrix(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const std::size_t rows = r.u32();
  const std::size_t cols = r.u32();
  if (bytes.size() != 8 + rows * cols * 8) throw SchemaError("matrix payload size mismatch");
  Tensor2 m(rows, cols);
  for (double& v : m.data) v = r.f64();
  r.finish();
  return m;
}

Bytes encode_cipher_block(const CipherBlock& block) {
  if (block.values.size() != std::size_t{block.rows} * block.cols) {
    throw SchemaError("cipher block value count differs from rows*cols");
  }
  Writer w;
  w.u64(block.key_id);
  w.u32(static_cast<std::uint32_t>(block.scale_bits));
  w.u32(block.rows);
  w.u32(block.cols);
  for (const auto& v : block.values) w.bytes(he::to_bytes(v));
  return w.take();
}

CipherBlock decode_cipher_block(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  CipherBlock block;
  block.key_id = r.u64();
  block.scale_bits = static_cast<std::int32_t>(r.u32());
  block.rows = r.u32();
  block.cols = r.u32();
  const std::size_t count = std::size_t{block.rows} * block.cols;
  if (count > bytes.size()) throw SchemaError("cipher block count exceeds payload");
  block.values.reserve(count);
  for (std::size_t i = 0; i < count; ++i) block.values.push_back(he::from_bytes(r.bytes()));
  r.finish();
  return block;
}

Bytes encode_byte_strings(const std::vector<Bytes>& items) {
  Writer w;
  w.u32(static_cast<std::uint32_t>(items.size()));
  for (const auto& b : items) w.bytes(b);
  return w.take();
}

std::vector<Bytes> decode_byte_strings(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const std::uint32_t n = r.u32();
  if (n > bytes.size()) throw SchemaError("byte-string count exceeds payload");
  std::vector<Bytes> out;
  out.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    auto s = r.bytes();
    out.emplace_back(s.begin(), s.end());
  }
  r.finish();
  return out;
}

Bytes encode_control(const nlohmann::json& j) {
  const std::string s = j.dump();
  return Bytes(s.begin(), s.end());
}

nlohmann::json decode_control(std::span<const std::uint8_t> bytes) {
  try {
    return nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("control payload is not JSON: ") + e.what());
  }
}

void validate_payload(MessageKind kind, std::span<const std::uint8_t> payload) {
  if (carries_matrix(kind)) {
    (void)decode_matrix(payload);
  } else if (kind == MessageKind::kCipherBlock) {
    (void)decode_cipher_block(payload);
  } else if (kind == MessageKind::kBlindedIds) {
    (void)decode_byte_strings(payload);
  } else if (kind == MessageKind::kControl) {
    (void)decode_control(payload);
  } else {
    throw SchemaError("unknown message kind");
  }
}

Bytes encode_frame(const ProtocolMessage& msg) {
  Writer body;
  body.u8(static_cast<std::uint8_t>(msg.kind));
  body.u64(msg.msg_id);
  body.u8(static_cast<std::uint8_t>(msg.sender));
  body.u8(static_cast<std::uint8_t>(msg.receiver));
  body.u8(msg.batch_tag ? 1 : 0);
  body.u64(msg.batch_tag.value_or(0));
  body.raw(msg.payload);
  Bytes b = body.take();
  Writer w;
  w.u32(static_cast<std::uint32_t>(b.size()));
  w.raw(b);
  return w.take();
}

ProtocolMessage decode_frame(std::span<const std::uint8_t> frame) {
  Reader r(frame);
  const std::uint32_t len = r.u32();
  if (frame.size() != std::size_t{len} + 4) throw SchemaError("frame length mismatch");
  ProtocolMessage msg;
  const std::uint8_t kind = r.u8();
  if (kind > static_cast<std::uint8_t>(MessageKind::kControl)) {
    throw SchemaError("frame has unknown message kind");
  }
  msg.kind = static_cast<MessageKind>(kind);
  msg.msg_id = r.u64();
  const std::uint8_t s = r.u8(), d = r.u8();
  if (s > 2 || d > 2) throw SchemaError("frame has unknown actor id");
  msg.sender = static_cast<ActorId>(s);
  msg.receiver = static_cast<ActorId>(d);
  const std::uint8_t has_tag = r.u8();
  const std::uint64_t tag = r.u64();
  if (has_tag > 1) throw SchemaError("frame has invalid tag flag");
  if (has_tag) msg.batch_tag = tag;
  auto rest = r.rest();
  msg.payload.assign(rest.begin(), rest.end());
  return msg;
}

namespace {

class FrameQueue {
 public:
  void push(Bytes frame) {
    {
      std::lock_guard lock(mu_);
      frames_.push_back(std::move(frame));
    }
    cv_.notify_one();
  }
  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }
  Bytes pop(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    if (!cv_.wait_for(lock, timeout, [&] { return !frames_.empty() || closed_; })) {
      throw TransportError("recv timed out");
    }
    if (frames_.empty()) throw TransportError("channel closed");
    Bytes f = std::move(frames_.front());
    frames_.pop_front();
    return f;
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Bytes> frames_;
  bool closed_ = false;
};

class InProcessChannel final : public Channel {
 public:
  void send(const ProtocolMessage& msg) override {
    if (closed_) throw TransportError("send on closed channel");
    queue_.push(encode_frame(msg));
  }
  ProtocolMessage recv(std::chrono::milliseconds timeout) override {
    return decode_frame(queue_.pop(timeout));
  }
  void close() override {
    closed_ = true;
    queue_.close();
  }

 private:
  FrameQueue queue_;
  std::atomic<bool> closed_{false};
};

void write_all(int fd, const std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::send(fd, data, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("socket write failed: ") + std::strerror(errno));
    }
    data += w;
    n -= static_cast<std::size_t>(w);
  }
}

bool read_all(int fd, std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    const ssize_t r = ::recv(fd, data, n, 0);
    if (r == 0) return false;
    if (r < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data += r;
    n -= static_cast<std::size_t>(r);
  }
  return true;
}

class TcpChannel final : public Channel {
 public:
  explicit TcpChannel(std::uint16_t port) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw TransportError("socket() failed");
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(port);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0 ||
        ::listen(listen_fd_, 1) < 0) {
      cleanup();
      throw TransportError(std::string("bind/listen failed: ") + std::strerror(errno));
    }
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);

    send_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (send_fd_ < 0 ||
        ::connect(send_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
      cleanup();
      throw TransportError(std::string("connect failed: ") + std::strerror(errno));
    }
    ::setsockopt(send_fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    recv_fd_ = ::accept(listen_fd_, nullptr, nullptr);
    if (recv_fd_ < 0) {
      cleanup();
      throw TransportError("accept failed");
    }
    reader_ = std::thread([this] { read_loop(); });
  }

  ~TcpChannel() override {
    close();
    if (reader_.joinable()) reader_.join();
    cleanup();
  }

  void send(const ProtocolMessage& msg) override {
    const Bytes frame = encode_frame(msg);
    std::lock_guard lock(send_mu_);
    if (closed_) throw TransportError("send on closed channel");
    write_all(send_fd_, frame.data(), frame.size());
  }

  ProtocolMessage recv(std::chrono::milliseconds timeout) override {
    return decode_frame(inbox_.pop(timeout));
  }

  void close() override {
    std::lock_guard lock(send_mu_);
    if (closed_) return;
    closed_ = true;
    if (send_fd_ >= 0) ::shutdown(send_fd_, SHUT_WR);
  }

 private:
  void read_loop() {
    for (;;) {
      std::uint8_t head[4];
      if (!read_all(recv_fd_, head, 4)) break;
      const std::uint32_t len = std::uint32_t{head[0]} | (std::uint32_t{head[1]} << 8) |
                                (std::uint32_t{head[2]} << 16) |
                                (std::uint32_t{head[3]} << 24);
      Bytes frame(4 + std::size_t{len});
      std::copy(head, head + 4, frame.begin());
      if (!read_all(recv_fd_, frame.data() + 4, len)) break;
      inbox_.push(std::move(frame));
    }
    inbox_.close();
  }

  void cleanup() {
    for (int* fd : {&send_fd_, &recv_fd_, &listen_fd_}) {
      if (*fd >= 0) ::close(*fd);
      *fd = -1;
    }
  }

  int listen_fd_ = -1;
  int send_fd_ = -1;
  int recv_fd_ = -1;
  std::mutex send_mu_;
  bool closed_ = false;
  FrameQueue inbox_;
  std::thread reader_;
};

std::string hex(std::span<const std::uint8_t> b) {
  std::ostringstream os;
  os << std::hex << std::setfill('0');
  for (auto c : b) os << std::setw(2) << static_cast<int>(c);
  return os.str();
}

}  // namespace

std::unique_ptr<Channel> make_in_process_channel() {
  return std::make_unique<InProcessChannel>();
}

std::unique_ptr<Channel> make_tcp_channel(std::uint16_t port) {
  return std::make_unique<TcpChannel>(port);
}

void Transcript::append(ProtocolMessage msg) { messages_.push_back(std::move(msg)); }

std::vector<ProtocolMessage> Transcript::view(ActorId actor) const {
  std::vector<ProtocolMessage> out;
  for (const auto& m : messages_) {
    if (m.sender == actor || m.receiver == actor) out.push_back(m);
  }
  return out;
}

void Transcript::dump_ndjson(std::ostream& out, bool full_payloads) const {
  for (const auto& m : messages_) {
    unsigned char digest[SHA256_DIGEST_LENGTH];
    SHA256(m.payload.data(), m.payload.size(), digest);
    nlohmann::json j{{"msg_id", m.msg_id},
                     {"sender", to_string(m.sender)},
                     {"receiver", to_string(m.receiver)},
                     {"kind", to_string(m.kind)},
                     {"bytes", m.payload.size()},
                     {"sha256", hex({digest, SHA256_DIGEST_LENGTH})}};
    j["batch_tag"] = m.batch_tag ? nlohmann::json(*m.batch_tag) : nlohmann::json(nullptr);
    if (full_payloads) j["payload"] = hex(m.payload);
    out << j.dump() << '\n';
  }
}

Transport::Transport(Backend backend, std::chrono::milliseconds timeout)
    : backend_(backend), timeout_(timeout) {
  for (int i = 0; i < 9; ++i) {
    channels_.push_back(backend == Backend::kTcp ? make_tcp_channel()
                                                 : make_in_process_channel());
  }
}

Transport::~Transport() {
  for (auto& c : channels_) c->close();
}

Channel& Transport::channel(ActorId from, ActorId to) {
  if (from == to) throw ProtocolError("an actor cannot message itself");
  return *channels_[static_cast<std::size_t>(from) * 3 + static_cast<std::size_t>(to)];
}

std::uint64_t Transport::send(ActorId from, ActorId to, MessageKind kind, Bytes payload,
                              std::optional<std::uint64_t> batch_tag) {
  validate_payload(kind, payload);
  ProtocolMessage msg;
  {
    std::lock_guard lock(mu_);
    msg.msg_id = next_id_++;
  }
  msg.sender = from;
  msg.receiver = to;
  msg.kind = kind;
  msg.payload = std::move(payload);
  msg.batch_tag = batch_tag;
  channel(from, to).send(msg);
  return msg.msg_id;
}

ProtocolMessage Transport::recv(ActorId to, ActorId from) {
  ProtocolMessage msg = channel(from, to).recv(timeout_);
  validate_payload(msg.kind, msg.payload);
  std::lock_guard lock(mu_);
  transcript_.append(msg);
  return msg;
}

std::uint64_t Endpoint::send(ActorId to, MessageKind kind, Bytes payload,
                             std::optional<std::uint64_t> batch_tag) {
  return t_->send(self_, to, kind, std::move(payload), batch_tag);
}

ProtocolMessage Endpoint::expect(ActorId from, MessageKind kind,
                                 std::optional<std::uint64_t> batch_tag) {
  ProtocolMessage msg = t_->recv(self_, from);
  if (msg.kind != kind) {
    throw ProtocolError(std::string("actor ") + std::string(to_string(self_)) + " expected " +
                        std::string(to_string(kind)) + " from " +
                        std::string(to_string(from)) + ", got " +
                        std::string(to_string(msg.kind)) + " (msg " +
                        std::to_string(msg.msg_id) + ")");
  }
  if (batch_tag && msg.batch_tag != batch_tag) {
    throw ProtocolError("stale or mismatched batch tag on msg " + std::to_string(msg.msg_id));
  }
  return msg;
}

AssertReport transcript_assert(const Transcript& transcript,
                               std::span<const Predicate> predicates) {
  AssertReport report;
  std::unordered_set<std::uint64_t> seen;
  for (const auto& m : transcript.messages()) {
    if (!seen.insert(m.msg_id).second) {
      throw SchemaError("malformed transcript: repeated msg_id " + std::to_string(m.msg_id));
    }
    validate_payload(m.kind, m.payload);
    ++report.messages_checked;
    for (const auto& p : predicates) {
      if (auto why = p.check(m)) report.violations.push_back({p.name, m.msg_id, *why});
    }
  }
  return report;
}

namespace {

std::string row_key(std::span<const double> row) {
  return std::string(reinterpret_cast<const char*>(row.data()), row.size() * sizeof(double));
}

}  // namespace

Predicate forbid_rows(std::string name, ActorId receiver, const Tensor2& forbidden) {
  auto keys = std::make_shared<std::unordered_set<std::string>>();
  for (std::size_t r = 0; r < forbidden.rows; ++r) keys->insert(row_key(forbidden.row(r)));
  const std::size_t width = forbidden.cols;
  return {std::move(name), [=](const ProtocolMessage& m) -> std::optional<std::string> {
            if (m.receiver != receiver || !carries_matrix(m.kind)) return std::nullopt;
            const Tensor2 t = decode_matrix(m.payload);
            if (t.cols != width) return std::nullopt;
            for (std::size_t r = 0; r < t.rows; ++r) {
              if (keys->contains(row_key(t.row(r)))) {
                return "row " + std::to_string(r) + " of " + std::string(to_string(m.kind)) +
                       " equals a forbidden row";
              }
            }
            return std::nullopt;
          }};
}

Predicate forbid_values(std::string name, ActorId receiver, std::vector<double> forbidden) {
  auto values = std::make_shared<std::unordered_set<double>>(forbidden.begin(), forbidden.end());
  return {std::move(name), [=](const ProtocolMessage& m) -> std::optional<std::string> {
            if (m.receiver != receiver || !carries_matrix(m.kind)) return std::nullopt;
            const Tensor2 t = decode_matrix(m.payload);
            for (double v : t.data) {
              if (v != 0.0 && values->contains(v)) {
                return "payload carries a forbidden value";
              }
            }
            return std::nullopt;
          }};
}

Predicate cipher_under_key(std::string name, ActorId receiver, std::uint64_t key_id) {
  return {std::move(name), [=](const ProtocolMessage& m) -> std::optional<std::string> {
            if (m.receiver != receiver || m.kind != MessageKind::kCipherBlock) return std::nullopt;
            const auto block = decode_cipher_block(m.payload);
            if (block.key_id != key_id) return "ciphertext under an unexpected key";
            return std::nullopt;
          }};
}

Predicate allowed_kinds(std::string name, ActorId receiver, std::set<MessageKind> kinds) {
  return {std::move(name), [=](const ProtocolMessage& m) -> std::optional<std::string> {
            if (m.receiver != receiver || kinds.contains(m.kind)) return std::nullopt;
            return std::string(to_string(m.kind)) + " delivered to " +
                   std::string(to_string(receiver));
          }};
}

Predicate forbid_bytes(std::string name, ActorId receiver, std::vector<Bytes> patterns) {
  auto pats = std::make_shared<std::vector<Bytes>>(std::move(patterns));
  return {std::move(name), [=](const ProtocolMessage& m) -> std::optional<std::string> {
            if (m.receiver != receiver) return std::nullopt;
            if (m.kind != MessageKind::kBlindedIds && m.kind != MessageKind::kControl) {
              return std::nullopt;
            }
            for (const auto& p : *pats) {
              if (p.empty()) continue;
              if (std::search(m.payload.begin(), m.payload.end(), p.begin(), p.end()) !=
                  m.payload.end()) {
                return "payload contains a forbidden byte pattern";
              }
            }
            return std::nullopt;
          }};
}

}  // namespace mpdl::transport
