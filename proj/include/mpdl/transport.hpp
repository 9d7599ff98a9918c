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

// Typed message passing between the three actors (A, B and collaborator C).
//
// Frame layout, shared by every backend:
//   u32 LE length of everything after this field
//   u8  kind
//   u64 LE msg_id, u8 sender, u8 receiver, u8 has_tag, u64 LE batch_tag
//   payload bytes
// Real matrices travel as u32 rows, u32 cols and IEEE-754 doubles (LE);
// big integers as u32 length-prefixed big-endian magnitudes.

#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <gmpxx.h>
#include <nlohmann/json.hpp>

#include "mpdl/tensor.hpp"

namespace mpdl::transport {

enum class ActorId : std::uint8_t { kA = 0, kB = 1, kC = 2 };

enum class MessageKind : std::uint8_t {
  kInferredBatch = 0,
  kGradTerm = 1,
  kCipherBlock = 2,
  kPartialSum = 3,
  kDeltaError = 4,
  kBlindedIds = 5,
  kMatrixBlock = 6,
  kControl = 7,
};

std::string_view to_string(ActorId a);
std::string_view to_string(MessageKind k);
/// True for kinds whose payload is a real matrix.
bool carries_matrix(MessageKind k);

using Bytes = std::vector<std::uint8_t>;

struct ProtocolMessage {
  std::uint64_t msg_id = 0;
  ActorId sender = ActorId::kA;
  ActorId receiver = ActorId::kA;
  MessageKind kind = MessageKind::kControl;
  Bytes payload;
  std::optional<std::uint64_t> batch_tag;

  friend bool operator==(const ProtocolMessage&, const ProtocolMessage&) = default;
};

// ---- payload codecs ----

Bytes encode_matrix(const Tensor2& m);
Tensor2 decode_matrix(std::span<const std::uint8_t> bytes);

struct CipherBlock {
  std::uint64_t key_id = 0;
  std::int32_t scale_bits = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<mpz_class> values;  // rows * cols, row-major
};

Bytes encode_cipher_block(const CipherBlock& block);
CipherBlock decode_cipher_block(std::span<const std::uint8_t> bytes);

Bytes encode_byte_strings(const std::vector<Bytes>& items);
std::vector<Bytes> decode_byte_strings(std::span<const std::uint8_t> bytes);

Bytes encode_control(const nlohmann::json& j);
nlohmann::json decode_control(std::span<const std::uint8_t> bytes);

/// Throws SchemaError if the payload does not decode under kind.
void validate_payload(MessageKind kind, std::span<const std::uint8_t> payload);

Bytes encode_frame(const ProtocolMessage& msg);
/// Decodes one complete frame (including its length prefix).
ProtocolMessage decode_frame(std::span<const std::uint8_t> frame);

// ---- channels ----

class Channel {
 public:
  virtual ~Channel() = default;
  virtual void send(const ProtocolMessage& msg) = 0;
  /// Blocks until a message arrives; TransportError on timeout or close.
  virtual ProtocolMessage recv(std::chrono::milliseconds timeout) = 0;
  virtual void close() = 0;
};

std::unique_ptr<Channel> make_in_process_channel();
/// Loopback TCP connection with a reader thread draining into an inbox.
std::unique_ptr<Channel> make_tcp_channel(std::uint16_t port = 0);

// ---- transcript ----

class Transcript {
 public:
  void append(ProtocolMessage msg);
  const std::vector<ProtocolMessage>& messages() const { return messages_; }
  /// Messages the actor sent or received.
  std::vector<ProtocolMessage> view(ActorId actor) const;
  std::size_t size() const { return messages_.size(); }
  void clear() { messages_.clear(); }

  /// Newline-delimited JSON, one object per message with a SHA-256 of the
  /// payload; payloads themselves only when full_payloads is set.
  void dump_ndjson(std::ostream& out, bool full_payloads = false) const;

 private:
  std::vector<ProtocolMessage> messages_;
};

enum class Backend { kInProcess, kTcp };

/// Directed channels between every ordered pair of actors plus the shared
/// transcript. Messages are appended to the transcript on delivery.
class Transport {
 public:
  explicit Transport(Backend backend = Backend::kInProcess,
                     std::chrono::milliseconds timeout = std::chrono::seconds(30));
  ~Transport();
  Transport(const Transport&) = delete;
  Transport& operator=(const Transport&) = delete;

  std::uint64_t send(ActorId from, ActorId to, MessageKind kind, Bytes payload,
                     std::optional<std::uint64_t> batch_tag = {});
  ProtocolMessage recv(ActorId to, ActorId from);

  const Transcript& transcript() const { return transcript_; }
  Transcript& transcript() { return transcript_; }
  Backend backend() const { return backend_; }

 private:
  Channel& channel(ActorId from, ActorId to);

  Backend backend_;
  std::chrono::milliseconds timeout_;
  std::vector<std::unique_ptr<Channel>> channels_;  // index from*3 + to
  std::mutex mu_;
  std::uint64_t next_id_ = 1;
  Transcript transcript_;
};

/// One actor's handle on the transport; enforces expected sender, kind and
/// batch tag on receipt.
class Endpoint {
 public:
  Endpoint(Transport& t, ActorId self) : t_(&t), self_(self) {}
  ActorId self() const { return self_; }
  std::uint64_t send(ActorId to, MessageKind kind, Bytes payload,
                     std::optional<std::uint64_t> batch_tag = {});
  /// Throws ProtocolError when the next message on the channel from 'from'
  /// has another kind or batch tag.
  ProtocolMessage expect(ActorId from, MessageKind kind,
                         std::optional<std::uint64_t> batch_tag = {});

 private:
  Transport* t_;
  ActorId self_;
};

// ---- transcript assertions ----

struct Predicate {
  std::string name;
  /// Returns a description when the message violates the predicate.
  std::function<std::optional<std::string>(const ProtocolMessage&)> check;
};

struct Violation {
  std::string predicate;
  std::uint64_t msg_id = 0;
  std::string detail;
};

struct AssertReport {
  std::size_t messages_checked = 0;
  std::vector<Violation> violations;
  bool passed() const { return violations.empty(); }
};

/// Throws SchemaError on a malformed transcript (repeated msg_id or payload
/// that does not decode).
AssertReport transcript_assert(const Transcript& transcript,
                               std::span<const Predicate> predicates);

/// No real-matrix payload delivered to receiver contains a row equal to a row
/// of forbidden (compared over equal widths).
Predicate forbid_rows(std::string name, ActorId receiver, const Tensor2& forbidden);
/// No real value delivered to receiver equals any forbidden value.
Predicate forbid_values(std::string name, ActorId receiver, std::vector<double> forbidden);
/// Every CipherBlock delivered to receiver is under key_id.
Predicate cipher_under_key(std::string name, ActorId receiver, std::uint64_t key_id);
/// Only the listed kinds are delivered to receiver.
Predicate allowed_kinds(std::string name, ActorId receiver, std::set<MessageKind> kinds);
/// No byte-string or control payload delivered to receiver contains any of
/// the forbidden byte patterns.
Predicate forbid_bytes(std::string name, ActorId receiver, std::vector<Bytes> patterns);

}  // namespace mpdl::transport
