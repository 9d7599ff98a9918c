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

#include "mpdl/psi.hpp"

#include <algorithm>
#include <string>
#include <unordered_set>

#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/sha.h>

#include "mpdl/errors.hpp"
#include "mpdl/paillier.hpp"

namespace mpdl::psi {

using transport::ActorId;
using transport::MessageKind;

namespace {

std::string to_hex(const mpz_class& v) { return v.get_str(16); }

mpz_class from_hex(const std::string& s) {
  mpz_class v;
  if (s.empty() || v.set_str(s, 16) != 0) throw SchemaError("bad hex integer in control payload");
  return v;
}

std::string bytes_hex(std::span<const std::uint8_t> b) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (auto c : b) {
    s.push_back(digits[c >> 4]);
    s.push_back(digits[c & 15]);
  }
  return s;
}

Bytes hex_bytes(const std::string& s) {
  if (s.size() % 2) throw SchemaError("odd-length hex string");
  Bytes out;
  for (std::size_t i = 0; i < s.size(); i += 2) {
    out.push_back(static_cast<std::uint8_t>(std::stoi(s.substr(i, 2), nullptr, 16)));
  }
  return out;
}

mpz_class random_prime(unsigned bits, Rng& rng) {
  for (;;) {
    mpz_class c = he::random_below(mpz_class(1) << bits, rng);
    mpz_setbit(c.get_mpz_t(), bits - 1);
    mpz_setbit(c.get_mpz_t(), bits - 2);
    mpz_setbit(c.get_mpz_t(), 0);
    if (he::is_probable_prime(c, 64, rng)) return c;
  }
}

// B's side of the exchange.
class Signer {
 public:
  Signer(std::span<const EntityId> ids, unsigned bits, Rng& rng)
      : ids_(ids.begin(), ids.end()), rng_(rng), key_(rsa_keygen(bits, rng)) {}

  nlohmann::json hello() {
    salt_.resize(32);
    for (auto& b : salt_) b = static_cast<std::uint8_t>(rng_());
    return {{"n", to_hex(key_.n)}, {"e", to_hex(key_.e)}, {"salt", bytes_hex(salt_)}};
  }

  // Returns false on a token collision among B's ids.
  bool respond(const std::vector<Bytes>& blinded, std::vector<Bytes>& reply) {
    reply.clear();
    for (const auto& y : blinded) {
      const mpz_class v = he::from_bytes(y);
      if (v <= 0 || v >= key_.n) throw ProtocolError("blinded value outside Z_n");
      reply.push_back(he::to_bytes(rsa_sign(key_, v)));
    }
    token_to_id_.clear();
    std::vector<Bytes> tokens;
    for (EntityId id : ids_) {
      Bytes t = token_of(rsa_sign(key_, hash_to_group(id, salt_, key_.n)), salt_);
      if (!token_to_id_.emplace(t, id).second) return false;
      tokens.push_back(std::move(t));
    }
    shuffle(tokens, rng_);
    for (auto& t : tokens) reply.push_back(std::move(t));
    return true;
  }

  const TokenIndex& index() const { return token_to_id_; }

  std::vector<EntityId> resolve(const std::vector<Bytes>& matched) const {
    std::vector<EntityId> out;
    for (const auto& t : matched) {
      auto it = token_to_id_.find(t);
      if (it == token_to_id_.end()) throw ProtocolError("intersection token unknown to signer");
      out.push_back(it->second);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  std::vector<EntityId> ids_;
  Rng& rng_;
  RsaKey key_;
  Bytes salt_;
  std::unordered_map<Bytes, EntityId, BytesHash> token_to_id_;
};

// A's side.
class Requester {
 public:
  Requester(std::span<const EntityId> ids, Rng& rng) : ids_(ids.begin(), ids.end()), rng_(rng) {}

  std::vector<Bytes> blind(const nlohmann::json& hello) {
    n_ = from_hex(hello.at("n").get<std::string>());
    e_ = from_hex(hello.at("e").get<std::string>());
    salt_ = hex_bytes(hello.at("salt").get<std::string>());
    if (salt_.size() < 16) throw ProtocolError("salt too short");
    r_inv_.clear();
    std::vector<Bytes> out;
    for (EntityId id : ids_) {
      mpz_class r, r_inv;
      do {
        r = he::random_below(n_, rng_);
      } while (r < 2 || mpz_invert(r_inv.get_mpz_t(), r.get_mpz_t(), n_.get_mpz_t()) == 0);
      mpz_class re;
      mpz_powm(re.get_mpz_t(), r.get_mpz_t(), e_.get_mpz_t(), n_.get_mpz_t());
      const mpz_class y = (hash_to_group(id, salt_, n_) * re) % n_;
      r_inv_.push_back(r_inv);
      out.push_back(he::to_bytes(y));
    }
    return out;
  }

  // Returns false on a token collision among A's ids.
  bool intersect(const std::vector<Bytes>& reply, std::vector<Bytes>& matched,
                 std::vector<EntityId>& common) {
    if (reply.size() < ids_.size()) throw ProtocolError("signature reply too short");
    std::unordered_map<Bytes, EntityId, BytesHash> mine;
    tokens_.clear();
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      const mpz_class s = (he::from_bytes(reply[i]) * r_inv_[i]) % n_;
      mpz_class check;
      mpz_powm(check.get_mpz_t(), s.get_mpz_t(), e_.get_mpz_t(), n_.get_mpz_t());
      if (check != hash_to_group(ids_[i], salt_, n_)) {
        throw ProtocolError("signer returned an invalid signature");
      }
      Bytes t = token_of(s, salt_);
      tokens_[ids_[i]] = t;
      if (!mine.emplace(std::move(t), ids_[i]).second) return false;
    }
    matched.clear();
    common.clear();
    for (std::size_t i = ids_.size(); i < reply.size(); ++i) {
      auto it = mine.find(reply[i]);
      if (it != mine.end()) {
        matched.push_back(reply[i]);
        common.push_back(it->second);
      }
    }
    std::sort(matched.begin(), matched.end());
    std::sort(common.begin(), common.end());
    return true;
  }

 private:
  std::vector<EntityId> ids_;
  Rng& rng_;
  mpz_class n_, e_;
  Bytes salt_;
  std::vector<mpz_class> r_inv_;
  std::unordered_map<EntityId, Bytes> tokens_;

 public:
  const std::unordered_map<EntityId, Bytes>& tokens() const { return tokens_; }
};

}  // namespace

std::size_t BytesHash::operator()(const Bytes& b) const {
  // tokens are uniformly random, so a prefix is a fine hash
  std::size_t h = 0;
  for (std::size_t i = 0; i < std::min<std::size_t>(b.size(), 8); ++i) h = (h << 8) | b[i];
  return h;
}

RsaKey rsa_keygen(unsigned bits, Rng& rng) {
  if (bits < 256 || bits % 2) throw DomainError("rsa modulus bits must be even and >= 256");
  RsaKey k;
  k.e = 65537;
  for (;;) {
    k.p = random_prime(bits / 2, rng);
    k.q = random_prime(bits / 2, rng);
    if (k.p == k.q) continue;
    const mpz_class phi = (k.p - 1) * (k.q - 1);
    if (mpz_invert(k.d.get_mpz_t(), k.e.get_mpz_t(), phi.get_mpz_t()) == 0) continue;
    break;
  }
  k.n = k.p * k.q;
  k.dp = k.d % (k.p - 1);
  k.dq = k.d % (k.q - 1);
  mpz_invert(k.q_inv_p.get_mpz_t(), k.q.get_mpz_t(), k.p.get_mpz_t());
  return k;
}

mpz_class rsa_sign(const RsaKey& key, const mpz_class& m) {
  mpz_class mp, mq;
  const mpz_class a = m % key.p, b = m % key.q;
  mpz_powm(mp.get_mpz_t(), a.get_mpz_t(), key.dp.get_mpz_t(), key.p.get_mpz_t());
  mpz_powm(mq.get_mpz_t(), b.get_mpz_t(), key.dq.get_mpz_t(), key.q.get_mpz_t());
  mpz_class h = ((mp - mq) * key.q_inv_p) % key.p;
  if (h < 0) h += key.p;
  return mq + h * key.q;
}

Bytes id_bytes(EntityId id) {
  Bytes b(8);
  for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(id >> (8 * i));
  return b;
}

mpz_class hash_to_group(EntityId id, std::span<const std::uint8_t> salt, const mpz_class& n) {
  // counter-mode SHA-256 expanded to 128 bits past |n|, then reduced
  const std::size_t want = (mpz_sizeinbase(n.get_mpz_t(), 2) + 128 + 7) / 8;
  const Bytes idb = id_bytes(id);
  Bytes out;
  for (std::uint32_t ctr = 0; out.size() < want; ++ctr) {
    Bytes in(salt.begin(), salt.end());
    in.insert(in.end(), idb.begin(), idb.end());
    for (int i = 0; i < 4; ++i) in.push_back(static_cast<std::uint8_t>(ctr >> (8 * i)));
    unsigned char d[SHA256_DIGEST_LENGTH];
    SHA256(in.data(), in.size(), d);
    out.insert(out.end(), d, d + SHA256_DIGEST_LENGTH);
  }
  out.resize(want);
  mpz_class v = he::from_bytes(out) % n;
  if (v == 0) v = 1;
  return v;
}

Bytes token_of(const mpz_class& signature, std::span<const std::uint8_t> salt) {
  const Bytes sb = he::to_bytes(signature);
  Bytes out(EVP_MAX_MD_SIZE);
  unsigned len = 0;
  HMAC(EVP_sha256(), salt.data(), static_cast<int>(salt.size()), sb.data(), sb.size(),
       out.data(), &len);
  out.resize(len);
  return out;
}

PsiResult blinded_intersection(std::span<const EntityId> ids_a, std::span<const EntityId> ids_b,
                               transport::Transport& transport, Rng& rng_a, Rng& rng_b,
                               const PsiOptions& options) {
  for (auto ids : {ids_a, ids_b}) {
    std::unordered_set<EntityId> seen;
    for (EntityId id : ids) {
      if (!seen.insert(id).second) throw DomainError("duplicate id in alignment input");
    }
  }
  transport::Endpoint a(transport, ActorId::kA), b(transport, ActorId::kB);
  Signer signer(ids_b, options.rsa_bits, rng_b);
  Requester requester(ids_a, rng_a);
  PsiResult result;

  for (;; ++result.salt_retries) {
    if (result.salt_retries > options.max_salt_retries) {
      throw CryptoError("token collisions persisted across salt retries");
    }
    b.send(ActorId::kA, MessageKind::kControl, transport::encode_control(signer.hello()));
    const auto hello = transport::decode_control(a.expect(ActorId::kB, MessageKind::kControl).payload);

    a.send(ActorId::kB, MessageKind::kBlindedIds,
           transport::encode_byte_strings(requester.blind(hello)));
    const auto blinded =
        transport::decode_byte_strings(b.expect(ActorId::kA, MessageKind::kBlindedIds).payload);

    std::vector<Bytes> reply;
    const bool b_ok = signer.respond(blinded, reply);
    // a collision is announced by an empty reply so both sides restart
    b.send(ActorId::kA, MessageKind::kBlindedIds,
           transport::encode_byte_strings(b_ok ? reply : std::vector<Bytes>{}));
    const auto signed_reply =
        transport::decode_byte_strings(a.expect(ActorId::kB, MessageKind::kBlindedIds).payload);
    if (!b_ok) continue;

    std::vector<Bytes> matched;
    const bool a_ok = requester.intersect(signed_reply, matched, result.common_at_a);
    // leading status byte: 0 = tokens follow, 1 = collision, restart with a new salt
    std::vector<Bytes> final_msg{Bytes{static_cast<std::uint8_t>(a_ok ? 0 : 1)}};
    if (a_ok) final_msg.insert(final_msg.end(), matched.begin(), matched.end());
    a.send(ActorId::kB, MessageKind::kBlindedIds, transport::encode_byte_strings(final_msg));
    auto tokens =
        transport::decode_byte_strings(b.expect(ActorId::kA, MessageKind::kBlindedIds).payload);
    if (tokens.empty() || tokens.front().size() != 1) throw ProtocolError("bad intersection message");
    if (tokens.front()[0] != 0) continue;
    tokens.erase(tokens.begin());
    result.common_at_b = signer.resolve(tokens);
    result.tokens_at_a = requester.tokens();
    result.ids_by_token_at_b = signer.index();
    break;
  }
  if (result.common_at_a != result.common_at_b) {
    throw ProtocolError("parties disagree on the intersection");
  }
  return result;
}

}  // namespace mpdl::psi
