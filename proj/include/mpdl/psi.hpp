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

#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include <gmpxx.h>

#include "mpdl/data.hpp"
#include "mpdl/rng.hpp"
#include "mpdl/transport.hpp"

namespace mpdl::psi {

// Blinded entity alignment. B holds an RSA key and acts as the signer; A
// blinds its hashed ids, B signs them blind and publishes keyed tokens of its
// own signed ids, A unblinds, intersects and returns the matching tokens.
//
//   B -> A  Control     {n, e, salt}
//   A -> B  BlindedIds  H(a) * r^e mod n
//   B -> A  BlindedIds  signatures of A's values, then B's tokens (shuffled)
//   A -> B  BlindedIds  tokens of the intersection

using transport::Bytes;

struct RsaKey {
  mpz_class n;
  mpz_class e;
  mpz_class d;
  mpz_class p;
  mpz_class q;
  mpz_class dp;
  mpz_class dq;
  mpz_class q_inv_p;
};

RsaKey rsa_keygen(unsigned bits, Rng& rng);
mpz_class rsa_sign(const RsaKey& key, const mpz_class& m);

/// Full-domain hash of an id into Z_n, domain separated by salt.
mpz_class hash_to_group(EntityId id, std::span<const std::uint8_t> salt, const mpz_class& n);

/// HMAC-SHA256(salt, signature bytes).
Bytes token_of(const mpz_class& signature, std::span<const std::uint8_t> salt);

Bytes id_bytes(EntityId id);

struct BytesHash {
  std::size_t operator()(const Bytes& b) const;
};

using TokenIndex = std::unordered_map<Bytes, EntityId, BytesHash>;

struct PsiResult {
  std::vector<EntityId> common_at_a;  // sorted
  std::vector<EntityId> common_at_b;  // sorted
  std::size_t salt_retries = 0;
  // Kept by each side for later routing by token instead of raw id.
  std::unordered_map<EntityId, Bytes> tokens_at_a;  // A's own ids
  TokenIndex ids_by_token_at_b;                     // B's own ids
};

struct PsiOptions {
  unsigned rsa_bits = 1024;
  std::size_t max_salt_retries = 4;
};

PsiResult blinded_intersection(std::span<const EntityId> ids_a, std::span<const EntityId> ids_b,
                               transport::Transport& transport, Rng& rng_a, Rng& rng_b,
                               const PsiOptions& options = {});

}  // namespace mpdl::psi
