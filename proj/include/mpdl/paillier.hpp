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

// Paillier cryptosystem (g = n + 1) over GMP integers, with a two-band signed
// fixed-point encoding of reals. Scales are powers of two tracked as exponents.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <gmpxx.h>

#include "mpdl/rng.hpp"

namespace mpdl::he {

constexpr int kDefaultScaleBits = 40;

struct PublicKey {
  mpz_class n;
  mpz_class n_squared;
  std::uint64_t key_id = 0;  // digest of n

  mpz_class g() const { return n + 1; }
};

struct SecretKey {
  mpz_class lambda;  // lcm(p-1, q-1)
  mpz_class mu;      // lambda^-1 mod n
  mpz_class p;
  mpz_class q;
  // CRT decryption constants
  mpz_class p_squared;
  mpz_class q_squared;
  mpz_class hp;
  mpz_class hq;
  mpz_class q_inv_p;  // q^-1 mod p
};

struct KeyPair {
  PublicKey pub;
  SecretKey sec;
  unsigned bits = 0;
};

struct FixedPoint {
  mpz_class mantissa;  // in [0, n)
  int scale_bits = kDefaultScaleBits;
};

struct Ciphertext {
  mpz_class value;  // in [0, n^2)
};

struct CipherVector {
  std::vector<Ciphertext> items;
  int scale_bits = kDefaultScaleBits;
  std::uint64_t key_id = 0;

  std::size_t size() const { return items.size(); }
};

/// Uniform integer in [0, bound).
mpz_class random_below(const mpz_class& bound, Rng& rng);

/// Miller-Rabin with random bases.
bool is_probable_prime(const mpz_class& n, int rounds, Rng& rng);

/// bits in {512, 1024, 2048}; 512 is meant for tests.
KeyPair keygen(unsigned bits, Rng& rng);

PublicKey make_public_key(const mpz_class& n);

/// mantissa = round(value * 2^scale_bits) mod n. Throws CryptoError when
/// |value| * 2^scale_bits reaches n/3.
FixedPoint encode(double value, int scale_bits, const mpz_class& n);
/// Inverse of encode; mantissas in the middle third are rejected.
double decode(const FixedPoint& fp, const mpz_class& n);
double decode(const mpz_class& mantissa, int scale_bits, const mpz_class& n);

Ciphertext encrypt(const PublicKey& pk, const mpz_class& m, Rng& rng);
Ciphertext encrypt(const PublicKey& pk, const FixedPoint& pt, Rng& rng);
/// CRT decryption.
mpz_class decrypt(const KeyPair& kp, const Ciphertext& ct);
/// Textbook decryption with lambda and mu; slower, used to cross-check CRT.
mpz_class decrypt_textbook(const KeyPair& kp, const Ciphertext& ct);

/// Decrypts to (m1 + m2) mod n.
Ciphertext add_cipher(const PublicKey& pk, const Ciphertext& a, const Ciphertext& b);
/// Decrypts to (m * k) mod n. Negative-band k uses the ciphertext inverse so
/// the exponent stays small.
Ciphertext mul_plain(const PublicKey& pk, const Ciphertext& c, const FixedPoint& k);

CipherVector encrypt_vector(const PublicKey& pk, std::span<const double> values,
                            int scale_bits, Rng& rng);
std::vector<double> decrypt_vector(const KeyPair& kp, const CipherVector& cv);
CipherVector add_cipher(const PublicKey& pk, const CipherVector& a, const CipherVector& b);

/// Big-endian magnitude bytes, no leading zeros (zero encodes as empty).
std::vector<std::uint8_t> to_bytes(const mpz_class& v);
mpz_class from_bytes(std::span<const std::uint8_t> bytes);

}  // namespace mpdl::he
