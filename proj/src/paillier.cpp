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

#include "mpdl/paillier.hpp"

#include <cmath>
#include <string>

#include <openssl/sha.h>

#include "mpdl/errors.hpp"

namespace mpdl::he {

mpz_class random_below(const mpz_class& bound, Rng& rng) {
  if (bound <= 0) throw DomainError("random_below: bound must be positive");
  const std::size_t bits = mpz_sizeinbase(bound.get_mpz_t(), 2);
  const std::size_t words = (bits + 63) / 64;
  std::vector<std::uint64_t> buf(words);
  mpz_class v;
  do {
    for (auto& w : buf) w = rng();
    mpz_import(v.get_mpz_t(), words, -1, sizeof(std::uint64_t), 0, 0, buf.data());
    mpz_fdiv_r_2exp(v.get_mpz_t(), v.get_mpz_t(), bits);
  } while (v >= bound);
  return v;
}

bool is_probable_prime(const mpz_class& n, int rounds, Rng& rng) {
  if (n < 2) return false;
  for (unsigned small : {2u, 3u, 5u, 7u, 11u, 13u, 17u, 19u, 23u, 29u, 31u, 37u}) {
    if (n == small) return true;
    if (mpz_divisible_ui_p(n.get_mpz_t(), small)) return false;
  }
  const mpz_class n1 = n - 1;
  mpz_class d = n1;
  unsigned s = 0;
  while (mpz_even_p(d.get_mpz_t())) {
    d >>= 1;
    ++s;
  }
  mpz_class x;
  for (int i = 0; i < rounds; ++i) {
    const mpz_class a = random_below(n - 3, rng) + 2;  // [2, n-2]
    mpz_powm(x.get_mpz_t(), a.get_mpz_t(), d.get_mpz_t(), n.get_mpz_t());
    if (x == 1 || x == n1) continue;
    bool composite = true;
    for (unsigned r = 1; r < s; ++r) {
      x = (x * x) % n;
      if (x == n1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

namespace {

constexpr int kMillerRabinRounds = 64;

mpz_class random_prime(unsigned bits, Rng& rng) {
  for (;;) {
    mpz_class c = random_below(mpz_class(1) << bits, rng);
    // top two bits set so p*q has exactly 2*bits bits; odd
    mpz_setbit(c.get_mpz_t(), bits - 1);
    mpz_setbit(c.get_mpz_t(), bits - 2);
    mpz_setbit(c.get_mpz_t(), 0);
    if (is_probable_prime(c, kMillerRabinRounds, rng)) return c;
  }
}

mpz_class gcd(const mpz_class& a, const mpz_class& b) {
  mpz_class g;
  mpz_gcd(g.get_mpz_t(), a.get_mpz_t(), b.get_mpz_t());
  return g;
}

mpz_class invert(const mpz_class& a, const mpz_class& m) {
  mpz_class r;
  if (mpz_invert(r.get_mpz_t(), a.get_mpz_t(), m.get_mpz_t()) == 0) {
    throw CryptoError("modular inverse does not exist");
  }
  return r;
}

mpz_class powm(const mpz_class& b, const mpz_class& e, const mpz_class& m) {
  mpz_class r;
  mpz_powm(r.get_mpz_t(), b.get_mpz_t(), e.get_mpz_t(), m.get_mpz_t());
  return r;
}

// L(x) = (x - 1) / d
mpz_class ell(const mpz_class& x, const mpz_class& d) {
  mpz_class r = x - 1;
  mpz_divexact(r.get_mpz_t(), r.get_mpz_t(), d.get_mpz_t());
  return r;
}

}  // namespace

PublicKey make_public_key(const mpz_class& n) {
  PublicKey pk;
  pk.n = n;
  pk.n_squared = n * n;
  const auto bytes = to_bytes(n);
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(bytes.data(), bytes.size(), digest);
  for (int i = 0; i < 8; ++i) pk.key_id = (pk.key_id << 8) | digest[i];
  return pk;
}

KeyPair keygen(unsigned bits, Rng& rng) {
  if (bits != 512 && bits != 1024 && bits != 2048) {
    throw DomainError("keygen: bits must be 512, 1024 or 2048");
  }
  const unsigned half = bits / 2;
  for (;;) {
    const mpz_class p = random_prime(half, rng);
    const mpz_class q = random_prime(half, rng);
    if (p == q) continue;
    if (gcd(p - 1, q) != 1 || gcd(q - 1, p) != 1) continue;

    KeyPair kp;
    kp.bits = bits;
    kp.pub = make_public_key(p * q);
    const mpz_class& n = kp.pub.n;
    auto& sk = kp.sec;
    sk.p = p;
    sk.q = q;
    mpz_lcm(sk.lambda.get_mpz_t(), mpz_class(p - 1).get_mpz_t(), mpz_class(q - 1).get_mpz_t());
    sk.mu = invert(sk.lambda, n);  // g = n + 1 gives L(g^lambda) = lambda mod n
    sk.p_squared = p * p;
    sk.q_squared = q * q;
    const mpz_class g = n + 1;
    sk.hp = invert(ell(powm(g, p - 1, sk.p_squared), p), p);
    sk.hq = invert(ell(powm(g, q - 1, sk.q_squared), q), q);
    sk.q_inv_p = invert(q, p);
    return kp;
  }
}

FixedPoint encode(double value, int scale_bits, const mpz_class& n) {
  if (!std::isfinite(value)) throw CryptoError("encode: non-finite value");
  const double scaled = std::nearbyint(std::ldexp(value, scale_bits));
  mpz_class m(scaled);  // exact: scaled is an integer-valued double
  mpz_class third = n / 3;
  if (abs(m) >= third) throw CryptoError("encode: magnitude exceeds the representable band");
  if (m < 0) m += n;
  return {m, scale_bits};
}

double decode(const mpz_class& mantissa, int scale_bits, const mpz_class& n) {
  if (mantissa < 0 || mantissa >= n) throw CryptoError("decode: mantissa outside [0, n)");
  const mpz_class third = n / 3;
  if (mantissa < third) return std::ldexp(mantissa.get_d(), -scale_bits);
  if (mantissa > n - third) {
    const mpz_class neg = n - mantissa;
    return -std::ldexp(neg.get_d(), -scale_bits);
  }
  throw CryptoError("decode: mantissa in the overflow band");
}

double decode(const FixedPoint& fp, const mpz_class& n) {
  return decode(fp.mantissa, fp.scale_bits, n);
}

Ciphertext encrypt(const PublicKey& pk, const mpz_class& m, Rng& rng) {
  if (m < 0 || m >= pk.n) throw CryptoError("encrypt: plaintext outside [0, n)");
  mpz_class r;
  do {
    r = random_below(pk.n, rng);
  } while (r == 0 || gcd(r, pk.n) != 1);
  // (1 + m n) r^n mod n^2
  mpz_class c = powm(r, pk.n, pk.n_squared);
  c = (c * (1 + m * pk.n)) % pk.n_squared;
  return {c};
}

Ciphertext encrypt(const PublicKey& pk, const FixedPoint& pt, Rng& rng) {
  return encrypt(pk, pt.mantissa, rng);
}

mpz_class decrypt(const KeyPair& kp, const Ciphertext& ct) {
  const auto& sk = kp.sec;
  if (ct.value < 0 || ct.value >= kp.pub.n_squared) {
    throw CryptoError("decrypt: ciphertext outside [0, n^2)");
  }
  const mpz_class mp = (ell(powm(ct.value, sk.p - 1, sk.p_squared), sk.p) * sk.hp) % sk.p;
  const mpz_class mq = (ell(powm(ct.value, sk.q - 1, sk.q_squared), sk.q) * sk.hq) % sk.q;
  mpz_class h = ((mp - mq) * sk.q_inv_p) % sk.p;
  if (h < 0) h += sk.p;
  return mq + h * sk.q;
}

mpz_class decrypt_textbook(const KeyPair& kp, const Ciphertext& ct) {
  if (ct.value < 0 || ct.value >= kp.pub.n_squared) {
    throw CryptoError("decrypt: ciphertext outside [0, n^2)");
  }
  return (ell(powm(ct.value, kp.sec.lambda, kp.pub.n_squared), kp.pub.n) * kp.sec.mu) %
         kp.pub.n;
}

Ciphertext add_cipher(const PublicKey& pk, const Ciphertext& a, const Ciphertext& b) {
  return {(a.value * b.value) % pk.n_squared};
}

Ciphertext mul_plain(const PublicKey& pk, const Ciphertext& c, const FixedPoint& k) {
  if (k.mantissa < 0 || k.mantissa >= pk.n) {
    throw CryptoError("mul_plain: scalar mantissa outside [0, n)");
  }
  if (k.mantissa > pk.n / 2) {
    const mpz_class magnitude = pk.n - k.mantissa;
    return {powm(invert(c.value, pk.n_squared), magnitude, pk.n_squared)};
  }
  return {powm(c.value, k.mantissa, pk.n_squared)};
}

CipherVector encrypt_vector(const PublicKey& pk, std::span<const double> values,
                            int scale_bits, Rng& rng) {
  CipherVector out;
  out.scale_bits = scale_bits;
  out.key_id = pk.key_id;
  out.items.reserve(values.size());
  for (double v : values) out.items.push_back(encrypt(pk, encode(v, scale_bits, pk.n), rng));
  return out;
}

std::vector<double> decrypt_vector(const KeyPair& kp, const CipherVector& cv) {
  if (cv.key_id != kp.pub.key_id) throw CryptoError("decrypt_vector: key mismatch");
  std::vector<double> out;
  out.reserve(cv.size());
  for (const auto& c : cv.items) out.push_back(decode(decrypt(kp, c), cv.scale_bits, kp.pub.n));
  return out;
}

CipherVector add_cipher(const PublicKey& pk, const CipherVector& a, const CipherVector& b) {
  if (a.key_id != b.key_id || a.key_id != pk.key_id) {
    throw CryptoError("add_cipher: ciphertexts under different keys");
  }
  if (a.scale_bits != b.scale_bits) throw CryptoError("add_cipher: encoding scales differ");
  if (a.size() != b.size()) throw DimensionError("add_cipher: vector lengths differ");
  CipherVector out;
  out.scale_bits = a.scale_bits;
  out.key_id = a.key_id;
  for (std::size_t i = 0; i < a.size(); ++i) out.items.push_back(add_cipher(pk, a.items[i], b.items[i]));
  return out;
}

std::vector<std::uint8_t> to_bytes(const mpz_class& v) {
  if (v < 0) throw DomainError("to_bytes: negative integer");
  if (v == 0) return {};
  std::size_t count = 0;
  std::vector<std::uint8_t> out((mpz_sizeinbase(v.get_mpz_t(), 2) + 7) / 8);
  mpz_export(out.data(), &count, 1, 1, 1, 0, v.get_mpz_t());
  out.resize(count);
  return out;
}

mpz_class from_bytes(std::span<const std::uint8_t> bytes) {
  mpz_class v;
  if (!bytes.empty()) mpz_import(v.get_mpz_t(), bytes.size(), 1, 1, 1, 0, bytes.data());
  return v;
}

}  // namespace mpdl::he
