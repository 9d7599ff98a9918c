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

#include <stdexcept>
#include <string>

namespace mpdl {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes that do not chain or agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Arguments outside an operation's documented domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Encoding band overflow, bad keys, undecryptable ciphertexts.
class CryptoError : public Error {
 public:
  using Error::Error;
};

// Message out of order, unexpected kind, stale batch tag.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Channel closed, timed out, or socket failure.
class TransportError : public Error {
 public:
  using Error::Error;
};

// Payload bytes that do not decode under the declared message kind.
class SchemaError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace mpdl
