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

#ifndef LAYERSERVE_WIRE_HPP_
#define LAYERSERVE_WIRE_HPP_

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "layerserve/envelope.hpp"

// Byte layout of one frame (all integers little-endian):
//
//   offset size field
//        0    4 magic "LSVF"
//        4    2 version (1)
//        6    4 client_id
//       10    8 request_id
//       18    2 layer block
//       20    1 layer role
//       21    1 kind (request pass, control, reply or error)
//       22    4 token_count
//       26    4 width
//       30    * token_count * width IEEE-754 binary32 values
//
// See docs/wire-format.md for the kind byte table.
namespace layerserve::wire {

inline constexpr std::uint8_t kMagic[4] = {'L', 'S', 'V', 'F'};
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 30;

enum class Kind : std::uint8_t {
  kForward = 0x00,
  kBackward = 0x01,
  kNoiseEffect = 0x02,
  kRegister = 0x10,    // token_count carries the JobKind
  kDeregister = 0x11,
  kReplyForward = 0x80,
  kReplyBackward = 0x81,
  kReplyNoiseEffect = 0x82,
  kError = 0xE0,       // width carries an ErrorCode
};

bool is_request(Kind kind);
bool is_reply(Kind kind);
Kind request_kind(Pass pass);
Kind reply_kind(Pass pass);
Pass pass_of(Kind kind);

/// Codes carried by error frames.
enum class ErrorCode : std::uint32_t {
  kWidthMismatch = 1,
  kUnknownLayer = 2,
  kBadRequest = 3,
  kShutdown = 4,
};

struct Frame {
  std::uint32_t client_id = 0;
  std::uint64_t request_id = 0;
  std::uint16_t block = 0;
  std::uint8_t role = 0;
  Kind kind = Kind::kForward;
  std::uint32_t token_count = 0;
  std::uint32_t width = 0;
  std::vector<float> payload;

  bool operator==(const Frame&) const = default;
};

enum class WireErrorKind { kTruncated, kBadMagic, kBadVersion, kBadKind, kLength };

class WireError : public std::runtime_error {
 public:
  WireError(WireErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  WireErrorKind kind() const { return kind_; }

 private:
  WireErrorKind kind_;
};

std::vector<std::uint8_t> encode(const Frame& frame);
void encode_into(const Frame& frame, std::vector<std::uint8_t>& out);
/// Decodes exactly one frame occupying all of `bytes`.
Frame decode(std::span<const std::uint8_t> bytes);

/// Validates a header and returns it with an empty payload; the caller reads
/// `payload_bytes(header)` more bytes and passes them to `decode_payload`.
Frame decode_header(std::span<const std::uint8_t> header);
std::size_t payload_bytes(const Frame& header);
void decode_payload(std::span<const std::uint8_t> bytes, Frame& frame);

Frame to_frame(const RequestEnvelope& envelope);
RequestEnvelope to_envelope(const Frame& frame);

std::vector<std::uint8_t> encode(const RequestEnvelope& envelope);
RequestEnvelope decode_envelope(std::span<const std::uint8_t> bytes);

}  // namespace layerserve::wire

#endif  // LAYERSERVE_WIRE_HPP_
