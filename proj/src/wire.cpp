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

#include "layerserve/wire.hpp"

#include <bit>
#include <cstring>
#include <string>

namespace layerserve::wire {
namespace {

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(
        (static_cast<std::uint64_t>(value) >> (8 * i)) & 0xffu));
  }
}

template <typename T>
T get(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<std::uint64_t>(bytes[offset + i]) << (8 * i);
  }
  return static_cast<T>(v);
}

bool known_kind(std::uint8_t k) {
  switch (static_cast<Kind>(k)) {
    case Kind::kForward:
    case Kind::kBackward:
    case Kind::kNoiseEffect:
    case Kind::kRegister:
    case Kind::kDeregister:
    case Kind::kReplyForward:
    case Kind::kReplyBackward:
    case Kind::kReplyNoiseEffect:
    case Kind::kError:
      return true;
  }
  return false;
}

// Control and error frames never carry a payload; their count/width fields
// hold metadata.
bool carries_payload(Kind k) { return is_request(k) || is_reply(k); }

}  // namespace

bool is_request(Kind kind) {
  return kind == Kind::kForward || kind == Kind::kBackward ||
         kind == Kind::kNoiseEffect;
}

bool is_reply(Kind kind) {
  return kind == Kind::kReplyForward || kind == Kind::kReplyBackward ||
         kind == Kind::kReplyNoiseEffect;
}

Kind request_kind(Pass pass) {
  return static_cast<Kind>(static_cast<std::uint8_t>(pass));
}

Kind reply_kind(Pass pass) {
  return static_cast<Kind>(0x80u | static_cast<std::uint8_t>(pass));
}

Pass pass_of(Kind kind) {
  return static_cast<Pass>(static_cast<std::uint8_t>(kind) & 0x0fu);
}

std::size_t payload_bytes(const Frame& header) {
  if (!carries_payload(header.kind)) return 0;
  return static_cast<std::size_t>(header.token_count) * header.width *
         sizeof(float);
}

void encode_into(const Frame& frame, std::vector<std::uint8_t>& out) {
  const std::size_t expect =
      carries_payload(frame.kind)
          ? static_cast<std::size_t>(frame.token_count) * frame.width
          : 0;
  if (frame.payload.size() != expect) {
    throw WireError(WireErrorKind::kLength,
                    "frame payload has " + std::to_string(frame.payload.size()) +
                        " values, header implies " + std::to_string(expect));
  }
  out.clear();
  out.reserve(kHeaderSize + expect * sizeof(float));
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put<std::uint16_t>(out, kVersion);
  put<std::uint32_t>(out, frame.client_id);
  put<std::uint64_t>(out, frame.request_id);
  put<std::uint16_t>(out, frame.block);
  put<std::uint8_t>(out, frame.role);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(frame.kind));
  put<std::uint32_t>(out, frame.token_count);
  put<std::uint32_t>(out, frame.width);
  for (float v : frame.payload) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
}

std::vector<std::uint8_t> encode(const Frame& frame) {
  std::vector<std::uint8_t> out;
  encode_into(frame, out);
  return out;
}

Frame decode_header(std::span<const std::uint8_t> header) {
  if (header.size() < kHeaderSize) {
    throw WireError(WireErrorKind::kTruncated,
                    "frame header truncated at " + std::to_string(header.size()) +
                        " bytes");
  }
  if (std::memcmp(header.data(), kMagic, 4) != 0) {
    throw WireError(WireErrorKind::kBadMagic, "bad frame magic");
  }
  const auto version = get<std::uint16_t>(header, 4);
  if (version != kVersion) {
    throw WireError(WireErrorKind::kBadVersion,
                    "unsupported frame version " + std::to_string(version));
  }
  const auto kind = get<std::uint8_t>(header, 21);
  if (!known_kind(kind)) {
    throw WireError(WireErrorKind::kBadKind,
                    "unknown frame kind " + std::to_string(kind));
  }
  Frame f;
  f.client_id = get<std::uint32_t>(header, 6);
  f.request_id = get<std::uint64_t>(header, 10);
  f.block = get<std::uint16_t>(header, 18);
  f.role = get<std::uint8_t>(header, 20);
  f.kind = static_cast<Kind>(kind);
  f.token_count = get<std::uint32_t>(header, 22);
  f.width = get<std::uint32_t>(header, 26);
  return f;
}

void decode_payload(std::span<const std::uint8_t> bytes, Frame& frame) {
  const std::size_t need = payload_bytes(frame);
  if (bytes.size() < need) {
    throw WireError(WireErrorKind::kTruncated,
                    "frame payload truncated: " + std::to_string(bytes.size()) +
                        " of " + std::to_string(need) + " bytes");
  }
  frame.payload.resize(need / sizeof(float));
  for (std::size_t i = 0; i < frame.payload.size(); ++i) {
    frame.payload[i] = std::bit_cast<float>(get<std::uint32_t>(bytes, 4 * i));
  }
}

Frame decode(std::span<const std::uint8_t> bytes) {
  Frame f = decode_header(bytes);
  const std::size_t need = payload_bytes(f);
  auto rest = bytes.subspan(kHeaderSize);
  decode_payload(rest, f);
  if (rest.size() != need) {
    throw WireError(WireErrorKind::kLength,
                    "frame has " + std::to_string(rest.size() - need) +
                        " trailing bytes");
  }
  return f;
}

Frame to_frame(const RequestEnvelope& e) {
  Frame f;
  f.client_id = e.client_id;
  f.request_id = e.request_id;
  f.block = e.layer.block;
  f.role = static_cast<std::uint8_t>(e.layer.role);
  f.kind = request_kind(e.pass);
  f.token_count = e.token_count;
  f.width = e.width;
  f.payload = e.payload;
  return f;
}

RequestEnvelope to_envelope(const Frame& f) {
  if (!is_request(f.kind)) {
    throw WireError(WireErrorKind::kBadKind, "frame is not a layer request");
  }
  if (f.role > static_cast<std::uint8_t>(Role::kLmHead)) {
    throw WireError(WireErrorKind::kBadKind,
                    "unknown layer role " + std::to_string(f.role));
  }
  RequestEnvelope e;
  e.client_id = f.client_id;
  e.request_id = f.request_id;
  e.layer = {f.block, static_cast<Role>(f.role)};
  e.pass = pass_of(f.kind);
  e.token_count = f.token_count;
  e.width = f.width;
  e.payload = f.payload;
  return e;
}

std::vector<std::uint8_t> encode(const RequestEnvelope& envelope) {
  return encode(to_frame(envelope));
}

RequestEnvelope decode_envelope(std::span<const std::uint8_t> bytes) {
  return to_envelope(decode(bytes));
}

}  // namespace layerserve::wire
