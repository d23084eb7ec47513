/*
 * Copyright 2026 The DRIM Authors.
 *
 * This source code is licensed under the Apache License, Version 2.0 license
 * found in the LICENSE file in the root directory of this source tree.
 */

#include "drim/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "drim/error.hpp"

namespace drim {

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFFu);
  }
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw DataError("checkpoint: unexpected end of file");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

std::string get_bytes(std::istream& in, std::size_t n) {
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw DataError("checkpoint: unexpected end of file");
  return s;
}

// Guards against absurd allocations from corrupted headers.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 36;

}  // namespace

const Matrix& Checkpoint::matrix(const std::string& name) const {
  for (const auto& [n, m] : matrices) {
    if (n == name) return m;
  }
  throw DataError("checkpoint has no matrix named '" + name + "'");
}

bool Checkpoint::has_matrix(const std::string& name) const {
  return std::any_of(matrices.begin(), matrices.end(),
                     [&](const auto& entry) { return entry.first == name; });
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, ckpt.dim);
  put_le<std::uint32_t>(out, ckpt.num_interests);
  put_le<std::uint64_t>(out, ckpt.item_rows);
  put_le<std::uint64_t>(out, ckpt.profile_rows);

  std::string config_text;
  for (const auto& [key, value] : ckpt.config) config_text += key + "=" + value + "\n";
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(config_text.size()));
  out.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));

  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.matrices.size()));
  for (const auto& [name, m] : ckpt.matrices) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint64_t>(out, m.rows());
    put_le<std::uint64_t>(out, m.cols());
    for (double v : m.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
}

Checkpoint read_checkpoint(std::istream& in) {
  const std::string magic = get_bytes(in, sizeof(kCheckpointMagic));
  if (std::memcmp(magic.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw DataError("checkpoint: bad magic");
  }
  const auto version = get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(version) +
                    " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ckpt;
  ckpt.dim = get_le<std::uint32_t>(in);
  ckpt.num_interests = get_le<std::uint32_t>(in);
  ckpt.item_rows = get_le<std::uint64_t>(in);
  ckpt.profile_rows = get_le<std::uint64_t>(in);

  const auto config_len = get_le<std::uint32_t>(in);
  std::istringstream config_text(get_bytes(in, config_len));
  for (std::string line; std::getline(config_text, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("checkpoint: malformed config line '" + line + "'");
    ckpt.config[line.substr(0, eq)] = line.substr(eq + 1);
  }

  const auto count = get_le<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = get_bytes(in, get_le<std::uint32_t>(in));
    const auto rows = get_le<std::uint64_t>(in);
    const auto cols = get_le<std::uint64_t>(in);
    if (cols != 0 && rows > kMaxElements / cols) {
      throw DataError("checkpoint: matrix '" + name + "' too large");
    }
    std::vector<double> values(rows * cols);
    for (double& v : values) v = std::bit_cast<double>(get_le<std::uint64_t>(in));
    ckpt.matrices.emplace_back(std::move(name), Matrix(rows, cols, std::move(values)));
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path.string());
  write_checkpoint(out, ckpt);
  out.flush();
  if (!out) throw DataError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  return read_checkpoint(in);
}

}  // namespace drim
