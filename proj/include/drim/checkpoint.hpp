/*
 * Copyright 2026 The DRIM Authors.
 *
 * This source code is licensed under the Apache License, Version 2.0 license
 * found in the LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "drim/numeric.hpp"

namespace drim {

/*
 * Binary checkpoint layout, all integers and reals little-endian:
 *
 *   offset  size  field
 *   0       8     magic "DRIMCKPT"
 *   8       4     u32 format version (kCheckpointVersion)
 *   12      4     u32 embedding dimension d
 *   16      4     u32 interest count K
 *   20      8     u64 item table rows (catalog size + 1 padding row)
 *   28      8     u64 profile table rows (0 when profiles are unused)
 *   36      4     u32 byte length L of the config block
 *   40      L     config block: "key=value\n" lines sorted by key
 *   40+L    4     u32 matrix count M
 *   then M records:
 *           4     u32 name length n
 *           n     name bytes (no terminator)
 *           8     u64 rows
 *           8     u64 cols
 *           8*r*c f64 values, row-major (IEEE-754 binary64)
 */

inline constexpr char kCheckpointMagic[8] = {'D', 'R', 'I', 'M', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t dim = 0;
  std::uint32_t num_interests = 0;
  std::uint64_t item_rows = 0;
  std::uint64_t profile_rows = 0;
  std::map<std::string, std::string> config;
  std::vector<std::pair<std::string, Matrix>> matrices;

  const Matrix& matrix(const std::string& name) const;
  bool has_matrix(const std::string& name) const;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws DataError on I/O failure, bad magic, or version mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace drim
