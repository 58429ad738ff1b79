#pragma once

#include <map>
#include <string>
#include <vector>

namespace jmae {

struct CheckpointEntry {
  std::vector<int> shape;
  std::vector<double> values;
};

/// On-disk model/optimizer snapshot. Layout: the magic line "JMAE1", a
/// single-line JSON config, a dtype line, an entry count, one manifest line
/// per tensor (path, rank, dims, byte offset into the payload), a "payload"
/// separator, then the raw little-endian values in manifest order.
struct Checkpoint {
  std::string config_json = "{}";
  bool f32 = false;  // storage width only; in-memory compute stays double
  std::map<std::string, CheckpointEntry> entries;

  void put(const std::string& path, std::vector<int> shape, std::vector<double> values);
  const CheckpointEntry& get(const std::string& path) const;
  bool has(const std::string& path) const { return entries.count(path) != 0; }

  /// Entries under `prefix.` with the prefix stripped.
  std::map<std::string, std::vector<double>> values_with_prefix(const std::string& prefix) const;
};

void save_checkpoint(const Checkpoint& ck, const std::string& file);
Checkpoint load_checkpoint(const std::string& file);

}  // namespace jmae
