#include "jmae/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "jmae/tensor.hpp"

namespace jmae {

namespace {

constexpr char kMagic[] = "JMAE1";

void put_le(std::string& out, uint64_t bits, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

uint64_t get_le(const std::string& s, size_t off, int bytes) {
  uint64_t bits = 0;
  for (int i = 0; i < bytes; ++i)
    bits |= static_cast<uint64_t>(static_cast<unsigned char>(s[off + i])) << (8 * i);
  return bits;
}

}  // namespace

void Checkpoint::put(const std::string& path, std::vector<int> shape,
                     std::vector<double> values) {
  if (path.empty() || path.find_first_of(" \t\n\r") != std::string::npos)
    throw std::runtime_error("checkpoint path must be non-empty without whitespace: '" + path + "'");
  if (static_cast<int64_t>(values.size()) != shape_product(shape))
    throw std::runtime_error("checkpoint entry " + path + " has inconsistent shape");
  entries[path] = CheckpointEntry{std::move(shape), std::move(values)};
}

const CheckpointEntry& Checkpoint::get(const std::string& path) const {
  auto it = entries.find(path);
  if (it == entries.end()) throw std::runtime_error("checkpoint has no entry " + path);
  return it->second;
}

std::map<std::string, std::vector<double>> Checkpoint::values_with_prefix(
    const std::string& prefix) const {
  std::map<std::string, std::vector<double>> out;
  const std::string key = prefix + ".";
  for (const auto& [path, e] : entries)
    if (path.rfind(key, 0) == 0) out[path.substr(key.size())] = e.values;
  return out;
}

void save_checkpoint(const Checkpoint& ck, const std::string& file) {
  if (ck.config_json.find('\n') != std::string::npos)
    throw std::runtime_error("checkpoint config must be a single line");
  const int width = ck.f32 ? 4 : 8;
  std::ostringstream head;
  head << kMagic << '\n';
  head << "config " << ck.config_json << '\n';
  head << "dtype " << (ck.f32 ? "f32" : "f64") << '\n';
  head << "entries " << ck.entries.size() << '\n';
  uint64_t offset = 0;
  for (const auto& [path, e] : ck.entries) {
    head << path << ' ' << e.shape.size();
    for (int d : e.shape) head << ' ' << d;
    head << ' ' << offset << '\n';
    offset += e.values.size() * width;
  }
  head << "payload\n";

  std::string payload;
  payload.reserve(offset);
  for (const auto& [path, e] : ck.entries)
    for (double v : e.values) {
      if (ck.f32)
        put_le(payload, std::bit_cast<uint32_t>(static_cast<float>(v)), 4);
      else
        put_le(payload, std::bit_cast<uint64_t>(v), 8);
    }

  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + file);
  out << head.str() << payload;
  if (!out) throw std::runtime_error("write failed: " + file);
}

Checkpoint load_checkpoint(const std::string& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + file);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string data = buf.str();

  size_t pos = 0;
  auto next_line = [&]() -> std::string {
    const size_t nl = data.find('\n', pos);
    if (nl == std::string::npos) throw std::runtime_error("truncated checkpoint header: " + file);
    std::string line = data.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };

  if (next_line() != kMagic) throw std::runtime_error("bad checkpoint magic in " + file);
  Checkpoint ck;
  {
    const std::string line = next_line();
    if (line.rfind("config ", 0) != 0) throw std::runtime_error("missing config line in " + file);
    ck.config_json = line.substr(7);
  }
  {
    const std::string line = next_line();
    if (line == "dtype f64")
      ck.f32 = false;
    else if (line == "dtype f32")
      ck.f32 = true;
    else
      throw std::runtime_error("bad dtype line in " + file);
  }
  size_t count = 0;
  {
    std::istringstream is(next_line());
    std::string tag;
    if (!(is >> tag >> count) || tag != "entries")
      throw std::runtime_error("bad entries line in " + file);
  }
  struct Row {
    std::string path;
    std::vector<int> shape;
    uint64_t offset;
  };
  std::vector<Row> rows;
  rows.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    std::istringstream is(next_line());
    Row r;
    int rank = 0;
    if (!(is >> r.path >> rank) || rank < 0) throw std::runtime_error("bad manifest row in " + file);
    r.shape.resize(rank);
    for (int& d : r.shape)
      if (!(is >> d) || d <= 0) throw std::runtime_error("bad manifest dims in " + file);
    if (!(is >> r.offset)) throw std::runtime_error("bad manifest offset in " + file);
    rows.push_back(std::move(r));
  }
  if (next_line() != "payload") throw std::runtime_error("missing payload separator in " + file);

  const int width = ck.f32 ? 4 : 8;
  for (const auto& r : rows) {
    const int64_t n = shape_product(r.shape);
    const size_t begin = pos + r.offset;
    if (begin + static_cast<size_t>(n) * width > data.size())
      throw std::runtime_error("payload truncated for " + r.path + " in " + file);
    std::vector<double> vals(n);
    for (int64_t i = 0; i < n; ++i) {
      const uint64_t bits = get_le(data, begin + static_cast<size_t>(i) * width, width);
      vals[i] = ck.f32 ? static_cast<double>(std::bit_cast<float>(static_cast<uint32_t>(bits)))
                       : std::bit_cast<double>(bits);
    }
    ck.entries[r.path] = CheckpointEntry{r.shape, std::move(vals)};
  }
  return ck;
}

}  // namespace jmae
