#include "dmlcsr/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dmlcsr::checkpoint {

namespace {
constexpr char kMagic[8] = {'D', 'M', 'L', 'C', 'S', 'R', '1', '\0'};

bool is_bn_stat_name(const std::string& name) {
  auto ends_with = [&](const char* suffix) {
    const std::size_t ls = std::strlen(suffix);
    return name.size() >= ls && name.compare(name.size() - ls, ls, suffix) == 0;
  };
  return ends_with(".running_mean") || ends_with(".running_var");
}
}  // namespace

void save(const csr::WeightRecord& rec, const std::string& path) {
  std::ostringstream manifest;
  for (const csr::WeightEntry& e : rec.entries) {
    manifest << e.name << '\t' << e.values.size() << '\t';
    for (std::size_t d = 0; d < e.shape.size(); ++d) {
      if (d) manifest << ' ';
      manifest << e.shape[d];
    }
    manifest << '\n';
  }
  const std::string m = manifest.str();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
  f.write(kMagic, 8);
  const std::uint64_t mlen = m.size();
  f.write(reinterpret_cast<const char*>(&mlen), 8);
  f.write(m.data(), static_cast<std::streamsize>(m.size()));
  for (const csr::WeightEntry& e : rec.entries)
    f.write(reinterpret_cast<const char*>(e.values.data()),
            static_cast<std::streamsize>(e.values.size() * sizeof(float)));
  if (!f) throw std::runtime_error("checkpoint: write failed: " + path);
}

csr::WeightRecord load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  std::uint64_t mlen = 0;
  f.read(reinterpret_cast<char*>(&mlen), 8);
  if (!f || mlen > (1ull << 30)) throw std::runtime_error("checkpoint: bad manifest length");
  std::string m(mlen, '\0');
  f.read(m.data(), static_cast<std::streamsize>(mlen));
  if (!f) throw std::runtime_error("checkpoint: truncated manifest");

  csr::WeightRecord rec;
  std::istringstream ms(m);
  std::string line;
  while (std::getline(ms, line)) {
    if (line.empty()) continue;
    const std::size_t t1 = line.find('\t');
    const std::size_t t2 = line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos)
      throw std::runtime_error("checkpoint: malformed manifest line");
    csr::WeightEntry e;
    e.name = line.substr(0, t1);
    const std::uint64_t count = std::stoull(line.substr(t1 + 1, t2 - t1 - 1));
    std::istringstream dims(line.substr(t2 + 1));
    int d;
    while (dims >> d) e.shape.push_back(d);
    e.bn_stat = is_bn_stat_name(e.name);
    e.values.resize(count);
    rec.entries.push_back(std::move(e));
  }
  for (csr::WeightEntry& e : rec.entries) {
    f.read(reinterpret_cast<char*>(e.values.data()),
           static_cast<std::streamsize>(e.values.size() * sizeof(float)));
    if (!f) throw std::runtime_error("checkpoint: truncated payload for " + e.name);
  }
  return rec;
}

}  // namespace dmlcsr::checkpoint
