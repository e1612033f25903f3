#pragma once

#include <string>

#include "dmlcsr/csr.hpp"

namespace dmlcsr::checkpoint {

// Binary checkpoint: magic "DMLCSR1\0", u64 LE manifest byte length, UTF-8
// manifest with one "name\tcount\tdim dim ...\n" line per array, then raw
// little-endian float32 payloads in manifest order. BN running statistics are
// ordinary named arrays (suffix .running_mean / .running_var).
void save(const csr::WeightRecord& rec, const std::string& path);
csr::WeightRecord load(const std::string& path);

}  // namespace dmlcsr::checkpoint
