#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "modit/matrix.hpp"

namespace modit {

// Checkpoint container: a JSON manifest (config snapshot, tensor names,
// shapes, byte offsets, bookkeeping) followed by little-endian float32
// payloads. Both the manifest and the payload are hash-verified on load.
//
//   offset  size  field
//   0       4     magic "MDCK"
//   4       4     u32 format version (currently 1)
//   8       8     u64 manifest byte length
//   16      n     manifest (UTF-8 JSON)
//   16+n    8     u64 FNV-1a hash of the manifest bytes
//   24+n    ...   payload (tensors at the offsets listed in the manifest)
struct Checkpoint {
    std::map<std::string, std::string> config;           // run-config snapshot
    long long opt_step = 0;                               // AdamW step counter
    long long steps_done = 0;                             // completed training steps
    std::vector<std::pair<std::string, MatF>> tensors;    // ordered named payloads

    const MatF* find(const std::string& name) const {
        for (const auto& [n, m] : tensors)
            if (n == name) return &m;
        return nullptr;
    }
};

inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

uint64_t fnv1a64(const void* data, size_t size);

}  // namespace modit
