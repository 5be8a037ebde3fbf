#pragma once

#include <string>
#include <vector>

#include "modit/synth.hpp"

namespace modit {

// Binary dataset container, little-endian throughout.
//
//   offset  size  field
//   0       4     magic "MDTD"
//   4       4     u32 format version (currently 1)
//   8       4     u32 pair count
//   12      4     u32 frames per pair
//   16      4     u32 audio dim
//   20      4     u32 coefficient dim
//   24      ...   records: per pair, audio (frames*audio_dim f32), expression
//                 (frames*coeff_dim f32), blink (frames f32)
struct DatasetDims {
    int num_pairs = 0;
    int t_frames = 0;
    int audio_dim = 0;
    int coeff_dim = 0;
};

inline constexpr uint32_t kDatasetVersion = 1;

void write_dataset(const std::string& path, const std::vector<DataPair>& pairs);
std::vector<DataPair> read_dataset(const std::string& path, DatasetDims* dims = nullptr);

// Plain-text coefficient trace: one frame per line, space-separated decimals
// printed with round-trip precision.
void write_trace(const std::string& path, const MatF& sequence);
MatF read_trace(const std::string& path);

// Atomic text write used for every generated artifact (write temp, rename).
void write_text_atomic(const std::string& path, const std::string& content);

}  // namespace modit
