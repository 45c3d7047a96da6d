#pragma once

// Mask interchange: a JSONL index with one line per detection,
// {frame, id, origin:[x,y], width, height, rle:[start,len,...]} or, for PNG
// storage, the same line without "rle" and an 8-bit grayscale file
// {frame}_{id}.png (nonzero = foreground) next to the index.

#include <filesystem>
#include <span>
#include <vector>

#include "stereofish/measurement.hpp"
#include "stereofish/serialization.hpp"

namespace stereofish {

struct MaskRecord {
  int frame = 0;
  int id = 0;
  BinaryMask mask;
};

enum class MaskStorage { Rle, Png };

void write_mask_png(const fs::path& path, const BinaryMask& mask);
/// Any bit depth / colour type is accepted; nonzero gray (or any nonzero
/// channel) is foreground.
BinaryMask read_mask_png(const fs::path& path, int origin_x, int origin_y);

fs::path mask_png_name(int frame, int id);

void write_masks(const fs::path& index_path, std::span<const MaskRecord> masks, const Provenance& prov,
                 MaskStorage storage = MaskStorage::Rle);
/// Sorted by (frame, id); PNG files are resolved relative to the index.
std::vector<MaskRecord> read_masks(const fs::path& index_path);

}  // namespace stereofish
