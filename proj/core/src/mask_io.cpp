#include "stereofish/mask_io.hpp"

#include <algorithm>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <set>

#include <png.h>

#include "stereofish/error.hpp"

namespace stereofish {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// libpng reports errors by longjmp; the helpers below create no objects with
// destructors between setjmp and the libpng calls.
void png_fail(png_structp png, png_const_charp) { png_longjmp(png, 1); }
void png_warn(png_structp, png_const_charp) {}

bool write_rows(png_structp png, png_infop info, std::FILE* file, int width, int height, png_bytepp rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_init_io(png, file);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows);
  png_write_end(png, nullptr);
  return true;
}

struct PngLayout {
  int width = 0;
  int height = 0;
  std::size_t rowbytes = 0;
  int channels = 0;
};

bool read_layout(png_structp png, png_infop info, std::FILE* file, PngLayout* layout) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_init_io(png, file);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  // Normalise to 8-bit gray (+ alpha).
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_read_update_info(png, info);
  layout->width = static_cast<int>(png_get_image_width(png, info));
  layout->height = static_cast<int>(png_get_image_height(png, info));
  layout->rowbytes = png_get_rowbytes(png, info);
  layout->channels = png_get_channels(png, info);
  return true;
}

bool read_rows(png_structp png, png_bytepp rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_read_image(png, rows);
  png_read_end(png, nullptr);
  return true;
}

}  // namespace

fs::path mask_png_name(int frame, int id) { return std::to_string(frame) + "_" + std::to_string(id) + ".png"; }

void write_mask_png(const fs::path& path, const BinaryMask& mask) {
  if (mask.width() < 1 || mask.height() < 1) throw Error(ErrorCode::DataError, "cannot write an empty mask as PNG");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::vector<png_byte> pixels(static_cast<std::size_t>(mask.width()) * mask.height());
  std::vector<png_bytep> rows(mask.height());
  for (int r = 0; r < mask.height(); ++r) {
    rows[r] = pixels.data() + static_cast<std::size_t>(r) * mask.width();
    for (int c = 0; c < mask.width(); ++c) rows[r][c] = mask.at(c, r) ? 255 : 0;
  }
  FilePtr file(std::fopen(path.string().c_str(), "wb"));
  if (!file) throw Error(ErrorCode::DataError, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  const bool ok = png && info && write_rows(png, info, file.get(), mask.width(), mask.height(), rows.data());
  png_destroy_write_struct(&png, &info);
  if (!ok) throw Error(ErrorCode::DataError, "png encoding failed for " + path.string());
}

BinaryMask read_mask_png(const fs::path& path, int origin_x, int origin_y) {
  FilePtr file(std::fopen(path.string().c_str(), "rb"));
  if (!file) throw Error(ErrorCode::DataError, "cannot open " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw Error(ErrorCode::DataError, path.string() + ": not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  PngLayout layout;
  if (!png || !info || !read_layout(png, info, file.get(), &layout)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::DataError, path.string() + ": unreadable PNG header");
  }
  std::vector<png_byte> data(layout.rowbytes * layout.height);
  std::vector<png_bytep> rows(layout.height);
  for (int r = 0; r < layout.height; ++r) rows[r] = data.data() + r * layout.rowbytes;
  const bool ok = read_rows(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  if (!ok) throw Error(ErrorCode::DataError, path.string() + ": corrupt PNG data");

  BinaryMask mask(layout.width, layout.height, origin_x, origin_y);
  for (int r = 0; r < layout.height; ++r) {
    for (int c = 0; c < layout.width; ++c) {
      if (rows[r][c * layout.channels] != 0) mask.set(c, r);
    }
  }
  return mask;
}

void write_masks(const fs::path& index_path, std::span<const MaskRecord> masks, const Provenance& prov,
                 MaskStorage storage) {
  std::string text = provenance_json(prov).dump() + "\n";
  const fs::path dir = index_path.parent_path();
  for (const auto& m : masks) {
    Json j = {{"frame", m.frame},
              {"id", m.id},
              {"origin", {m.mask.origin_x(), m.mask.origin_y()}},
              {"width", m.mask.width()},
              {"height", m.mask.height()}};
    if (storage == MaskStorage::Rle) {
      j["rle"] = m.mask.to_rle();
    } else {
      write_mask_png(dir / mask_png_name(m.frame, m.id), m.mask);
    }
    text += j.dump() + "\n";
  }
  write_text_file(index_path, text);
}

std::vector<MaskRecord> read_masks(const fs::path& index_path) {
  const fs::path dir = index_path.parent_path();
  std::vector<MaskRecord> out;
  std::set<std::pair<int, int>> keys;
  for (const auto& [line, j] : read_jsonl(index_path)) {
    try {
      MaskRecord r;
      r.frame = j.at("frame").get<int>();
      r.id = j.at("id").get<int>();
      const Json& origin = j.at("origin");
      const int ox = origin.at(0).get<int>();
      const int oy = origin.at(1).get<int>();
      if (j.contains("rle")) {
        r.mask = BinaryMask::from_rle(j.at("width").get<int>(), j.at("height").get<int>(), ox, oy,
                                      j.at("rle").get<std::vector<std::int64_t>>());
      } else {
        const fs::path file = j.contains("png") ? fs::path(j.at("png").get<std::string>()) : mask_png_name(r.frame, r.id);
        r.mask = read_mask_png(file.is_absolute() ? file : dir / file, ox, oy);
      }
      if (!keys.insert({r.frame, r.id}).second) throw Error(ErrorCode::DataError, "duplicate mask");
      out.push_back(std::move(r));
    } catch (const Json::exception& e) {
      throw_record_error(index_path, line, e.what());
    } catch (const Error& e) {
      throw_record_error(index_path, line, e.what());
    }
  }
  std::sort(out.begin(), out.end(), [](const MaskRecord& a, const MaskRecord& b) {
    return std::make_pair(a.frame, a.id) < std::make_pair(b.frame, b.id);
  });
  return out;
}

}  // namespace stereofish
