#include "puiq/io.hpp"

#include <png.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace puiq {

namespace {

[[noreturn]] void parse_fail(const std::filesystem::path& path, long offset,
                             const std::string& what) {
  throw ParseError(path.string() + ": " + what + " (byte offset " +
                   std::to_string(offset) + ")");
}

void check_finite(const Grid& g, const std::filesystem::path& path) {
  if (!g.isFinite().all())
    throw DataError(path.string() + ": non-finite pixel values");
}

}  // namespace

// ---------------------------------------------------------------------------
// PFM

ImageFile read_pfm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string());

  auto token = [&](const char* what) {
    std::string t;
    if (!(f >> t)) parse_fail(path, static_cast<long>(f.tellg()), std::string("missing ") + what);
    return t;
  };

  const std::string magic = token("magic");
  if (magic == "PF")
    throw DataError(path.string() + ": 3-channel PFM not supported (luma only)");
  if (magic != "Pf") parse_fail(path, 0, "bad magic '" + magic + "'");

  int w = 0, h = 0;
  double scale = 0.0;
  try {
    w = std::stoi(token("width"));
    h = std::stoi(token("height"));
    scale = std::stod(token("scale"));
  } catch (const std::exception&) {
    parse_fail(path, static_cast<long>(f.tellg()), "malformed header field");
  }
  if (w <= 0 || h <= 0) parse_fail(path, static_cast<long>(f.tellg()), "bad dimensions");
  if (scale == 0.0) parse_fail(path, static_cast<long>(f.tellg()), "zero scale field");
  f.get();  // single whitespace byte after the scale field

  const bool file_little = scale < 0.0;
  const bool host_little = std::endian::native == std::endian::little;

  std::vector<float> row(static_cast<std::size_t>(w));
  Grid img(h, w);
  // PFM stores rows bottom-to-top.
  for (int r = h - 1; r >= 0; --r) {
    f.read(reinterpret_cast<char*>(row.data()),
           static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!f)
      parse_fail(path, static_cast<long>(f.tellg()), "truncated payload");
    for (int c = 0; c < w; ++c) {
      float v = row[static_cast<std::size_t>(c)];
      if (file_little != host_little) {
        std::uint32_t u;
        std::memcpy(&u, &v, 4);
        u = __builtin_bswap32(u);
        std::memcpy(&v, &u, 4);
      }
      img(r, c) = v;
    }
  }
  check_finite(img, path);
  return ImageFile{std::move(img), 32, ColorspaceTag::LinearLuminance};
}

void write_pfm(const std::filesystem::path& path, const Grid& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  const bool host_little = std::endian::native == std::endian::little;
  f << "Pf\n" << w << " " << h << "\n" << (host_little ? "-1.0" : "1.0") << "\n";
  std::vector<float> row(static_cast<std::size_t>(w));
  for (int r = h - 1; r >= 0; --r) {
    for (int c = 0; c < w; ++c)
      row[static_cast<std::size_t>(c)] = static_cast<float>(img(r, c));
    f.write(reinterpret_cast<const char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!f) throw DataError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// PNG

namespace {

struct PngReadCtx {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::FILE* fp = nullptr;
  ~PngReadCtx() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (fp) std::fclose(fp);
  }
};

struct PngWriteCtx {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::FILE* fp = nullptr;
  ~PngWriteCtx() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (fp) std::fclose(fp);
  }
};

}  // namespace

ImageFile read_png8(const std::filesystem::path& path) {
  PngReadCtx ctx;
  ctx.fp = std::fopen(path.string().c_str(), "rb");
  if (!ctx.fp) throw DataError("cannot open " + path.string());
  ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.png || !ctx.info) throw DataError("libpng init failed");
  if (setjmp(png_jmpbuf(ctx.png)))
    throw ParseError(path.string() + ": malformed PNG");
  png_init_io(ctx.png, ctx.fp);
  png_read_info(ctx.png, ctx.info);

  const png_uint_32 w = png_get_image_width(ctx.png, ctx.info);
  const png_uint_32 h = png_get_image_height(ctx.png, ctx.info);
  const int depth = png_get_bit_depth(ctx.png, ctx.info);
  const int color = png_get_color_type(ctx.png, ctx.info);
  if (depth == 16)
    throw DataError(path.string() + ": 16-bit PNG not supported");
  if (color == PNG_COLOR_TYPE_PALETTE)
    throw DataError(path.string() + ": palette PNG not supported");
  if (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_RGB &&
      color != PNG_COLOR_TYPE_GRAY_ALPHA && color != PNG_COLOR_TYPE_RGB_ALPHA)
    throw DataError(path.string() + ": unsupported PNG color type");
  if (depth < 8) png_set_expand_gray_1_2_4_to_8(ctx.png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(ctx.png);
  png_read_update_info(ctx.png, ctx.info);
  const int channels = png_get_channels(ctx.png, ctx.info);

  std::vector<png_byte> row(static_cast<std::size_t>(w) * channels);
  Grid img(h, w);
  for (png_uint_32 r = 0; r < h; ++r) {
    png_read_row(ctx.png, row.data(), nullptr);
    for (png_uint_32 c = 0; c < w; ++c) {
      double v;
      if (channels == 1) {
        v = row[c] / 255.0;
      } else {
        // Rec.709 luma weights on display-encoded values.
        v = (0.2126 * row[3 * c] + 0.7152 * row[3 * c + 1] +
             0.0722 * row[3 * c + 2]) / 255.0;
      }
      img(r, c) = v;
    }
  }
  return ImageFile{std::move(img), 8, ColorspaceTag::DisplayEncodedSdr};
}

void write_png8(const std::filesystem::path& path, const Grid& img) {
  PngWriteCtx ctx;
  ctx.fp = std::fopen(path.string().c_str(), "wb");
  if (!ctx.fp) throw DataError("cannot open " + path.string() + " for writing");
  ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.png || !ctx.info) throw DataError("libpng init failed");
  if (setjmp(png_jmpbuf(ctx.png)))
    throw DataError(path.string() + ": PNG write failed");
  png_init_io(ctx.png, ctx.fp);
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  png_set_IHDR(ctx.png, ctx.info, static_cast<png_uint_32>(w),
               static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(ctx.png, ctx.info);
  std::vector<png_byte> row(static_cast<std::size_t>(w));
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double v = std::clamp(img(r, c), 0.0, 1.0);
      row[static_cast<std::size_t>(c)] =
          static_cast<png_byte>(std::lround(v * 255.0));
    }
    png_write_row(ctx.png, row.data());
  }
  png_write_end(ctx.png, nullptr);
}

ImageFile read_image(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".pfm") return read_pfm(path);
  if (ext == ".png") return read_png8(path);
  throw DataError("unsupported image extension: " + path.string());
}

// ---------------------------------------------------------------------------
// Manifest CSV

std::filesystem::path DatasetManifest::resolve(const std::string& rel) const {
  std::filesystem::path p(rel);
  if (p.is_absolute()) return p;
  return dir / p;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

constexpr const char* kHeader = "ref_path,dist_path,label,domain,dtype,level,l_max";

}  // namespace

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open " + path.string());
  DatasetManifest m;
  m.dir = path.parent_path();

  std::string line;
  int lineno = 0;
  bool header_seen = false;
  std::set<std::pair<std::string, std::string>> seen;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq != std::string::npos) {
        std::string key = line.substr(1, eq - 1);
        while (!key.empty() && key.front() == ' ') key.erase(key.begin());
        m.provenance[key] = line.substr(eq + 1);
      }
      continue;
    }
    if (!header_seen) {
      if (line != kHeader)
        throw ParseError(path.string() + ":" + std::to_string(lineno) +
                         ": missing or wrong header row");
      header_seen = true;
      continue;
    }
    const auto cells = split_csv_line(line);
    if (cells.size() != 7)
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": expected 7 columns, got " + std::to_string(cells.size()));
    DatasetRecord rec;
    rec.ref_path = cells[0];
    rec.dist_path = cells[1];
    try {
      if (!cells[2].empty()) rec.label = std::stod(cells[2]);
      rec.domain = domain_from_string(cells[3]);
      rec.dtype = cells[4];
      rec.level = cells[5].empty() ? 0 : std::stoi(cells[5]);
      if (!cells[6].empty()) rec.l_max = std::stod(cells[6]);
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": bad numeric field: " + e.what());
    }
    if (!seen.insert({rec.ref_path, rec.dist_path}).second)
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": duplicate (ref,dist) pair " + rec.ref_path + "," +
                      rec.dist_path);
    m.records.push_back(std::move(rec));
  }
  if (!header_seen)
    throw ParseError(path.string() + ": empty manifest (no header)");
  return m;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  for (const auto& [k, v] : m.provenance) f << "# " << k << "=" << v << "\n";
  f << kHeader << "\n";
  for (const auto& r : m.records) {
    f << r.ref_path << "," << r.dist_path << ",";
    if (r.label) f << fmt_double(*r.label);
    f << "," << to_string(r.domain) << "," << r.dtype << "," << r.level << ",";
    if (r.l_max) f << fmt_double(*r.l_max);
    f << "\n";
  }
  if (!f) throw DataError("write failed: " + path.string());
}

}  // namespace puiq
