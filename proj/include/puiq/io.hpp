#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "puiq/common.hpp"

namespace puiq {

enum class ColorspaceTag { DisplayEncodedSdr, LinearLuminance };

struct ImageFile {
  Grid pixels;
  int bit_depth = 32;  // 8 or 32
  ColorspaceTag tag = ColorspaceTag::LinearLuminance;
};

// Grayscale PFM ("Pf" header). Rows are stored bottom-to-top; the sign of
// the scale field encodes endianness. Values are 32-bit floats.
ImageFile read_pfm(const std::filesystem::path& path);
void write_pfm(const std::filesystem::path& path, const Grid& img);

// 8-bit grayscale or RGB PNG. RGB is reduced to luma with Rec.709 weights
// on read. Values are scaled to [0,1] display-encoded luma.
ImageFile read_png8(const std::filesystem::path& path);
void write_png8(const std::filesystem::path& path, const Grid& img);

// Reads either container based on the file extension (.pfm / .png).
ImageFile read_image(const std::filesystem::path& path);

struct DatasetRecord {
  std::string ref_path;
  std::string dist_path;
  std::optional<double> label;  // higher = better quality
  Domain domain = Domain::SDR;
  std::string dtype;
  int level = 0;
  std::optional<double> l_max;  // sampled display peak for HDR records
};

struct DatasetManifest {
  std::vector<DatasetRecord> records;
  std::map<std::string, std::string> provenance;
  std::filesystem::path dir;  // base for relative paths

  std::filesystem::path resolve(const std::string& rel) const;
};

// CSV schema: ref_path,dist_path,label,domain,dtype,level,l_max with a
// mandatory header row; '#' key=value lines before the header carry
// provenance. Empty label/l_max cells mean "absent".
DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& m);

}  // namespace puiq
