#pragma once

#include <map>
#include <string>

#include "puiq/display.hpp"
#include "puiq/io.hpp"
#include "puiq/pu.hpp"

namespace puiq {

// Loads an image and runs it to normalized PU units:
//   .png  display-encoded luma -> display response -> PU21 -> scheme
//   .pfm  linear luminance -> PU21 -> scheme
Grid load_encoded(const std::filesystem::path& path, NormScheme scheme,
                  const DisplayModel& sdr_display);

// Per-run cache of normalized encoded images keyed by absolute path.
class EncodedCache {
 public:
  EncodedCache(NormScheme scheme, DisplayModel sdr_display)
      : scheme_(scheme), display_(std::move(sdr_display)) {}

  const Grid& get(const std::filesystem::path& path);

 private:
  NormScheme scheme_;
  DisplayModel display_;
  std::map<std::string, Grid> cache_;
};

}  // namespace puiq
