#include "puiq/pipeline.hpp"

namespace puiq {

Grid load_encoded(const std::filesystem::path& path, NormScheme scheme,
                  const DisplayModel& sdr_display) {
  const ImageFile img = read_image(path);
  Grid luminance;
  if (img.tag == ColorspaceTag::DisplayEncodedSdr)
    luminance = display_response(img.pixels, sdr_display);
  else
    luminance = img.pixels;
  EncodedImage enc = pu21_encode(luminance);
  if (scheme != NormScheme::None) enc = normalize(enc, scheme);
  return std::move(enc.values);
}

const Grid& EncodedCache::get(const std::filesystem::path& path) {
  const std::string key = std::filesystem::absolute(path).string();
  auto it = cache_.find(key);
  if (it == cache_.end())
    it = cache_.emplace(key, load_encoded(path, scheme_, display_)).first;
  return it->second;
}

}  // namespace puiq
