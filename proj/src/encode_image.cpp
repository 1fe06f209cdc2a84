#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "vreval/backends.hpp"
#include "vreval/errors.hpp"
#include "vreval/util.hpp"

namespace vreval {

namespace {

struct Format {
  const char* media_type;
  const char* cv_ext;  // extension for re-encoding after a resize
};

// Sniffs the container by magic bytes; decoding is format-agnostic.
Format sniff_format(const std::string& bytes) {
  auto has = [&](size_t off, std::string_view magic) {
    return bytes.size() >= off + magic.size() && bytes.compare(off, magic.size(), magic) == 0;
  };
  if (has(0, "\x89PNG")) return {"image/png", ".png"};
  if (has(0, "\xFF\xD8\xFF")) return {"image/jpeg", ".jpg"};
  if (has(0, "BM")) return {"image/bmp", ".bmp"};
  if (has(0, "RIFF") && has(8, "WEBP")) return {"image/webp", ".png"};  // re-encode webp as png
  if (has(0, "GIF8")) return {"image/gif", ".png"};
  throw DecodeError("unrecognized image format");
}

}  // namespace

EncodedImage encode_image(const ImageRef& image, int max_dimension) {
  if (max_dimension < 1) throw InputError("max_dimension must be >= 1");
  std::string bytes = util::read_file(image.path());
  Format fmt = sniff_format(bytes);

  cv::Mat raw(1, static_cast<int>(bytes.size()), CV_8UC1,
              const_cast<char*>(bytes.data()));
  cv::Mat decoded = cv::imdecode(raw, cv::IMREAD_UNCHANGED);
  if (decoded.empty()) throw DecodeError("cannot decode image: " + image.path());

  EncodedImage out;
  if (decoded.cols <= max_dimension && decoded.rows <= max_dimension) {
    out.media_type = fmt.media_type;
    out.base64_data = util::base64_encode(bytes);  // byte-identical passthrough
    out.width = decoded.cols;
    out.height = decoded.rows;
    return out;
  }

  // Downscale so the longer side equals max_dimension; never upscale.
  int new_w, new_h;
  if (decoded.cols >= decoded.rows) {
    new_w = max_dimension;
    new_h = std::max(1, static_cast<int>(std::lround(
                            static_cast<double>(decoded.rows) * max_dimension / decoded.cols)));
  } else {
    new_h = max_dimension;
    new_w = std::max(1, static_cast<int>(std::lround(
                            static_cast<double>(decoded.cols) * max_dimension / decoded.rows)));
  }
  cv::Mat resized;
  cv::resize(decoded, resized, cv::Size(new_w, new_h), 0, 0, cv::INTER_AREA);

  std::vector<unsigned char> encoded;
  if (!cv::imencode(fmt.cv_ext, resized, encoded)) {
    throw DecodeError("cannot re-encode resized image: " + image.path());
  }
  out.media_type = std::string(fmt.cv_ext) == ".png"   ? "image/png"
                   : std::string(fmt.cv_ext) == ".jpg" ? "image/jpeg"
                                                       : "image/bmp";
  out.base64_data = util::base64_encode(
      std::string_view(reinterpret_cast<const char*>(encoded.data()), encoded.size()));
  out.width = new_w;
  out.height = new_h;
  return out;
}

}  // namespace vreval
