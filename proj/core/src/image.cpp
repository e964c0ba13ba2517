#include "sigmasr/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

namespace sigmasr {

Image::Image(int w, int h, int c, double fill)
    : width(w), height(h), channels(c),
      values(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(c), fill) {
  if (w < 1 || h < 1 || (c != 1 && c != 3)) {
    throw std::invalid_argument("image: dimensions must be >= 1 and channels 1 or 3");
  }
}

std::uint8_t to_u8(double v) {
  const double c = std::clamp(v, 0.0, 1.0) * 255.0;
  return static_cast<std::uint8_t>(std::lround(c));
}

// ---- PNM -------------------------------------------------------------------

namespace {

class HeaderScanner {
 public:
  explicit HeaderScanner(const std::vector<unsigned char>& b) : b_(b) {}

  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (std::isspace(b_[pos_])) {
        ++pos_;
      } else if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  long number() {
    skip_space_and_comments();
    if (pos_ >= b_.size() || !std::isdigit(b_[pos_])) {
      throw PnmError(PnmError::Kind::malformed_header, "pnm: expected a number in header");
    }
    long v = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      v = v * 10 + (b_[pos_++] - '0');
      if (v > 1'000'000'000L) throw PnmError(PnmError::Kind::malformed_header, "pnm: header value too large");
    }
    return v;
  }

  // Exactly one whitespace byte separates the header from the payload.
  void single_whitespace() {
    if (pos_ >= b_.size() || !std::isspace(b_[pos_])) {
      throw PnmError(PnmError::Kind::malformed_header, "pnm: missing whitespace before payload");
    }
    ++pos_;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  const std::vector<unsigned char>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

Image decode_pnm(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw PnmError(PnmError::Kind::malformed_header, "pnm: only binary P5/P6 is supported");
  }
  const int channels = bytes[1] == '5' ? 1 : 3;
  HeaderScanner scan(bytes);
  scan.advance(2);
  const long w = scan.number();
  const long h = scan.number();
  const long maxval = scan.number();
  if (w < 1 || h < 1) throw PnmError(PnmError::Kind::malformed_header, "pnm: dimensions must be positive");
  if (maxval != 255) {
    throw PnmError(PnmError::Kind::unsupported_maxval, "pnm: maxval " + std::to_string(maxval) + " is not 255");
  }
  scan.single_whitespace();
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(channels);
  if (bytes.size() - scan.pos() < n) throw PnmError(PnmError::Kind::truncated, "pnm: truncated payload");

  Image img(static_cast<int>(w), static_cast<int>(h), channels);
  const unsigned char* p = bytes.data() + scan.pos();
  const std::size_t plane = img.plane_size();
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < channels; ++c) {
      img.values[static_cast<std::size_t>(c) * plane + i] = p[i * static_cast<std::size_t>(channels) + static_cast<std::size_t>(c)] / 255.0;
    }
  }
  return img;
}

Image load_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PnmError(PnmError::Kind::io, "pnm: cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Image img = decode_pnm(bytes);
  img.provenance = path.string();
  return img;
}

std::vector<unsigned char> encode_pnm(const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw std::invalid_argument("pnm: channels must be 1 or 3");
  const std::string header = std::string(image.channels == 1 ? "P5" : "P6") + "\n" + std::to_string(image.width) +
                             " " + std::to_string(image.height) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  const std::size_t plane = image.plane_size();
  out.reserve(out.size() + plane * static_cast<std::size_t>(image.channels));
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < image.channels; ++c) out.push_back(to_u8(image.values[static_cast<std::size_t>(c) * plane + i]));
  }
  return out;
}

void save_pnm(const Image& image, const std::filesystem::path& path) {
  const auto bytes = encode_pnm(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PnmError(PnmError::Kind::io, "pnm: cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw PnmError(PnmError::Kind::io, "pnm: write failed for " + path.string());
}

// ---- color and geometry ------------------------------------------------------

Image rgb_to_y(const Image& image) {
  if (image.channels != 3) throw std::invalid_argument("rgb_to_y: image must have 3 channels");
  Image y(image.width, image.height, 1);
  y.provenance = image.provenance;
  const std::size_t plane = image.plane_size();
  for (std::size_t i = 0; i < plane; ++i) {
    const double r = image.values[i], g = image.values[plane + i], b = image.values[2 * plane + i];
    y.values[i] = (16.0 + 65.481 * r + 128.553 * g + 24.966 * b) / 255.0;
  }
  return y;
}

Image clamp01(const Image& image) {
  Image out = image;
  for (auto& v : out.values) v = std::clamp(v, 0.0, 1.0);
  return out;
}

Image crop(const Image& image, int x, int y, int w, int h) {
  if (x < 0 || y < 0 || w < 1 || h < 1 || x + w > image.width || y + h > image.height) {
    throw std::out_of_range("crop: window outside image");
  }
  Image out(w, h, image.channels);
  out.provenance = image.provenance;
  for (int c = 0; c < image.channels; ++c)
    for (int r = 0; r < h; ++r)
      for (int col = 0; col < w; ++col) out.at(c, r, col) = image.at(c, y + r, x + col);
  return out;
}

Image modcrop(const Image& image, int scale) {
  const int w = image.width - image.width % scale;
  const int h = image.height - image.height % scale;
  if (w < 1 || h < 1) throw std::invalid_argument("modcrop: image smaller than scale");
  if (w == image.width && h == image.height) return image;
  return crop(image, 0, 0, w, h);
}

// ---- bicubic ---------------------------------------------------------------

double keys_kernel(double x) {
  const double a = kKeysA;
  const double t = std::abs(x);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

std::array<double, 4> keys_weights(double t) {
  return {keys_kernel(t + 1.0), keys_kernel(t), keys_kernel(1.0 - t), keys_kernel(2.0 - t)};
}

namespace {

struct Contribution {
  std::vector<int> index;
  std::vector<double> weight;
};

// Per-output-sample source taps along one axis.
std::vector<Contribution> axis_weights(int in_size, int out_size) {
  const double sf = static_cast<double>(out_size) / static_cast<double>(in_size);
  const bool antialias = sf < 1.0;
  const double support = antialias ? 2.0 / sf : 2.0;
  std::vector<Contribution> table(static_cast<std::size_t>(out_size));
  for (int i = 0; i < out_size; ++i) {
    const double u = (i + 0.5) / sf - 0.5;
    const int first = static_cast<int>(std::floor(u - support)) + 1;
    const int last = static_cast<int>(std::ceil(u + support)) - 1;
    auto& c = table[static_cast<std::size_t>(i)];
    double total = 0.0;
    for (int j = first; j <= last; ++j) {
      const double w = antialias ? sf * keys_kernel(sf * (u - j)) : keys_kernel(u - j);
      if (w == 0.0) continue;
      c.index.push_back(std::clamp(j, 0, in_size - 1));
      c.weight.push_back(w);
      total += w;
    }
    for (auto& w : c.weight) w /= total;
  }
  return table;
}

}  // namespace

Image resize_to(const Image& image, int out_width, int out_height) {
  if (out_width < 1 || out_height < 1) throw std::invalid_argument("bicubic_resize: result would be empty");
  const auto wx = axis_weights(image.width, out_width);
  const auto wy = axis_weights(image.height, out_height);
  // Horizontal pass then vertical pass.
  Image tmp(out_width, image.height, image.channels);
  for (int c = 0; c < image.channels; ++c)
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < out_width; ++x) {
        const auto& con = wx[static_cast<std::size_t>(x)];
        double acc = 0.0;
        for (std::size_t k = 0; k < con.index.size(); ++k) acc += con.weight[k] * image.at(c, y, con.index[k]);
        tmp.at(c, y, x) = acc;
      }
  Image out(out_width, out_height, image.channels);
  out.provenance = image.provenance;
  for (int c = 0; c < image.channels; ++c)
    for (int y = 0; y < out_height; ++y) {
      const auto& con = wy[static_cast<std::size_t>(y)];
      for (int x = 0; x < out_width; ++x) {
        double acc = 0.0;
        for (std::size_t k = 0; k < con.index.size(); ++k) acc += con.weight[k] * tmp.at(c, con.index[k], x);
        out.at(c, y, x) = acc;
      }
    }
  return out;
}

Image bicubic_resize(const Image& image, double scale, ResizeDirection direction) {
  if (!(scale > 0.0)) throw std::invalid_argument("bicubic_resize: scale must be positive");
  int w = 0, h = 0;
  if (direction == ResizeDirection::down) {
    w = static_cast<int>(std::floor(image.width / scale + 1e-9));
    h = static_cast<int>(std::floor(image.height / scale + 1e-9));
  } else {
    w = static_cast<int>(std::lround(image.width * scale));
    h = static_cast<int>(std::lround(image.height * scale));
  }
  return resize_to(image, w, h);
}

// ---- dihedral -----------------------------------------------------------------

Image apply_dihedral(const Image& image, int code) {
  if (code < 0 || code >= 8) throw std::invalid_argument("apply_dihedral: code must be in [0, 8)");
  Image cur = image;
  if (code >= 4) {
    for (int c = 0; c < cur.channels; ++c)
      for (int y = 0; y < cur.height; ++y)
        for (int x = 0; x < cur.width; ++x) cur.at(c, y, x) = image.at(c, y, image.width - 1 - x);
  }
  for (int turn = 0; turn < code % 4; ++turn) {
    // Counter-clockwise quarter turn: out(y, x) = in(x, W - 1 - y).
    Image rot(cur.height, cur.width, cur.channels);
    rot.provenance = cur.provenance;
    for (int c = 0; c < cur.channels; ++c)
      for (int y = 0; y < rot.height; ++y)
        for (int x = 0; x < rot.width; ++x) rot.at(c, y, x) = cur.at(c, x, cur.width - 1 - y);
    cur = std::move(rot);
  }
  return cur;
}

// ---- tensors ------------------------------------------------------------------

Tensor images_to_tensor(const std::vector<const Image*>& images) {
  if (images.empty()) throw std::invalid_argument("images_to_tensor: no images");
  const Image& first = *images.front();
  std::vector<double> values;
  values.reserve(images.size() * first.values.size());
  for (const Image* img : images) {
    if (!img->same_dims(first)) throw std::invalid_argument("images_to_tensor: images differ in size");
    values.insert(values.end(), img->values.begin(), img->values.end());
  }
  return Tensor::from({images.size(), static_cast<std::size_t>(first.channels), static_cast<std::size_t>(first.height),
                       static_cast<std::size_t>(first.width)},
                      std::move(values));
}

Tensor image_to_tensor(const Image& image) { return images_to_tensor({&image}); }

Image tensor_to_image(const Tensor& t, std::size_t n) {
  if (t.rank() != 4 || n >= t.dim(0)) throw std::invalid_argument("tensor_to_image: expected N×C×H×W and n < N");
  Image img(static_cast<int>(t.dim(3)), static_cast<int>(t.dim(2)), static_cast<int>(t.dim(1)));
  const auto v = t.values();
  const std::size_t per = img.values.size();
  std::copy(v.begin() + static_cast<long>(n * per), v.begin() + static_cast<long>((n + 1) * per), img.values.begin());
  return img;
}

}  // namespace sigmasr
