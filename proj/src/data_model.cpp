#include "imgcred/data_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "imgcred/error.hpp"
#include "imgcred/rng.hpp"

namespace imgcred {

using nlohmann::json;

std::string_view to_string(Domain d) {
  switch (d) {
    case Domain::auxiliary:
      return "auxiliary";
    case Domain::target_train:
      return "target_train";
    case Domain::target_test:
      return "target_test";
  }
  return "unknown";
}

Domain parse_domain(std::string_view s) {
  if (s == "auxiliary") return Domain::auxiliary;
  if (s == "target_train") return Domain::target_train;
  if (s == "target_test") return Domain::target_test;
  throw DataError("unknown domain '" + std::string(s) + "'");
}

std::size_t Dataset::count(Domain d) const {
  return static_cast<std::size_t>(std::count_if(instances.begin(), instances.end(),
                                                [d](const Instance& i) { return i.domain == d; }));
}

std::size_t Dataset::aux_count() const { return count(Domain::auxiliary); }
std::size_t Dataset::target_train_count() const { return count(Domain::target_train); }

std::vector<Instance> Dataset::subset(Domain d) const {
  std::vector<Instance> out;
  std::copy_if(instances.begin(), instances.end(), std::back_inserter(out),
               [d](const Instance& i) { return i.domain == d; });
  return out;
}

namespace {

void check_instance(const Instance& inst) {
  if (inst.id.empty()) throw DataError("instance with empty id");
  if (!(inst.weight >= 0.0) || !std::isfinite(inst.weight)) {
    throw DataError("instance '" + inst.id + "' has invalid weight");
  }
  if (inst.domain != Domain::auxiliary && !inst.label) {
    throw DataError("instance '" + inst.id + "' in " + std::string(to_string(inst.domain)) +
                    " has no label");
  }
  if (inst.label && *inst.label != 0 && *inst.label != 1) {
    throw DataError("instance '" + inst.id + "' has non-binary label");
  }
  if (!inst.image_path && !inst.text && inst.features.empty()) {
    throw DataError("instance '" + inst.id + "' has neither image, text, nor features");
  }
}

Instance instance_from_json(const json& j) {
  if (!j.is_object()) throw DataError("record is not a JSON object");
  Instance inst;
  if (!j.contains("id") || !j["id"].is_string()) throw DataError("missing string field 'id'");
  inst.id = j["id"].get<std::string>();
  if (j.contains("image") && !j["image"].is_null()) {
    if (!j["image"].is_string()) throw DataError("'image' must be a string");
    inst.image_path = j["image"].get<std::string>();
  }
  if (j.contains("text") && !j["text"].is_null()) {
    if (!j["text"].is_string()) throw DataError("'text' must be a string");
    inst.text = j["text"].get<std::string>();
  }
  if (j.contains("label") && !j["label"].is_null()) {
    if (!j["label"].is_number_integer()) throw DataError("'label' must be 0, 1 or null");
    inst.label = j["label"].get<int>();
  }
  if (!j.contains("domain") || !j["domain"].is_string()) {
    throw DataError("missing string field 'domain'");
  }
  inst.domain = parse_domain(j["domain"].get<std::string>());
  if (j.contains("weight") && !j["weight"].is_null()) {
    if (!j["weight"].is_number()) throw DataError("'weight' must be a number");
    inst.weight = j["weight"].get<double>();
  }
  if (j.contains("features") && !j["features"].is_null()) {
    if (!j["features"].is_array()) throw DataError("'features' must be an array");
    for (const auto& v : j["features"]) {
      if (!v.is_number()) throw DataError("'features' must hold numbers");
      inst.features.push_back(v.get<double>());
    }
  }
  check_instance(inst);
  return inst;
}

json instance_to_json(const Instance& inst) {
  json j;
  j["id"] = inst.id;
  if (inst.image_path) j["image"] = *inst.image_path;
  if (inst.text) j["text"] = *inst.text;
  j["label"] = inst.label ? json(*inst.label) : json(nullptr);
  j["domain"] = std::string(to_string(inst.domain));
  j["weight"] = inst.weight;
  if (!inst.features.empty()) j["features"] = inst.features;
  return j;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void Dataset::validate() const {
  std::set<std::string> seen;
  for (const auto& inst : instances) {
    check_instance(inst);
    if (!seen.insert(inst.id).second) throw DataError("duplicate id '" + inst.id + "'");
  }
}

Dataset parse_manifest(std::string_view content, const std::filesystem::path& base_dir) {
  Dataset data;
  data.base_dir = base_dir;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    auto end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    auto line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    try {
      auto inst = instance_from_json(json::parse(line));
      if (!seen.insert(inst.id).second) throw DataError("duplicate id '" + inst.id + "'");
      data.instances.push_back(std::move(inst));
    } catch (const json::exception& e) {
      throw DataError("manifest line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return data;
}

Dataset load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file(path), path.parent_path());
}

std::string render_manifest(const Dataset& data) {
  std::string out;
  for (const auto& inst : data.instances) {
    out += instance_to_json(inst).dump();
    out += '\n';
  }
  return out;
}

void save_manifest(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << render_manifest(data);
}

// ---------------------------------------------------------------------------
// Images

ImageTensor::ImageTensor(int h, int w, int c, double fill)
    : height(h), width(w), channels(c),
      values(static_cast<std::size_t>(h) * w * c, fill) {
  if (h < 1 || w < 1 || c < 1) throw ShapeError("image dimensions must be positive");
}

namespace {

// Reads one whitespace-delimited header integer, skipping '#' comments.
int read_header_int(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    const auto ch = bytes[pos];
    if (ch == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(ch)) {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw DataError("malformed PNM header");
  long value = 0;
  while (pos < bytes.size() && std::isdigit(bytes[pos])) {
    value = value * 10 + (bytes[pos] - '0');
    if (value > (1L << 24)) throw DataError("PNM header value out of range");
    ++pos;
  }
  return static_cast<int>(value);
}

}  // namespace

ImageTensor decode_image(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw DataError("not a binary PGM/PPM image (bad magic)");
  }
  const int channels = bytes[1] == '5' ? 1 : 3;
  std::size_t pos = 2;
  const int width = read_header_int(bytes, pos);
  const int height = read_header_int(bytes, pos);
  const int maxval = read_header_int(bytes, pos);
  if (width < 1 || height < 1) throw DataError("PNM image with zero dimension");
  if (maxval != 255) throw DataError("only maxval 255 is supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw DataError("malformed PNM header");
  ++pos;  // single whitespace byte before the raster
  ImageTensor img(height, width, channels);
  if (bytes.size() - pos < img.size()) throw DataError("truncated PNM payload");
  for (std::size_t i = 0; i < img.size(); ++i) img.values[i] = bytes[pos + i] / 255.0;
  return img;
}

ImageTensor load_image(const std::filesystem::path& path) {
  const auto content = read_file(path);
  try {
    return decode_image(std::span(reinterpret_cast<const std::uint8_t*>(content.data()),
                                  content.size()));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_image(const ImageTensor& img) {
  if (img.channels != 1 && img.channels != 3) throw ShapeError("PNM needs 1 or 3 channels");
  const std::string header = std::string(img.channels == 1 ? "P5" : "P6") + "\n" +
                             std::to_string(img.width) + " " + std::to_string(img.height) +
                             "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + img.size());
  for (double v : img.values) {
    out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  }
  return out;
}

void save_image(const ImageTensor& img, const std::filesystem::path& path) {
  const auto bytes = encode_image(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ImageTensor resize_bilinear(const ImageTensor& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ShapeError("resize target must be at least 1x1");
  ImageTensor out(out_h, out_w, img.channels);
  const double sy = static_cast<double>(img.height) / out_h;
  const double sx = static_cast<double>(img.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double ty = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double tx = fx - x0;
      for (int c = 0; c < img.channels; ++c) {
        const double top = img.at(y0, x0, c) * (1.0 - tx) + img.at(y0, x1, c) * tx;
        const double bottom = img.at(y1, x0, c) * (1.0 - tx) + img.at(y1, x1, c) * tx;
        out.at(y, x, c) = std::clamp(top * (1.0 - ty) + bottom * ty, 0.0, 1.0);
      }
    }
  }
  return out;
}

ImageTensor flip(const ImageTensor& img, FlipAxis axis) {
  ImageTensor out = img;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const int sy = axis == FlipAxis::vertical ? img.height - 1 - y : y;
      const int sx = axis == FlipAxis::horizontal ? img.width - 1 - x : x;
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  }
  return out;
}

ImageTensor to_grayscale(const ImageTensor& img) {
  if (img.channels == 1) return img;
  ImageTensor out(img.height, img.width, 1);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double s = 0.0;
      for (int c = 0; c < img.channels; ++c) s += img.at(y, x, c);
      out.at(y, x, 0) = s / img.channels;
    }
  }
  return out;
}

bool SizeFilter::accepts(int height, int width) const {
  if (std::min(height, width) < min_side) return false;
  const double aspect = static_cast<double>(std::max(height, width)) / std::min(height, width);
  return aspect <= max_aspect;
}

// ---------------------------------------------------------------------------
// LSH

BitSignature::BitSignature(std::size_t bits) : bits_(bits), words_((bits + 63) / 64, 0) {}

std::size_t hamming_distance(const BitSignature& a, const BitSignature& b) {
  if (a.size() != b.size()) throw ShapeError("signature lengths differ");
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.words().size(); ++i) {
    d += static_cast<std::size_t>(std::popcount(a.words()[i] ^ b.words()[i]));
  }
  return d;
}

LshHasher::LshHasher(int planes, std::uint64_t seed) : planes_(planes) {
  if (planes < 1) throw ShapeError("LSH needs at least one hyperplane");
  constexpr int dim = kLshThumbnail * kLshThumbnail;
  normals_.resize(static_cast<std::size_t>(planes) * dim);
  Rng rng(seed);
  for (int p = 0; p < planes; ++p) {
    double norm2 = 0.0;
    auto* row = &normals_[static_cast<std::size_t>(p) * dim];
    for (int i = 0; i < dim; ++i) {
      row[i] = rng.normal();
      norm2 += row[i] * row[i];
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (int i = 0; i < dim; ++i) row[i] *= inv;
  }
}

BitSignature LshHasher::sign(const ImageTensor& img) const {
  constexpr int dim = kLshThumbnail * kLshThumbnail;
  const auto thumb = resize_bilinear(to_grayscale(img), kLshThumbnail, kLshThumbnail);
  double mean = 0.0;
  for (double v : thumb.values) mean += v;
  mean /= dim;
  BitSignature sig(static_cast<std::size_t>(planes_));
  for (int p = 0; p < planes_; ++p) {
    const auto* row = &normals_[static_cast<std::size_t>(p) * dim];
    double proj = 0.0;
    for (int i = 0; i < dim; ++i) proj += row[i] * (thumb.values[i] - mean);
    if (proj >= 0.0) sig.set(static_cast<std::size_t>(p));
  }
  return sig;
}

BitSignature lsh_signature(const ImageTensor& img, int planes, std::uint64_t seed) {
  return LshHasher(planes, seed).sign(img);
}

std::vector<std::size_t> dedup(std::span<const ImageTensor> images, int planes, int threshold,
                               std::uint64_t seed) {
  if (threshold < 0 || threshold > planes) throw ShapeError("threshold must lie in [0, planes]");
  const LshHasher hasher(planes, seed);
  std::vector<std::size_t> kept;
  std::vector<BitSignature> kept_sigs;
  for (std::size_t i = 0; i < images.size(); ++i) {
    auto sig = hasher.sign(images[i]);
    const bool duplicate = std::any_of(kept_sigs.begin(), kept_sigs.end(), [&](const auto& k) {
      return hamming_distance(sig, k) <= static_cast<std::size_t>(threshold);
    });
    if (!duplicate) {
      kept.push_back(i);
      kept_sigs.push_back(std::move(sig));
    }
  }
  return kept;
}

}  // namespace imgcred
