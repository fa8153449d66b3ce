#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace imgcred {

enum class Domain { auxiliary, target_train, target_test };

std::string_view to_string(Domain d);
Domain parse_domain(std::string_view s);

// One data point. `features` is an optional precomputed feature vector
// (synthetic benchmarks and CSV-joined features use it).
struct Instance {
  std::string id;
  std::optional<std::string> image_path;
  std::optional<std::string> text;
  std::optional<int> label;  // 0 = real, 1 = fake
  Domain domain = Domain::target_train;
  double weight = 1.0;
  std::vector<double> features;
};

// Instances plus the directory image paths are resolved against.
struct Dataset {
  std::vector<Instance> instances;
  std::filesystem::path base_dir;

  std::size_t aux_count() const;           // n
  std::size_t target_train_count() const;  // m
  std::size_t count(Domain d) const;

  // Instances of one domain, in manifest order.
  std::vector<Instance> subset(Domain d) const;

  // Throws DataError if ids repeat or an instance breaks its invariants.
  void validate() const;
};

// Manifest: one JSON object per line.
Dataset load_manifest(const std::filesystem::path& path);
Dataset parse_manifest(std::string_view content, const std::filesystem::path& base_dir = {});
std::string render_manifest(const Dataset& data);
void save_manifest(const Dataset& data, const std::filesystem::path& path);

// H x W x C, row-major with channel fastest; values in [0, 1].
struct ImageTensor {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> values;

  ImageTensor() = default;
  ImageTensor(int h, int w, int c, double fill = 0.0);

  double& at(int y, int x, int c) {
    return values[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c) const {
    return values[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::size_t size() const { return values.size(); }
  bool operator==(const ImageTensor&) const = default;
};

// Binary PGM (P5) / PPM (P6), maxval 255.
ImageTensor decode_image(std::span<const std::uint8_t> bytes);
ImageTensor load_image(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_image(const ImageTensor& img);
void save_image(const ImageTensor& img, const std::filesystem::path& path);

// Bilinear interpolation, pixel-center aligned, edge-clamped.
ImageTensor resize_bilinear(const ImageTensor& img, int out_h, int out_w);

enum class FlipAxis { horizontal, vertical };
ImageTensor flip(const ImageTensor& img, FlipAxis axis);

// Channel mean.
ImageTensor to_grayscale(const ImageTensor& img);

// Rejects very small or very elongated images.
struct SizeFilter {
  int min_side = 32;
  double max_aspect = 4.0;
  bool accepts(int height, int width) const;
};

class BitSignature {
 public:
  BitSignature() = default;
  explicit BitSignature(std::size_t bits);

  std::size_t size() const { return bits_; }
  bool test(std::size_t i) const { return (words_[i / 64] >> (i % 64)) & 1U; }
  void set(std::size_t i) { words_[i / 64] |= std::uint64_t{1} << (i % 64); }
  std::span<const std::uint64_t> words() const { return words_; }
  bool operator==(const BitSignature&) const = default;

 private:
  std::size_t bits_ = 0;
  std::vector<std::uint64_t> words_;
};

std::size_t hamming_distance(const BitSignature& a, const BitSignature& b);

inline constexpr int kLshThumbnail = 16;
inline constexpr int kDefaultLshPlanes = 64;

// Random unit hyperplanes over the 16x16 thumbnail space, drawn once per seed.
class LshHasher {
 public:
  LshHasher(int planes, std::uint64_t seed);
  BitSignature sign(const ImageTensor& img) const;
  int planes() const { return planes_; }

 private:
  int planes_;
  std::vector<double> normals_;  // planes x 256
};

// Random-hyperplane signature of a mean-centred 16x16 grayscale thumbnail.
BitSignature lsh_signature(const ImageTensor& img, int planes, std::uint64_t seed);

// Greedy first-kept near-duplicate removal; returns kept indices.
std::vector<std::size_t> dedup(std::span<const ImageTensor> images, int planes, int threshold,
                               std::uint64_t seed);

}  // namespace imgcred
