#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <istream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fer {

inline constexpr int kNumEmotions = 7;
inline constexpr int kImageSide = 48;
inline constexpr int kImagePixels = kImageSide * kImageSide;

/// Label indices follow the FER-2013 CSV encoding.
enum class Emotion : std::uint8_t { Angry = 0, Disgust, Fear, Happy, Sad, Surprise, Neutral };

inline constexpr std::array<std::string_view, kNumEmotions> kEmotionNames = {
    "angry", "disgust", "fear", "happy", "sad", "surprise", "neutral"};

std::string_view emotion_name(int index);
/// Inverse of emotion_name; throws LabelRangeError on unknown names.
int emotion_index(std::string_view name);

enum class Usage : std::uint8_t { Training, PublicTest, PrivateTest };

std::string_view usage_name(Usage u);
Usage parse_usage(std::string_view s);

/// Row-major 8-bit grayscale image. Dynamic so tests can use small grids.
using GrayImage = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Sample {
  GrayImage pixels;
  int label = 0;
  Usage usage = Usage::Training;
};

/// Parses the FER-2013 distribution format: a header "emotion,pixels,Usage" followed
/// by one row per image. Throws ParseError (and subclasses) carrying the 1-based row.
std::vector<Sample> parse_fer_csv(std::istream& in);

std::vector<Sample> load_fer_csv(const std::string& path);

/// Tally per label. Labels outside [0, num_classes) throw LabelRangeError.
std::vector<std::int64_t> class_counts(std::span<const Sample> samples,
                                       int num_classes = kNumEmotions);

struct Fraction {
  std::int64_t num = 7;
  std::int64_t den = 8;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  /// floor(num * n / den) in exact integer arithmetic.
  std::int64_t floor_of(std::int64_t n) const { return (num * n) / den; }
  std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }
  static Fraction parse(std::string_view s);
};

struct StratifiedSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

/// Per-class seed-keyed Fisher-Yates; floor(fraction * n_c) of each class go to train.
/// Indices refer to positions in `samples`; each list is sorted ascending.
StratifiedSplit stratified_split(std::span<const Sample> samples, Fraction train_fraction,
                                 std::uint64_t seed, int num_classes = kNumEmotions);

struct SplitManifest {
  std::uint64_t seed = 42;
  Fraction train_fraction;
  int num_classes = kNumEmotions;
  // All index lists are 0-based data-row positions in the source CSV.
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
  std::vector<std::size_t> public_test_indices;
  std::vector<std::size_t> private_test_indices;
  std::string source_digest;
  std::string digest;

  const std::vector<std::size_t>& test_indices(Usage partition) const;
  std::string canonical_text() const;
};

/// Splits the Training rows of `all` and records both official test partitions as-is.
SplitManifest make_manifest(std::span<const Sample> all, Fraction train_fraction,
                            std::uint64_t seed, int num_classes = kNumEmotions,
                            std::string source_digest = {});

std::string manifest_to_json(const SplitManifest& m);
/// Throws InputError on malformed text or a digest that does not match the lists.
SplitManifest manifest_from_json(std::string_view text);

/// Stable byte encoding of samples (label, usage, pixels) used for integrity checks.
std::string serialize_samples(std::span<const Sample> samples);

std::vector<Sample> gather(std::span<const Sample> all, std::span<const std::size_t> indices);

} // namespace fer
