#include "fer/dataset.hpp"

#include "fer/digest.hpp"
#include "fer/errors.hpp"
#include "fer/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>

namespace fer {

std::string_view emotion_name(int index) {
  if (index < 0 || index >= kNumEmotions)
    throw LabelRangeError("emotion index " + std::to_string(index) + " outside 0..6", 0);
  return kEmotionNames[static_cast<std::size_t>(index)];
}

int emotion_index(std::string_view name) {
  for (std::size_t i = 0; i < kEmotionNames.size(); ++i)
    if (kEmotionNames[i] == name) return static_cast<int>(i);
  throw LabelRangeError("unknown emotion name '" + std::string(name) + "'", 0);
}

std::string_view usage_name(Usage u) {
  switch (u) {
  case Usage::Training:
    return "Training";
  case Usage::PublicTest:
    return "PublicTest";
  case Usage::PrivateTest:
    return "PrivateTest";
  }
  return "?";
}

Usage parse_usage(std::string_view s) {
  if (s == "Training") return Usage::Training;
  if (s == "PublicTest") return Usage::PublicTest;
  if (s == "PrivateTest") return Usage::PrivateTest;
  throw PartitionError("unknown usage '" + std::string(s) + "'", 0);
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

std::string_view unquote(std::string_view s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
  return s;
}

Sample parse_row(std::string_view line, std::size_t row) {
  const auto c1 = line.find(',');
  const auto c2 = c1 == std::string_view::npos ? c1 : line.find(',', c1 + 1);
  if (c2 == std::string_view::npos || line.find(',', c2 + 1) != std::string_view::npos)
    throw ParseError("expected 3 comma-separated fields", row);

  const auto label_field = trim(unquote(trim(line.substr(0, c1))));
  const auto pixel_field = unquote(trim(line.substr(c1 + 1, c2 - c1 - 1)));
  const auto usage_field = trim(unquote(trim(line.substr(c2 + 1))));

  Sample s;
  int label = -1;
  auto [lp, lec] = std::from_chars(label_field.data(), label_field.data() + label_field.size(), label);
  if (lec != std::errc{} || lp != label_field.data() + label_field.size())
    throw ParseError("non-integer emotion '" + std::string(label_field) + "'", row);
  if (label < 0 || label >= kNumEmotions)
    throw LabelRangeError("emotion " + std::to_string(label) + " outside 0..6", row);
  s.label = label;

  try {
    s.usage = parse_usage(usage_field);
  } catch (const PartitionError&) {
    throw PartitionError("unknown usage '" + std::string(usage_field) + "'", row);
  }

  s.pixels.resize(kImageSide, kImageSide);
  std::uint8_t* out = s.pixels.data();
  const char* p = pixel_field.data();
  const char* end = p + pixel_field.size();
  std::size_t count = 0;
  while (true) {
    while (p < end && *p == ' ') ++p;
    if (p == end) break;
    int v = 0;
    auto [next, ec] = std::from_chars(p, end, v);
    if (ec != std::errc{} || (next < end && *next != ' '))
      throw ParseError("non-integer pixel value", row);
    if (v < 0 || v > 255) throw ParseError("pixel value " + std::to_string(v) + " outside 0..255", row);
    if (count == kImagePixels)
      throw ParseError("pixel count exceeds " + std::to_string(kImagePixels), row);
    out[count++] = static_cast<std::uint8_t>(v);
    p = next;
  }
  if (count != kImagePixels)
    throw ParseError("expected " + std::to_string(kImagePixels) + " pixels, got " + std::to_string(count),
                     row);
  return s;
}

} // namespace

std::vector<Sample> parse_fer_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty input: missing header", 0);
  std::string header(trim(line));
  if (header.size() >= 3 && header.compare(0, 3, "\xEF\xBB\xBF") == 0) header.erase(0, 3);
  if (header != "emotion,pixels,Usage")
    throw ParseError("unexpected header '" + header + "'", 0);

  std::vector<Sample> samples;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    samples.push_back(parse_row(line, row));
  }
  return samples;
}

std::vector<Sample> load_fer_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return parse_fer_csv(in);
}

std::vector<std::int64_t> class_counts(std::span<const Sample> samples, int num_classes) {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (const auto& s : samples) {
    if (s.label < 0 || s.label >= num_classes)
      throw LabelRangeError("label " + std::to_string(s.label) + " outside 0.." +
                                std::to_string(num_classes - 1),
                            0);
    ++counts[static_cast<std::size_t>(s.label)];
  }
  return counts;
}

Fraction Fraction::parse(std::string_view s) {
  Fraction f;
  const auto slash = s.find('/');
  auto parse_int = [&](std::string_view t, std::int64_t& out) {
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
    if (ec != std::errc{} || p != t.data() + t.size())
      throw ConfigError("invalid fraction '" + std::string(s) + "'");
  };
  if (slash != std::string_view::npos) {
    parse_int(s.substr(0, slash), f.num);
    parse_int(s.substr(slash + 1), f.den);
  } else {
    // decimal form, e.g. 0.875
    const auto dot = s.find('.');
    if (dot == std::string_view::npos) throw ConfigError("invalid fraction '" + std::string(s) + "'");
    std::int64_t whole = 0;
    std::int64_t frac = 0;
    if (dot > 0) parse_int(s.substr(0, dot), whole);
    const auto digits = s.substr(dot + 1);
    if (digits.empty() || digits.size() > 12) throw ConfigError("invalid fraction '" + std::string(s) + "'");
    parse_int(digits, frac);
    std::int64_t den = 1;
    for (std::size_t i = 0; i < digits.size(); ++i) den *= 10;
    f.num = whole * den + frac;
    f.den = den;
  }
  if (f.den <= 0 || f.num <= 0 || f.num >= f.den)
    throw ConfigError("train fraction must lie strictly between 0 and 1");
  const auto g = std::gcd(f.num, f.den);
  f.num /= g;
  f.den /= g;
  return f;
}

StratifiedSplit stratified_split(std::span<const Sample> samples, Fraction train_fraction,
                                 std::uint64_t seed, int num_classes) {
  if (train_fraction.den <= 0 || train_fraction.num <= 0 || train_fraction.num >= train_fraction.den)
    throw ConfigError("train fraction must lie strictly between 0 and 1");

  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const int c = samples[i].label;
    if (c < 0 || c >= num_classes)
      throw LabelRangeError("label " + std::to_string(c) + " outside class range", 0);
    by_class[static_cast<std::size_t>(c)].push_back(i);
  }

  StratifiedSplit split;
  for (int c = 0; c < num_classes; ++c) {
    auto& idx = by_class[static_cast<std::size_t>(c)];
    if (idx.empty()) continue;
    if (idx.size() < 2)
      throw UnsplittableClassError("class " + std::to_string(c) + " has fewer than 2 samples");
    KeyedRng rng{seed, static_cast<std::uint64_t>(c)};
    for (std::size_t i = idx.size() - 1; i > 0; --i) std::swap(idx[i], idx[rng.below(i + 1)]);
    const auto n_train = static_cast<std::size_t>(train_fraction.floor_of(static_cast<std::int64_t>(idx.size())));
    split.train.insert(split.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.val.insert(split.val.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  return split;
}

const std::vector<std::size_t>& SplitManifest::test_indices(Usage partition) const {
  switch (partition) {
  case Usage::PublicTest:
    return public_test_indices;
  case Usage::PrivateTest:
    return private_test_indices;
  case Usage::Training:
    break;
  }
  throw InputError("Training is not a test partition");
}

namespace {

void append_list(std::string& out, std::string_view key, const std::vector<std::size_t>& v) {
  out += key;
  out += '=';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  out += '\n';
}

} // namespace

std::string SplitManifest::canonical_text() const {
  std::string out;
  out += "seed=" + std::to_string(seed) + "\n";
  out += "train_fraction=" + train_fraction.str() + "\n";
  out += "num_classes=" + std::to_string(num_classes) + "\n";
  append_list(out, "train", train_indices);
  append_list(out, "val", val_indices);
  append_list(out, "public_test", public_test_indices);
  append_list(out, "private_test", private_test_indices);
  return out;
}

SplitManifest make_manifest(std::span<const Sample> all, Fraction train_fraction, std::uint64_t seed,
                            int num_classes, std::string source_digest) {
  std::vector<std::size_t> training_rows;
  SplitManifest m;
  m.seed = seed;
  m.train_fraction = train_fraction;
  m.num_classes = num_classes;
  m.source_digest = std::move(source_digest);
  for (std::size_t i = 0; i < all.size(); ++i) {
    switch (all[i].usage) {
    case Usage::Training:
      training_rows.push_back(i);
      break;
    case Usage::PublicTest:
      m.public_test_indices.push_back(i);
      break;
    case Usage::PrivateTest:
      m.private_test_indices.push_back(i);
      break;
    }
  }
  const auto training = gather(all, training_rows);
  const auto split = stratified_split(training, train_fraction, seed, num_classes);
  for (auto i : split.train) m.train_indices.push_back(training_rows[i]);
  for (auto i : split.val) m.val_indices.push_back(training_rows[i]);
  m.digest = sha256_hex(m.canonical_text());
  return m;
}

std::string manifest_to_json(const SplitManifest& m) {
  nlohmann::ordered_json j;
  j["seed"] = m.seed;
  j["train_fraction"] = m.train_fraction.str();
  j["num_classes"] = m.num_classes;
  j["source_sha256"] = m.source_digest;
  j["digest"] = m.digest;
  j["train_indices"] = m.train_indices;
  j["val_indices"] = m.val_indices;
  j["public_test_indices"] = m.public_test_indices;
  j["private_test_indices"] = m.private_test_indices;
  return j.dump(1) + "\n";
}

SplitManifest manifest_from_json(std::string_view text) {
  SplitManifest m;
  try {
    const auto j = nlohmann::json::parse(text);
    m.seed = j.at("seed").get<std::uint64_t>();
    m.train_fraction = Fraction::parse(j.at("train_fraction").get<std::string>());
    m.num_classes = j.at("num_classes").get<int>();
    m.source_digest = j.value("source_sha256", std::string{});
    m.digest = j.at("digest").get<std::string>();
    m.train_indices = j.at("train_indices").get<std::vector<std::size_t>>();
    m.val_indices = j.at("val_indices").get<std::vector<std::size_t>>();
    m.public_test_indices = j.at("public_test_indices").get<std::vector<std::size_t>>();
    m.private_test_indices = j.at("private_test_indices").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw InputError(std::string("malformed manifest: ") + e.what());
  }
  if (sha256_hex(m.canonical_text()) != m.digest) throw InputError("manifest digest does not match its contents");
  return m;
}

std::string serialize_samples(std::span<const Sample> samples) {
  std::string out;
  out.reserve(samples.size() * (kImagePixels + 8));
  for (const auto& s : samples) {
    out.push_back(static_cast<char>(s.label));
    out.push_back(static_cast<char>(s.usage));
    const auto rows = static_cast<std::uint16_t>(s.pixels.rows());
    const auto cols = static_cast<std::uint16_t>(s.pixels.cols());
    out.push_back(static_cast<char>(rows & 0xFF));
    out.push_back(static_cast<char>(rows >> 8));
    out.push_back(static_cast<char>(cols & 0xFF));
    out.push_back(static_cast<char>(cols >> 8));
    out.append(reinterpret_cast<const char*>(s.pixels.data()), static_cast<std::size_t>(s.pixels.size()));
  }
  return out;
}

std::vector<Sample> gather(std::span<const Sample> all, std::span<const std::size_t> indices) {
  std::vector<Sample> out;
  out.reserve(indices.size());
  for (auto i : indices) {
    if (i >= all.size()) throw InputError("index " + std::to_string(i) + " outside dataset of " +
                                          std::to_string(all.size()) + " rows");
    out.push_back(all[i]);
  }
  return out;
}

} // namespace fer
