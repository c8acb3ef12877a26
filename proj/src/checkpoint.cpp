#include "fer/checkpoint.hpp"

#include "fer/errors.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fer {

namespace {

constexpr std::string_view kMagic = "FERCKPT1";

template <typename T>
void put_le(std::string& out, T v) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw InputError("checkpoint is truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

} // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic);
  const std::string meta = ckpt.metadata.dump();
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.arrays.size()));
  for (const auto& a : ckpt.arrays) {
    std::uint64_t count = 1;
    for (auto d : a.shape) count *= d;
    if (count != a.data.size()) throw DimensionError("checkpoint array '" + a.name + "' shape/data mismatch");
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
    out += a.name;
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) put_le<std::uint64_t>(out, d);
    for (float f : a.data) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(kMagic.size()) != kMagic) throw InputError("not a checkpoint file (bad magic)");
  Checkpoint ckpt;
  const auto meta_len = r.le<std::uint32_t>();
  try {
    ckpt.metadata = nlohmann::ordered_json::parse(r.take(meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  const auto n = r.le<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) {
    CheckpointArray a;
    a.name = std::string(r.take(r.le<std::uint32_t>()));
    const auto ndim = r.le<std::uint32_t>();
    std::uint64_t count = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      a.shape.push_back(r.le<std::uint64_t>());
      count *= a.shape.back();
    }
    if (count > bytes.size()) throw InputError("checkpoint array '" + a.name + "' is truncated");
    a.data.resize(count);
    for (auto& f : a.data) f = std::bit_cast<float>(r.le<std::uint32_t>());
    ckpt.arrays.push_back(std::move(a));
  }
  if (!r.done()) throw InputError("trailing bytes after checkpoint arrays");
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = encode_checkpoint(ckpt);
  const auto tmp = std::filesystem::path(path).concat(".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

Checkpoint make_checkpoint(const TrainableModel& model, nlohmann::ordered_json metadata) {
  Checkpoint ckpt;
  auto groups = nlohmann::ordered_json::array();
  for (const auto& g : model.parameter_groups()) {
    CheckpointArray a;
    a.name = g.name;
    for (auto d : g.shape) a.shape.push_back(static_cast<std::uint64_t>(d));
    a.data.resize(static_cast<std::size_t>(g.size()));
    for (Eigen::Index i = 0; i < g.size(); ++i) a.data[static_cast<std::size_t>(i)] = static_cast<float>(g.values(i));
    ckpt.arrays.push_back(std::move(a));
    groups.push_back({{"name", g.name}, {"role", role_name(g.role)}, {"trainable", g.trainable}});
  }
  metadata["groups"] = std::move(groups);
  ckpt.metadata = std::move(metadata);
  return ckpt;
}

void load_checkpoint(TrainableModel& model, const Checkpoint& ckpt) {
  for (auto& g : model.parameter_groups()) {
    const CheckpointArray* match = nullptr;
    for (const auto& a : ckpt.arrays)
      if (a.name == g.name) match = &a;
    if (!match) throw InputError("checkpoint has no array for group '" + g.name + "'");
    if (match->shape.size() != g.shape.size())
      throw InputError("checkpoint array '" + g.name + "' has the wrong rank");
    for (std::size_t d = 0; d < g.shape.size(); ++d)
      if (match->shape[d] != static_cast<std::uint64_t>(g.shape[d]))
        throw InputError("checkpoint array '" + g.name + "' has the wrong shape");
    for (Eigen::Index i = 0; i < g.size(); ++i) g.values(i) = static_cast<double>(match->data[static_cast<std::size_t>(i)]);
  }
}

} // namespace fer
