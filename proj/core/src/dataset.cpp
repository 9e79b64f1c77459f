#include "emc/dataset.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "emc/errors.hpp"

namespace emc {

namespace {

constexpr std::array<char, 4> kMagic = {'E', 'M', 'C', '1'};
constexpr std::uint64_t kMaxClasses = 65536;

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto bits = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>(bits & 0xffu));
    bits = static_cast<U>(bits >> 8);
  }
}

void put_f32(std::string& out, float value) { put_le(out, std::bit_cast<std::uint32_t>(value)); }

template <typename T>
T get_le(const unsigned char* p) {
  std::make_unsigned_t<T> v = 0;
  for (std::size_t i = sizeof(T); i-- > 0;) v = static_cast<decltype(v)>((v << 8) | p[i]);
  return static_cast<T>(v);
}

/// Sequential reader that knows its byte offset.
class ByteReader {
 public:
  explicit ByteReader(std::ifstream& in) : in_(in) {}

  void read(std::span<unsigned char> out, const char* what) {
    in_.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size()));
    const auto got = static_cast<std::size_t>(in_.gcount());
    if (got != out.size()) {
      throw FormatError(fmt::format("truncated file while reading {}", what), offset_ + got);
    }
    offset_ += out.size();
  }

  template <typename T>
  T read_le(const char* what) {
    std::array<unsigned char, sizeof(T)> buf{};
    read(buf, what);
    return get_le<T>(buf.data());
  }

  [[nodiscard]] std::uint64_t offset() const noexcept { return offset_; }
  [[nodiscard]] bool at_end() { return in_.peek() == std::ifstream::traits_type::eof(); }

 private:
  std::ifstream& in_;
  std::uint64_t offset_ = 0;
};

void read_split(ByteReader& reader, Split& split, std::uint64_t count, std::size_t classes,
                const char* name) {
  const std::size_t dim = split.dim();
  const std::size_t record_bytes = dim * 4 + 2;
  std::vector<unsigned char> buf(record_bytes);
  std::vector<float> z(dim);
  split.reserve(static_cast<std::size_t>(count));
  for (std::uint64_t r = 0; r < count; ++r) {
    const std::uint64_t start = reader.offset();
    reader.read(buf, name);
    double sq = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      z[j] = std::bit_cast<float>(get_le<std::uint32_t>(buf.data() + j * 4));
      if (!std::isfinite(z[j])) {
        throw FormatError(fmt::format("non-finite component {} in {} record {}", j, name, r),
                          start + j * 4);
      }
      sq += static_cast<double>(z[j]) * static_cast<double>(z[j]);
    }
    const auto label = get_le<std::uint16_t>(buf.data() + dim * 4);
    if (label >= classes) {
      throw FormatError(fmt::format("label {} >= class count {} in {} record {}", label, classes,
                                    name, r),
                        start + dim * 4);
    }
    if (sq == 0.0) {
      throw FormatError(fmt::format("zero vector in {} record {}", name, r), start);
    }
    split.add(z, label);
  }
}

}  // namespace

void Split::add(std::span<const float> z, std::uint16_t label) {
  if (z.size() != dim_) {
    throw ConfigError(fmt::format("record has dimension {}, split expects {}", z.size(), dim_));
  }
  values_.insert(values_.end(), z.begin(), z.end());
  labels_.push_back(label);
}

void Split::reserve(std::size_t records) {
  values_.reserve(records * dim_);
  labels_.reserve(records);
}

std::vector<std::size_t> Split::class_counts(std::size_t classes) const {
  std::vector<std::size_t> counts(classes, 0);
  for (std::uint16_t l : labels_) {
    if (l < classes) ++counts[l];
  }
  return counts;
}

EmbeddingDataset::EmbeddingDataset(std::size_t dim, std::size_t classes)
    : dim_(dim), classes_(classes), train_(dim), test_(dim) {
  if (dim == 0) throw ConfigError("dataset dimension must be >= 1");
  if (classes == 0 || classes > kMaxClasses) {
    throw ConfigError("dataset class count must be in [1, 65536]");
  }
}

void EmbeddingDataset::validate(bool require_all_classes) const {
  auto check = [&](const Split& s, const char* name) {
    if (s.dim() != dim_) throw DataError(fmt::format("{} split has the wrong dimension", name));
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s.label(i) >= classes_) {
        throw DataError(fmt::format("{} record {} has label {} >= {}", name, i, s.label(i),
                                    classes_));
      }
      double sq = 0.0;
      for (float v : s.vector(i)) {
        if (!std::isfinite(v)) throw DataError(fmt::format("{} record {} is not finite", name, i));
        sq += static_cast<double>(v) * static_cast<double>(v);
      }
      if (sq == 0.0) throw DataError(fmt::format("{} record {} is the zero vector", name, i));
    }
    if (require_all_classes) {
      const auto counts = s.class_counts(classes_);
      for (std::size_t c = 0; c < classes_; ++c) {
        if (counts[c] == 0) throw DataError(fmt::format("class {} is missing from the {} split", c, name));
      }
    }
  };
  check(train_, "train");
  check(test_, "test");
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".meta.json");
}

void write_dataset(const EmbeddingDataset& ds, const std::filesystem::path& path) {
  ds.validate(false);
  std::string bytes;
  bytes.reserve(30 + (ds.train().size() + ds.test().size()) * (ds.dim() * 4 + 2));
  bytes.append(kMagic.data(), kMagic.size());
  put_le(bytes, kFormatVersion);
  put_le(bytes, static_cast<std::uint32_t>(ds.dim()));
  put_le(bytes, static_cast<std::uint32_t>(ds.classes()));
  put_le(bytes, static_cast<std::uint64_t>(ds.train().size()));
  put_le(bytes, static_cast<std::uint64_t>(ds.test().size()));
  for (const Split* split : {&ds.train(), &ds.test()}) {
    for (std::size_t i = 0; i < split->size(); ++i) {
      for (float v : split->vector(i)) put_f32(bytes, v);
      put_le(bytes, split->label(i));
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing '" + path.string() + "'");

  nlohmann::json side = ds.meta.is_object() ? ds.meta : nlohmann::json::object();
  side["source"] = ds.source;
  side["format"] = "EMC1";
  side["version"] = kFormatVersion;
  side["dim"] = ds.dim();
  side["classes"] = ds.classes();
  side["train_count"] = ds.train().size();
  side["test_count"] = ds.test().size();
  std::ofstream meta(sidecar_path(path), std::ios::trunc);
  if (!meta) throw DataError("cannot write sidecar for '" + path.string() + "'");
  meta << side.dump(2) << '\n';
}

EmbeddingDataset read_dataset(const std::filesystem::path& path, ReadOptions options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset '" + path.string() + "'");
  ByteReader reader(in);

  std::array<unsigned char, 4> magic{};
  reader.read(magic, "magic");
  if (std::memcmp(magic.data(), kMagic.data(), 4) != 0) {
    throw FormatError("bad magic (expected \"EMC1\")", 0);
  }
  const auto version = reader.read_le<std::uint16_t>("version");
  if (version != kFormatVersion) {
    throw FormatError(fmt::format("unsupported format version {} (expected {})", version,
                                  kFormatVersion),
                      4);
  }
  const auto dim = reader.read_le<std::uint32_t>("dimension");
  if (dim == 0) throw FormatError("dimension is zero", 6);
  const auto classes = reader.read_le<std::uint32_t>("class count");
  if (classes == 0 || classes > kMaxClasses) {
    throw FormatError(fmt::format("class count {} outside [1, 65536]", classes), 10);
  }
  const auto train_count = reader.read_le<std::uint64_t>("train count");
  const auto test_count = reader.read_le<std::uint64_t>("test count");

  const std::uint64_t file_size = std::filesystem::file_size(path);
  const std::uint64_t record_bytes = static_cast<std::uint64_t>(dim) * 4 + 2;
  const std::uint64_t expected = reader.offset() + (train_count + test_count) * record_bytes;
  if (train_count > file_size || test_count > file_size || expected > file_size) {
    throw FormatError(fmt::format("truncated file: header promises {} bytes, file has {}",
                                  expected, file_size),
                      file_size);
  }

  EmbeddingDataset ds(dim, classes);
  read_split(reader, ds.train(), train_count, classes, "train");
  read_split(reader, ds.test(), test_count, classes, "test");
  if (!reader.at_end()) throw FormatError("trailing bytes after last record", reader.offset());

  const auto side = sidecar_path(path);
  if (std::filesystem::exists(side)) {
    std::ifstream meta(side);
    nlohmann::json j;
    try {
      meta >> j;
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed sidecar '" + side.string() + "': " + e.what());
    }
    if (j.contains("source") && j["source"].is_string()) ds.source = j["source"].get<std::string>();
    ds.meta = std::move(j);
  }

  if (options.require_all_classes) ds.validate(true);
  return ds;
}

}  // namespace emc
