#include "cfaug/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace cfaug {

namespace {

constexpr char kMagic[8] = {'C', 'F', 'C', 'K', 'P', 'T', '0', '1'};
constexpr std::uint8_t kTypeInt = 0;
constexpr std::uint8_t kTypeDouble = 1;
constexpr std::uint8_t kTypeInts = 2;
constexpr std::uint8_t kTypeDoubles = 3;
constexpr std::uint8_t kTypeString = 4;

std::uint64_t fnv1a_append(std::uint64_t h, const void* data, std::size_t size) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ull;
  }
  return h;
}

template <typename T>
void write_pod(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error("checkpoint: truncated file " + path);
  return value;
}

}  // namespace

void CheckpointWriter::add(Section section) {
  for (const Section& s : sections_) {
    require(s.name != section.name,
            "CheckpointWriter: duplicate section '" + section.name + "'");
  }
  sections_.push_back(std::move(section));
}

void CheckpointWriter::put_int(const std::string& name, std::int64_t value) {
  Section s;
  s.name = name;
  s.type = kTypeInt;
  s.ints.push_back(value);
  add(std::move(s));
}

void CheckpointWriter::put_double(const std::string& name, double value) {
  Section s;
  s.name = name;
  s.type = kTypeDouble;
  s.doubles.push_back(value);
  add(std::move(s));
}

void CheckpointWriter::put_ints(const std::string& name,
                                const std::vector<std::int64_t>& values) {
  Section s;
  s.name = name;
  s.type = kTypeInts;
  s.ints = values;
  add(std::move(s));
}

void CheckpointWriter::put_doubles(const std::string& name, const Eigen::VectorXd& values) {
  Section s;
  s.name = name;
  s.type = kTypeDoubles;
  s.doubles.assign(values.data(), values.data() + values.size());
  add(std::move(s));
}

void CheckpointWriter::put_doubles(const std::string& name,
                                   const std::vector<double>& values) {
  Section s;
  s.name = name;
  s.type = kTypeDoubles;
  s.doubles = values;
  add(std::move(s));
}

void CheckpointWriter::put_string(const std::string& name, const std::string& value) {
  Section s;
  s.name = name;
  s.type = kTypeString;
  s.text = value;
  add(std::move(s));
}

void CheckpointWriter::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("checkpoint: cannot open " + path.string() + " for writing");

  std::uint64_t schema_hash = 1469598103934665603ull;
  for (const Section& s : sections_) {
    schema_hash = fnv1a_append(schema_hash, s.name.data(), s.name.size());
    schema_hash = fnv1a_append(schema_hash, &s.type, 1);
  }

  out.write(kMagic, sizeof(kMagic));
  write_pod(out, schema_hash);
  write_pod(out, static_cast<std::uint32_t>(sections_.size()));
  for (const Section& s : sections_) {
    write_pod(out, static_cast<std::uint16_t>(s.name.size()));
    out.write(s.name.data(), static_cast<std::streamsize>(s.name.size()));
    write_pod(out, s.type);
    switch (s.type) {
      case kTypeInt:
      case kTypeInts:
        write_pod(out, static_cast<std::uint64_t>(s.ints.size()));
        out.write(reinterpret_cast<const char*>(s.ints.data()),
                  static_cast<std::streamsize>(s.ints.size() * sizeof(std::int64_t)));
        break;
      case kTypeDouble:
      case kTypeDoubles:
        write_pod(out, static_cast<std::uint64_t>(s.doubles.size()));
        out.write(reinterpret_cast<const char*>(s.doubles.data()),
                  static_cast<std::streamsize>(s.doubles.size() * sizeof(double)));
        break;
      case kTypeString:
        write_pod(out, static_cast<std::uint64_t>(s.text.size()));
        out.write(s.text.data(), static_cast<std::streamsize>(s.text.size()));
        break;
      default:
        throw Error("checkpoint: unknown section type");
    }
  }
  if (!out) throw Error("checkpoint: write to " + path.string() + " failed");
}

CheckpointReader::CheckpointReader(const std::filesystem::path& path) : path_(path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("checkpoint: cannot open " + path.string());

  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error("checkpoint: " + path.string() + " is not a checkpoint file");
  }
  const auto stored_hash = read_pod<std::uint64_t>(in, path.string());
  const auto count = read_pod<std::uint32_t>(in, path.string());

  std::uint64_t schema_hash = 1469598103934665603ull;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint16_t>(in, path.string());
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto type = read_pod<std::uint8_t>(in, path.string());
    const auto payload = read_pod<std::uint64_t>(in, path.string());
    schema_hash = fnv1a_append(schema_hash, name.data(), name.size());
    schema_hash = fnv1a_append(schema_hash, &type, 1);

    Section s;
    s.type = type;
    switch (type) {
      case kTypeInt:
      case kTypeInts:
        s.ints.resize(payload);
        in.read(reinterpret_cast<char*>(s.ints.data()),
                static_cast<std::streamsize>(payload * sizeof(std::int64_t)));
        break;
      case kTypeDouble:
      case kTypeDoubles:
        s.doubles.resize(payload);
        in.read(reinterpret_cast<char*>(s.doubles.data()),
                static_cast<std::streamsize>(payload * sizeof(double)));
        break;
      case kTypeString:
        s.text.resize(payload);
        in.read(s.text.data(), static_cast<std::streamsize>(payload));
        break;
      default:
        throw Error("checkpoint: unknown section type in " + path.string());
    }
    if (!in) throw Error("checkpoint: truncated file " + path.string());
    sections_.emplace(std::move(name), std::move(s));
  }
  if (schema_hash != stored_hash) {
    throw Error("checkpoint: schema hash mismatch in " + path.string() +
                "; the file was written by a different model layout");
  }
}

bool CheckpointReader::has(const std::string& name) const {
  return sections_.count(name) > 0;
}

const CheckpointReader::Section& CheckpointReader::section(const std::string& name,
                                                           std::uint8_t type) const {
  const auto it = sections_.find(name);
  if (it == sections_.end()) {
    throw Error("checkpoint: " + path_.string() + " has no section '" + name + "'");
  }
  const bool scalar_array_pair =
      (it->second.type == kTypeInt && type == kTypeInts) ||
      (it->second.type == kTypeDouble && type == kTypeDoubles);
  if (it->second.type != type && !scalar_array_pair) {
    throw Error("checkpoint: section '" + name + "' has a different type in " +
                path_.string());
  }
  return it->second;
}

std::int64_t CheckpointReader::get_int(const std::string& name) const {
  const Section& s = section(name, kTypeInt);
  require(s.ints.size() == 1, "checkpoint: section '" + name + "' is not a scalar");
  return s.ints[0];
}

double CheckpointReader::get_double(const std::string& name) const {
  const Section& s = section(name, kTypeDouble);
  require(s.doubles.size() == 1, "checkpoint: section '" + name + "' is not a scalar");
  return s.doubles[0];
}

std::vector<std::int64_t> CheckpointReader::get_ints(const std::string& name) const {
  return section(name, kTypeInts).ints;
}

Eigen::VectorXd CheckpointReader::get_doubles(const std::string& name) const {
  const Section& s = section(name, kTypeDoubles);
  Eigen::VectorXd v(static_cast<Eigen::Index>(s.doubles.size()));
  for (std::size_t i = 0; i < s.doubles.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = s.doubles[i];
  }
  return v;
}

std::string CheckpointReader::get_string(const std::string& name) const {
  return section(name, kTypeString).text;
}

}  // namespace cfaug
