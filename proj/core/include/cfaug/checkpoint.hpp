#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cfaug/error.hpp"

namespace cfaug {

// Small versioned binary container for model checkpoints: a magic tag, a
// hash of the section layout (names and types), and named sections holding
// integers, doubles, arrays, or strings. The hash guards against reading a
// checkpoint written by a structurally different model.
class CheckpointWriter {
 public:
  void put_int(const std::string& name, std::int64_t value);
  void put_double(const std::string& name, double value);
  void put_ints(const std::string& name, const std::vector<std::int64_t>& values);
  void put_doubles(const std::string& name, const Eigen::VectorXd& values);
  void put_doubles(const std::string& name, const std::vector<double>& values);
  void put_string(const std::string& name, const std::string& value);

  void write(const std::filesystem::path& path) const;

 private:
  struct Section {
    std::string name;
    std::uint8_t type = 0;
    std::vector<std::int64_t> ints;
    std::vector<double> doubles;
    std::string text;
  };
  void add(Section section);

  std::vector<Section> sections_;
};

class CheckpointReader {
 public:
  explicit CheckpointReader(const std::filesystem::path& path);

  bool has(const std::string& name) const;
  std::int64_t get_int(const std::string& name) const;
  double get_double(const std::string& name) const;
  std::vector<std::int64_t> get_ints(const std::string& name) const;
  Eigen::VectorXd get_doubles(const std::string& name) const;
  std::string get_string(const std::string& name) const;

 private:
  struct Section {
    std::uint8_t type = 0;
    std::vector<std::int64_t> ints;
    std::vector<double> doubles;
    std::string text;
  };
  const Section& section(const std::string& name, std::uint8_t type) const;

  std::map<std::string, Section> sections_;
  std::filesystem::path path_;
};

}  // namespace cfaug
