// Single-file binary checkpoint container: a JSON header followed by named
// raw double tensors. Loads back bit-identically.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace parity {

class CheckpointWriter {
 public:
  CheckpointWriter(const std::filesystem::path& path, const nlohmann::json& header);
  void write_tensor(const std::string& name, std::span<const double> data);
  void finish();

 private:
  std::ofstream out_;
  std::filesystem::path path_;
  bool finished_ = false;
};

class CheckpointReader {
 public:
  explicit CheckpointReader(const std::filesystem::path& path);
  const nlohmann::json& header() const { return header_; }
  std::size_t tensor_size(const std::string& name) const;
  void read_tensor(const std::string& name, std::span<double> out) const;

 private:
  nlohmann::json header_;
  std::map<std::string, std::vector<double>> tensors_;
};

}  // namespace parity
