#include "parity/checkpoint.hpp"

#include <cstring>
#include <stdexcept>

namespace parity {

namespace {
constexpr char kMagic[8] = {'P', 'L', 'A', 'B', 'C', 'K', 'P', '1'};

void write_u64(std::ofstream& out, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

std::uint64_t read_u64(std::ifstream& in) {
  char buf[8];
  in.read(buf, 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
  return v;
}
}  // namespace

CheckpointWriter::CheckpointWriter(const std::filesystem::path& path, const nlohmann::json& header)
    : out_(path, std::ios::binary), path_(path) {
  if (!out_) throw std::runtime_error("cannot open for writing: " + path.string());
  out_.write(kMagic, sizeof(kMagic));
  const std::string h = header.dump();
  write_u64(out_, h.size());
  out_.write(h.data(), static_cast<std::streamsize>(h.size()));
}

void CheckpointWriter::write_tensor(const std::string& name, std::span<const double> data) {
  write_u64(out_, name.size());
  out_.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u64(out_, data.size());
  // Stored little-endian; this build targets little-endian hosts.
  out_.write(reinterpret_cast<const char*>(data.data()),
             static_cast<std::streamsize>(data.size() * sizeof(double)));
}

void CheckpointWriter::finish() {
  if (finished_) return;
  finished_ = true;
  write_u64(out_, 0);  // terminator
  out_.flush();
  if (!out_) throw std::runtime_error("write failed: " + path_.string());
}

CheckpointReader::CheckpointReader(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path.string());
  const std::uint64_t header_len = read_u64(in);
  std::string h(header_len, '\0');
  in.read(h.data(), static_cast<std::streamsize>(header_len));
  header_ = nlohmann::json::parse(h);
  while (true) {
    const std::uint64_t name_len = read_u64(in);
    if (!in) throw std::runtime_error("truncated checkpoint: " + path.string());
    if (name_len == 0) break;
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    const std::uint64_t count = read_u64(in);
    std::vector<double> data(count);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw std::runtime_error("truncated checkpoint: " + path.string());
    tensors_[name] = std::move(data);
  }
}

std::size_t CheckpointReader::tensor_size(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::runtime_error("checkpoint has no tensor " + name);
  return it->second.size();
}

void CheckpointReader::read_tensor(const std::string& name, std::span<double> out) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::runtime_error("checkpoint has no tensor " + name);
  if (it->second.size() != out.size())
    throw std::runtime_error("tensor " + name + " has size " + std::to_string(it->second.size()) +
                             ", expected " + std::to_string(out.size()));
  std::memcpy(out.data(), it->second.data(), out.size() * sizeof(double));
}

}  // namespace parity
