#include "parity/data.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace parity {

void ParityTask::validate() const {
  if (n < 1) throw std::invalid_argument("task: n must be positive");
  if (k < 1 || k > n) throw std::invalid_argument("task: need 1 <= k <= n");
  if (static_cast<int>(secret.size()) != k) throw std::invalid_argument("task: |secret| != k");
  if (!std::is_sorted(secret.begin(), secret.end()))
    throw std::invalid_argument("task: secret not sorted");
  for (int j : secret)
    if (j < 1 || j > n) throw std::invalid_argument("task: secret index out of [1, n]");
  if (std::adjacent_find(secret.begin(), secret.end()) != secret.end())
    throw std::invalid_argument("task: duplicate secret index");
  std::vector<int> sorted_order = order;
  std::sort(sorted_order.begin(), sorted_order.end());
  if (sorted_order != secret) throw std::invalid_argument("task: order is not a permutation of secret");
}

int expected_length(Layout layout, int n, int k) {
  switch (layout) {
    case Layout::kNoCot: return n + 2;
    case Layout::kCot: return n + k + 1;
    case Layout::kInputOnly: return n + 1;
  }
  throw std::invalid_argument("unknown layout");
}

ParityTask sample_secret_set(int n, int k, RngStream& rng, bool random_order) {
  if (n < 1 || k < 1 || k > n)
    throw std::invalid_argument("sample_secret_set: need 1 <= k <= n, got n=" +
                                std::to_string(n) + " k=" + std::to_string(k));
  // Partial Fisher-Yates over [1, n].
  std::vector<int> pool(n);
  std::iota(pool.begin(), pool.end(), 1);
  for (int i = 0; i < k; ++i) {
    const auto j = i + static_cast<int>(rng.next_index(static_cast<std::uint64_t>(n - i)));
    std::swap(pool[i], pool[j]);
  }
  ParityTask task;
  task.n = n;
  task.k = k;
  task.secret.assign(pool.begin(), pool.begin() + k);
  std::sort(task.secret.begin(), task.secret.end());
  task.order = task.secret;
  if (random_order) {
    for (int i = k - 1; i > 0; --i) {
      const auto j = static_cast<int>(rng.next_index(static_cast<std::uint64_t>(i + 1)));
      std::swap(task.order[i], task.order[j]);
    }
  }
  return task;
}

int parity_eval(const ParityTask& task, std::span<const std::uint8_t> input_bits) {
  if (static_cast<int>(input_bits.size()) != task.n)
    throw std::invalid_argument("parity_eval: input length " + std::to_string(input_bits.size()) +
                                " != n=" + std::to_string(task.n));
  int acc = 0;
  for (int j : task.secret) acc ^= input_bits[static_cast<std::size_t>(j - 1)];
  return acc;
}

BitSequence make_sequence(const ParityTask& task, std::span<const std::uint8_t> input_bits,
                          bool cot) {
  task.validate();
  if (static_cast<int>(input_bits.size()) != task.n)
    throw std::invalid_argument("make_sequence: input length != n");
  BitSequence seq;
  seq.layout = cot ? Layout::kCot : Layout::kNoCot;
  seq.n = task.n;
  seq.k = task.k;
  const int len = expected_length(seq.layout, task.n, task.k);
  seq.bits.resize(static_cast<std::size_t>(len) + 1, 0);
  for (int i = 1; i <= task.n; ++i) seq.bits[i] = input_bits[i - 1] ? 1 : 0;
  seq.bits[task.n + 1] = 0;  // separator
  if (cot) {
    // bits[i+1] = bits[i] ^ bits[order step], telescoping to the parity.
    for (int i = task.n + 1; i <= task.n + task.k; ++i)
      seq.bits[i + 1] = seq.bits[i] ^ seq.bits[task.order[i - task.n - 1]];
  } else {
    seq.bits[task.n + 2] = static_cast<std::uint8_t>(parity_eval(task, input_bits));
  }
  return seq;
}

BitSequence gen_sequence(const ParityTask& task, bool cot, RngStream& rng) {
  std::vector<std::uint8_t> input(static_cast<std::size_t>(task.n));
  for (auto& b : input) b = static_cast<std::uint8_t>(rng.next_bit());
  return make_sequence(task, input, cot);
}

bool verify_sequence(const ParityTask& task, const BitSequence& seq) {
  if (seq.n != task.n) return false;
  if (seq.length() != expected_length(seq.layout, task.n, task.k)) return false;
  for (std::size_t i = 1; i < seq.bits.size(); ++i)
    if (seq.bits[i] != 0 && seq.bits[i] != 1) return false;
  if (seq.at(task.n + 1) != 0) return false;
  switch (seq.layout) {
    case Layout::kInputOnly:
      return true;
    case Layout::kNoCot:
      return seq.at(task.n + 2) == parity_eval(task, seq.input());
    case Layout::kCot:
      for (int i = task.n + 1; i <= task.n + task.k; ++i)
        if (seq.at(i + 1) != (seq.at(i) ^ seq.at(task.order[i - task.n - 1]))) return false;
      return true;
  }
  return false;
}

void enumerate_inputs(int n, const std::function<void(std::span<const std::uint8_t>)>& fn) {
  if (n < 1) throw std::invalid_argument("enumerate_inputs: n must be positive");
  if (n > 24)
    throw std::invalid_argument("enumerate_inputs: refusing n=" + std::to_string(n) +
                                " (limit is n <= 24, i.e. 2^24 prefixes)");
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(n), 0);
  const std::uint64_t total = 1ull << n;
  for (std::uint64_t x = 0; x < total; ++x) {
    for (int i = 0; i < n; ++i) bits[i] = static_cast<std::uint8_t>((x >> (n - 1 - i)) & 1);
    fn(bits);
  }
}

std::filesystem::path sidecar_path(const std::filesystem::path& dataset_path) {
  auto p = dataset_path;
  p += ".meta.json";
  return p;
}

void write_dataset(const std::filesystem::path& path, const DatasetMeta& meta,
                   const std::vector<BitSequence>& sequences) {
  if (meta.count < 1) throw std::invalid_argument("write_dataset: count must be >= 1");
  if (meta.count != sequences.size())
    throw std::invalid_argument("write_dataset: count does not match sequence list");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  for (const auto& seq : sequences) {
    for (int i = 1; i <= seq.length(); ++i) out << (seq.at(i) ? '1' : '0');
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());

  nlohmann::json j;
  j["format_version"] = 1;
  j["n"] = meta.n;
  j["k"] = meta.k;
  j["secret"] = meta.secret;
  j["order"] = meta.order;
  j["cot"] = meta.cot;
  j["count"] = meta.count;
  j["seed"] = meta.seed;
  std::ofstream side(sidecar_path(path));
  if (!side) throw std::runtime_error("cannot open for writing: " + sidecar_path(path).string());
  side << j.dump(2) << '\n';
  if (!side) throw std::runtime_error("write failed: " + sidecar_path(path).string());
}

std::vector<BitSequence> read_dataset(const std::filesystem::path& path, DatasetMeta* meta_out) {
  std::ifstream side(sidecar_path(path));
  if (!side) throw std::runtime_error("cannot open for reading: " + sidecar_path(path).string());
  nlohmann::json j = nlohmann::json::parse(side);
  DatasetMeta meta;
  meta.n = j.at("n").get<int>();
  meta.k = j.at("k").get<int>();
  meta.secret = j.at("secret").get<std::vector<int>>();
  meta.order = j.at("order").get<std::vector<int>>();
  meta.cot = j.at("cot").get<bool>();
  meta.count = j.at("count").get<std::uint64_t>();
  meta.seed = j.at("seed").get<std::uint64_t>();

  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  std::vector<BitSequence> out;
  std::string line;
  const int len = expected_length(meta.cot ? Layout::kCot : Layout::kNoCot, meta.n, meta.k);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (static_cast<int>(line.size()) != len)
      throw std::runtime_error("bad sequence length in " + path.string());
    BitSequence seq;
    seq.layout = meta.cot ? Layout::kCot : Layout::kNoCot;
    seq.n = meta.n;
    seq.k = meta.k;
    seq.bits.resize(line.size() + 1, 0);
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] != '0' && line[i] != '1')
        throw std::runtime_error("bad character in " + path.string());
      seq.bits[i + 1] = line[i] == '1' ? 1 : 0;
    }
    out.push_back(std::move(seq));
  }
  if (out.size() != meta.count) throw std::runtime_error("count mismatch in " + path.string());
  if (meta_out) *meta_out = meta;
  return out;
}

}  // namespace parity
