// Parity task definition plus sequence generation and validation, with and
// without the chain of intermediate XOR tokens.
//
// Positions are 1-based in the public data model and in all file formats:
// bits[1..n] are the input, bits[n+1] = 0 is the separator, then either the
// answer bit (no chain, length n+2) or k running-XOR tokens ending in the
// answer (length n+k+1).
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "parity/rng.hpp"

namespace parity {

struct ParityTask {
  int n = 0;                  // number of input bits
  int k = 0;                  // number of secret indices
  std::vector<int> secret;    // sorted, distinct, 1-based indices in [1, n]
  std::vector<int> order;     // processing order: order[i] is the index
                              // consumed at chain step i (permutation of secret)

  void validate() const;  // throws std::invalid_argument on a broken invariant
};

enum class Layout : std::uint8_t {
  kNoCot,      // length n+2: input, separator, answer
  kCot,        // length n+k+1: input, separator, k chain tokens
  kInputOnly,  // length n+1: input, separator
};

struct BitSequence {
  std::vector<std::uint8_t> bits;  // bits[0] unused so indexing matches 1-based positions
  Layout layout = Layout::kNoCot;
  int n = 0;
  int k = 0;

  int length() const { return static_cast<int>(bits.size()) - 1; }
  std::uint8_t at(int pos) const { return bits[static_cast<std::size_t>(pos)]; }  // 1-based
  std::span<const std::uint8_t> input() const { return {bits.data() + 1, static_cast<std::size_t>(n)}; }
};

int expected_length(Layout layout, int n, int k);

// Draws k distinct indices uniformly from [1, n]. Processing order is
// ascending unless random_order is set, in which case it is a uniform
// permutation of the secret set.
ParityTask sample_secret_set(int n, int k, RngStream& rng, bool random_order = false);

// XOR of input_bits over the secret indices. input_bits is 0-based storage of
// positions 1..n and must have length n.
int parity_eval(const ParityTask& task, std::span<const std::uint8_t> input_bits);

// Deterministic completion of a given input: separator, then chain tokens
// (cot) or the answer bit (no cot).
BitSequence make_sequence(const ParityTask& task, std::span<const std::uint8_t> input_bits,
                          bool cot);

// make_sequence over i.i.d. uniform input bits.
BitSequence gen_sequence(const ParityTask& task, bool cot, RngStream& rng);

// True iff the separator is 0 and every chain token / the answer is consistent
// with the task. Never throws on content mismatch; layout mismatch is false.
bool verify_sequence(const ParityTask& task, const BitSequence& seq);

// Calls fn once per input prefix in lexicographic order (bit 1 is the most
// significant). Guarded at n <= 24.
void enumerate_inputs(int n, const std::function<void(std::span<const std::uint8_t>)>& fn);

struct DatasetMeta {
  int n = 0;
  int k = 0;
  std::vector<int> secret;
  std::vector<int> order;
  bool cot = false;
  std::uint64_t count = 0;
  std::uint64_t seed = 0;
};

// Sequence file: one line per sequence, '0'/'1' characters, newline
// terminated. Metadata lives in a JSON sidecar at path + ".meta.json".
void write_dataset(const std::filesystem::path& path, const DatasetMeta& meta,
                   const std::vector<BitSequence>& sequences);
std::vector<BitSequence> read_dataset(const std::filesystem::path& path, DatasetMeta* meta_out);
std::filesystem::path sidecar_path(const std::filesystem::path& dataset_path);

}  // namespace parity
