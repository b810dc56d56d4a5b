// Config parsing (strict keys), frozen-config serialization, and the run
// directory layout: config.json, metrics.csv, checkpoint.final, attn/*.csv.
#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "parity/train.hpp"

namespace parity {

// Throws std::invalid_argument naming the offending key on anything unknown.
TrainConfig parse_train_config(const nlohmann::json& j);
// Every field materialized, defaults included.
nlohmann::json frozen_train_config(const TrainConfig& cfg);

struct SweepSpec {
  TrainConfig base;
  std::vector<int> k_values;
  std::vector<double> lr_grid;
  int n_seeds = 1;
  bool cot_both = true;
};
SweepSpec parse_sweep_config(const nlohmann::json& j);
nlohmann::json frozen_sweep_config(const SweepSpec& spec);

ThreeStepConfig parse_three_step_config(const nlohmann::json& j);
nlohmann::json frozen_three_step_config(const ThreeStepConfig& cfg);

// header: step,samples_seen,loss,tf_acc,ar_acc,min_entropy,ent_L{l}H{h}...
void write_metrics_csv(const RunRecord& record, int layers, int heads,
                       const std::filesystem::path& path);

// sweep rows: n,k,cot,lr,seed,samples_at_perfect,halt_reason (empty samples
// field when the run never reached perfect accuracy)
void write_sweep_csv(const SweepResult& result, const std::filesystem::path& path);
// summary rows: n,k,cot,best_lr,best_median_samples
void write_sweep_summary_csv(const SweepResult& result, int n,
                             const std::filesystem::path& path);

// Populates <dir>/{config.json, metrics.csv, checkpoint.final, attn/...}.
void write_run_directory(const std::filesystem::path& dir, const nlohmann::json& frozen_config,
                         const TrainResult& result);

nlohmann::json report_json(const VerificationReport& report);

}  // namespace parity
