#pragma once

#include <string>

#include "bgr/mlp.hpp"

namespace bgr {

// Lower-triangular record: cell(t, j) = accuracy on task j after training
// task t, both 1-based.
struct AccuracyMatrix {
  std::vector<std::vector<double>> rows;  // rows[t-1] has t entries

  std::size_t tasks() const { return rows.size(); }
  void append_row(std::vector<double> row);
  double at(std::size_t t, std::size_t j) const;
};

double row_average(const AccuracyMatrix& m, std::size_t t);

struct SaliencyResult {
  Tensor attributions;         // [input_dim]
  std::vector<bool> top_mask;  // exactly ceil(q * input_dim) marked
};

// Integrated gradients on the pre-softmax logit of class_idx, right-endpoint
// Riemann sum with M points from baseline to x.
SaliencyResult integrated_gradients(const ParamVector& params,
                                    const MlpArchitecture& arch, const Tensor& x,
                                    int task, std::size_t class_idx,
                                    const Tensor& baseline, std::size_t M = 50,
                                    double top_fraction = 0.2);

// Binary PGM (P5), maximum value 255, pixels round(v * 255).
void export_pgm(const Tensor& image, const std::string& path);
Tensor load_pgm(const std::string& path);

struct RunMetadata {
  std::string config_json;  // serialized run configuration, already a JSON text
  std::uint64_t seed = 0;
  std::vector<double> task_seconds;
};

// metrics.csv (after_task, eval_task, accuracy) and run.json (config, seed,
// row averages, wall clock) under out_dir.
void emit_metrics(const AccuracyMatrix& m, const RunMetadata& meta,
                  const std::string& out_dir);

}  // namespace bgr
