#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>

#include "bgr/mlp.hpp"
#include "bgr/rng.hpp"

namespace bgr {

enum class Split { train, val, test };

struct TaskDataset {
  int task_id = 0;
  Tensor x;  // [N x d], values in [0,1]
  Tensor y;  // one-hot [N x C]
  Split split = Split::train;
  std::map<int, int> class_map;  // original label -> head-local index

  std::size_t size() const { return x.rows(); }
  std::size_t classes() const { return y.cols(); }
  void validate() const;
};

struct TaskTriple {
  TaskDataset train;
  TaskDataset val;
  TaskDataset test;
};

struct TaskStream {
  std::vector<TaskTriple> tasks;
  bool shared_head = false;

  int head_for_task(int task_id) const { return shared_head ? 0 : task_id; }
  std::size_t input_dim() const;
  // head map for the MLP: one head per task, or a single shared head
  MlpArchitecture architecture(std::vector<std::size_t> hidden_dims) const;
  void validate() const;
};

// IDX container parsing. Magic 0x803 (3-D ubyte images) scales bytes to [0,1]
// by /255; magic 0x801 (1-D ubyte labels) keeps raw values.
Tensor load_idx(const std::string& path);
// Same formats, no scaling: bytes come back verbatim as doubles.
Tensor load_idx_raw(const std::string& path);
// Inverse of load_idx_raw for rank-1 and rank-3 tensors of integers in [0,255].
void save_idx(const Tensor& t, const std::string& path);

// Flat [N x d] images plus raw integer labels [N].
struct RawDataset {
  Tensor x;
  Tensor labels;
};

// Flattens [N x h x w] images (already scaled) next to their label vector.
RawDataset flatten_images(const Tensor& images, const Tensor& labels);

RawDataset load_idx_pair(const std::string& images_path, const std::string& labels_path);

// Five binary tasks 0/1, 2/3, ... by default. Validation is a seeded 10%
// holdout from train. shared_head collapses every task onto head 0.
TaskStream build_split_stream(const RawDataset& train, const RawDataset& test,
                              const std::vector<std::pair<int, int>>& pairs,
                              double val_fraction = 0.1, std::uint64_t seed = 0,
                              bool shared_head = false);

// T tasks over the same images under fixed seeded pixel permutations; task 1
// is the identity. train_cap > 0 subsamples each task's train split (seeded)
// for reduced-scale runs.
TaskStream build_permuted_stream(const RawDataset& train, const RawDataset& test,
                                 std::size_t T, std::uint64_t seed,
                                 double val_fraction = 0.1,
                                 std::size_t train_cap = 0);

}  // namespace bgr
