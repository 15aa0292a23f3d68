#include "bgr/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

namespace bgr {
namespace {

constexpr std::uint32_t kMagicImages = 0x00000803;  // 3-D unsigned bytes
constexpr std::uint32_t kMagicLabels = 0x00000801;  // 1-D unsigned bytes

std::uint32_t read_be32(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("short read");
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<char*>(b), 4);
}

Tensor load_idx_impl(const std::string& path, bool scale_images) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  const std::uint32_t magic = read_be32(in);
  std::size_t rank;
  if (magic == kMagicImages)
    rank = 3;
  else if (magic == kMagicLabels)
    rank = 1;
  else
    throw std::runtime_error("bad magic");

  std::vector<std::size_t> shape(rank);
  for (auto& d : shape) d = read_be32(in);
  const std::size_t total = shape_product(shape);
  std::vector<unsigned char> bytes(total);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(total));
  if (static_cast<std::size_t>(in.gcount()) != total)
    throw std::runtime_error("short read");

  Tensor t = Tensor::zeros(std::move(shape));
  const double scale = (scale_images && magic == kMagicImages) ? 1.0 / 255.0 : 1.0;
  for (std::size_t i = 0; i < total; ++i) t.data[i] = scale * bytes[i];
  return t;
}

}  // namespace

Tensor load_idx(const std::string& path) { return load_idx_impl(path, true); }
Tensor load_idx_raw(const std::string& path) { return load_idx_impl(path, false); }

void save_idx(const Tensor& t, const std::string& path) {
  if (t.rank() != 1 && t.rank() != 3)
    throw std::runtime_error("dimension mismatch: idx rank must be 1 or 3");
  for (double v : t.data)
    if (v < 0.0 || v > 255.0 || v != std::floor(v))
      throw std::runtime_error("idx values must be integers in [0,255]");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  write_be32(out, t.rank() == 3 ? kMagicImages : kMagicLabels);
  for (std::size_t d : t.shape) write_be32(out, static_cast<std::uint32_t>(d));
  std::vector<unsigned char> bytes(t.data.size());
  for (std::size_t i = 0; i < bytes.size(); ++i)
    bytes[i] = static_cast<unsigned char>(t.data[i]);
  out.write(reinterpret_cast<char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

RawDataset flatten_images(const Tensor& images, const Tensor& labels) {
  if (images.rank() != 3) throw std::runtime_error("dimension mismatch: images rank");
  if (labels.rank() != 1 || labels.shape[0] != images.shape[0])
    throw std::runtime_error("dimension mismatch: labels count");
  RawDataset d;
  d.x = Tensor({images.shape[0], images.shape[1] * images.shape[2]},
               images.data);
  d.labels = labels;
  return d;
}

RawDataset load_idx_pair(const std::string& images_path, const std::string& labels_path) {
  return flatten_images(load_idx(images_path), load_idx(labels_path));
}

void TaskDataset::validate() const {
  if (x.rank() != 2 || y.rank() != 2 || x.rows() != y.rows())
    throw std::runtime_error("dimension mismatch: dataset tensors");
  for (double v : x.data)
    if (v < 0.0 || v > 1.0) throw std::runtime_error("pixels must lie in [0,1]");
  if (!is_one_hot(y)) throw std::runtime_error("labels must be one-hot");
}

std::size_t TaskStream::input_dim() const {
  if (tasks.empty()) throw std::runtime_error("empty stream");
  return tasks[0].train.x.cols();
}

MlpArchitecture TaskStream::architecture(std::vector<std::size_t> hidden_dims) const {
  validate();
  MlpArchitecture arch;
  arch.input_dim = input_dim();
  arch.hidden_dims = std::move(hidden_dims);
  for (const auto& t : tasks) {
    const int head = head_for_task(t.train.task_id);
    const std::size_t classes = t.train.classes();
    auto it = arch.heads.find(head);
    if (it == arch.heads.end())
      arch.heads[head] = classes;
    else if (it->second != classes)
      throw std::runtime_error("dimension mismatch: shared head class counts differ");
  }
  return arch;
}

void TaskStream::validate() const {
  if (tasks.empty()) throw std::runtime_error("empty stream");
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (tasks[i].train.task_id != id || tasks[i].val.task_id != id ||
        tasks[i].test.task_id != id)
      throw std::runtime_error("task ids must be 1..T in order");
    tasks[i].train.validate();
    tasks[i].val.validate();
    tasks[i].test.validate();
  }
}

namespace {

TaskDataset gather(const RawDataset& src, const std::vector<std::size_t>& idx,
                   int task_id, const std::map<int, int>& class_map,
                   std::size_t classes, Split split) {
  const std::size_t d = src.x.cols();
  TaskDataset out;
  out.task_id = task_id;
  out.split = split;
  out.class_map = class_map;
  out.x = Tensor::zeros({idx.size(), d});
  out.y = Tensor::zeros({idx.size(), classes});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const std::size_t i = idx[r];
    std::copy(src.x.data.begin() + static_cast<std::ptrdiff_t>(i * d),
              src.x.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * d),
              out.x.data.begin() + static_cast<std::ptrdiff_t>(r * d));
    const int raw = static_cast<int>(src.labels.data[i]);
    out.y.at(r, static_cast<std::size_t>(class_map.at(raw))) = 1.0;
  }
  return out;
}

std::vector<std::size_t> label_indices(const RawDataset& src, int a, int b) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < src.labels.data.size(); ++i) {
    const int l = static_cast<int>(src.labels.data[i]);
    if (l == a || l == b) idx.push_back(i);
  }
  return idx;
}

}  // namespace

TaskStream build_split_stream(const RawDataset& train, const RawDataset& test,
                              const std::vector<std::pair<int, int>>& pairs,
                              double val_fraction, std::uint64_t seed,
                              bool shared_head) {
  if (pairs.empty()) throw std::runtime_error("empty stream");
  if (val_fraction < 0.0 || val_fraction >= 1.0)
    throw std::runtime_error("val_fraction must lie in [0,1)");
  std::set<int> seen;
  for (const auto& [a, b] : pairs) {
    if (a == b || !seen.insert(a).second || !seen.insert(b).second)
      throw std::runtime_error("pairs overlap");
  }

  TaskStream stream;
  stream.shared_head = shared_head;
  Rng rng(seed);
  int task_id = 0;
  for (const auto& [a, b] : pairs) {
    ++task_id;
    auto train_idx = label_indices(train, a, b);
    auto test_idx = label_indices(test, a, b);
    if (train_idx.empty() || test_idx.empty())
      throw std::runtime_error("label absent from dataset");

    Rng task_rng = rng.fork(static_cast<std::uint64_t>(task_id));
    std::shuffle(train_idx.begin(), train_idx.end(), task_rng.engine());
    // val is never empty: at least one example is held out
    const std::size_t n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(val_fraction * static_cast<double>(train_idx.size())));
    if (n_val >= train_idx.size()) throw std::runtime_error("empty train split");
    std::vector<std::size_t> val_idx(train_idx.end() - static_cast<std::ptrdiff_t>(n_val),
                                     train_idx.end());
    train_idx.resize(train_idx.size() - n_val);

    const std::map<int, int> cmap{{a, 0}, {b, 1}};
    TaskTriple triple;
    triple.train = gather(train, train_idx, task_id, cmap, 2, Split::train);
    triple.val = gather(train, val_idx, task_id, cmap, 2, Split::val);
    triple.test = gather(test, test_idx, task_id, cmap, 2, Split::test);
    stream.tasks.push_back(std::move(triple));
  }
  stream.validate();
  return stream;
}

TaskStream build_permuted_stream(const RawDataset& train, const RawDataset& test,
                                 std::size_t T, std::uint64_t seed,
                                 double val_fraction, std::size_t train_cap) {
  if (T < 1) throw std::runtime_error("empty stream");
  const std::size_t d = train.x.cols();

  std::map<int, int> cmap;
  std::size_t classes = 0;
  for (double v : train.labels.data)
    classes = std::max(classes, static_cast<std::size_t>(v) + 1);
  for (std::size_t c = 0; c < classes; ++c) cmap[static_cast<int>(c)] = static_cast<int>(c);

  Rng rng(seed);
  // seeded base holdout, shared by all tasks
  std::vector<std::size_t> base_idx(train.x.rows());
  std::iota(base_idx.begin(), base_idx.end(), 0);
  Rng holdout_rng = rng.fork(0);
  std::shuffle(base_idx.begin(), base_idx.end(), holdout_rng.engine());
  const std::size_t n_val = std::max<std::size_t>(
      1, static_cast<std::size_t>(val_fraction * static_cast<double>(base_idx.size())));
  if (n_val >= base_idx.size()) throw std::runtime_error("empty train split");
  std::vector<std::size_t> val_idx(base_idx.end() - static_cast<std::ptrdiff_t>(n_val),
                                   base_idx.end());
  base_idx.resize(base_idx.size() - n_val);

  std::vector<std::size_t> test_idx(test.x.rows());
  std::iota(test_idx.begin(), test_idx.end(), 0);

  TaskStream stream;
  stream.shared_head = true;
  for (std::size_t t = 1; t <= T; ++t) {
    std::vector<std::size_t> perm(d);
    std::iota(perm.begin(), perm.end(), 0);
    if (t > 1) {
      Rng perm_rng = rng.fork(1000 + t);
      std::shuffle(perm.begin(), perm.end(), perm_rng.engine());
    }

    std::vector<std::size_t> task_train = base_idx;
    if (train_cap > 0 && train_cap < task_train.size()) {
      Rng cap_rng = rng.fork(2000 + t);
      std::shuffle(task_train.begin(), task_train.end(), cap_rng.engine());
      task_train.resize(train_cap);
    }

    auto permute = [&](TaskDataset ds) {
      if (t == 1) return ds;
      Tensor px = Tensor::zeros(ds.x.shape);
      for (std::size_t r = 0; r < ds.x.rows(); ++r)
        for (std::size_t c = 0; c < d; ++c) px.at(r, c) = ds.x.at(r, perm[c]);
      ds.x = std::move(px);
      return ds;
    };

    TaskTriple triple;
    const int id = static_cast<int>(t);
    triple.train = permute(gather(train, task_train, id, cmap, classes, Split::train));
    triple.val = permute(gather(train, val_idx, id, cmap, classes, Split::val));
    triple.test = permute(gather(test, test_idx, id, cmap, classes, Split::test));
    stream.tasks.push_back(std::move(triple));
  }
  stream.validate();
  return stream;
}

}  // namespace bgr
