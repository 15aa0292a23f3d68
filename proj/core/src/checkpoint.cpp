#include "bgr/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace bgr {
namespace {

constexpr char kMagic[8] = {'B', 'G', 'R', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

[[noreturn]] void corrupt(const std::string& why) {
  throw std::runtime_error("corrupt checkpoint: " + why);
}

// little-endian fixed-width scalar I/O
void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void put_i32(std::ostream& out, std::int32_t v) {
  put_u64(out, static_cast<std::uint64_t>(static_cast<std::uint32_t>(v)));
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) corrupt("short read");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

std::int32_t get_i32(std::istream& in) {
  return static_cast<std::int32_t>(static_cast<std::uint32_t>(get_u64(in)));
}

double get_f64(std::istream& in) {
  std::uint64_t bits = get_u64(in);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

void put_values(std::ostream& out, const std::vector<double>& v) {
  put_u64(out, v.size());
  for (double x : v) put_f64(out, x);
}

std::vector<double> get_values(std::istream& in, std::size_t expected) {
  const std::uint64_t n = get_u64(in);
  if (n != expected) corrupt("parameter block size mismatch");
  std::vector<double> v(n);
  for (auto& x : v) x = get_f64(in);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainerState& state) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);

  out.write(kMagic, 8);
  put_u64(out, kVersion);
  put_u64(out, state.bayesian ? 1 : 0);

  put_u64(out, state.arch.input_dim);
  put_u64(out, state.arch.hidden_dims.size());
  for (std::size_t h : state.arch.hidden_dims) put_u64(out, h);
  put_u64(out, state.arch.heads.size());
  for (const auto& [head, classes] : state.arch.heads) {
    put_i32(out, head);
    put_u64(out, classes);
  }

  put_u64(out, state.task_head.size());
  for (const auto& [task, head] : state.task_head) {
    put_i32(out, task);
    put_i32(out, head);
  }

  put_u64(out, state.trained_tasks.size());
  for (int t : state.trained_tasks) put_i32(out, t);

  if (state.bayesian) {
    put_values(out, state.posterior.mu.values);
    put_values(out, state.posterior.rho.values);
    put_values(out, state.previous_posterior.mu.values);
    put_values(out, state.previous_posterior.rho.values);
  } else {
    put_values(out, state.point.values);
    put_values(out, state.previous_point.values);
  }

  put_u64(out, state.ewc_anchors.size());
  for (const auto& [fisher, anchor] : state.ewc_anchors) {
    put_values(out, fisher.values.values);
    put_values(out, anchor.values);
  }

  put_u64(out, state.buffer.capacity());
  put_u64(out, state.buffer.x_dim());
  put_u64(out, state.buffer.y_dim());

  out.flush();
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
}

TrainerState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);

  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) corrupt("bad magic");
  if (get_u64(in) != kVersion) corrupt("unsupported version");

  TrainerState st;
  st.bayesian = get_u64(in) != 0;

  st.arch.input_dim = get_u64(in);
  const std::uint64_t n_hidden = get_u64(in);
  if (n_hidden > 64) corrupt("implausible hidden layer count");
  for (std::uint64_t i = 0; i < n_hidden; ++i)
    st.arch.hidden_dims.push_back(get_u64(in));
  const std::uint64_t n_heads = get_u64(in);
  if (n_heads > 4096) corrupt("implausible head count");
  for (std::uint64_t i = 0; i < n_heads; ++i) {
    const int head = get_i32(in);
    st.arch.heads[head] = get_u64(in);
  }
  try {
    st.arch.validate();
  } catch (const std::exception& e) {
    corrupt(e.what());
  }

  const std::uint64_t n_map = get_u64(in);
  if (n_map > 1u << 20) corrupt("implausible task map");
  for (std::uint64_t i = 0; i < n_map; ++i) {
    const int task = get_i32(in);
    const int head = get_i32(in);
    if (!st.arch.heads.count(head)) corrupt("task mapped to unknown head");
    st.task_head[task] = head;
  }

  const std::uint64_t n_trained = get_u64(in);
  if (n_trained > n_map) corrupt("trained task list longer than task map");
  for (std::uint64_t i = 0; i < n_trained; ++i) {
    const int task = get_i32(in);
    if (!st.task_head.count(task)) corrupt("trained task missing from map");
    st.trained_tasks.push_back(task);
  }

  const auto layout = make_layout(st.arch);
  const std::size_t total = layout->total_size;
  auto read_params = [&]() {
    ParamVector v{get_values(in, total), layout};
    return v;
  };

  if (st.bayesian) {
    st.posterior.mu = read_params();
    st.posterior.rho = read_params();
    st.previous_posterior.mu = read_params();
    st.previous_posterior.rho = read_params();
    st.posterior.validate();
    st.previous_posterior.validate();
  } else {
    st.point = read_params();
    st.previous_point = read_params();
    st.point.require_layout(st.previous_point);
  }

  const std::uint64_t n_anchors = get_u64(in);
  if (n_anchors > n_map) corrupt("more EWC anchors than tasks");
  for (std::uint64_t i = 0; i < n_anchors; ++i) {
    FisherDiag f{read_params()};
    ParamVector anchor = read_params();
    st.ewc_anchors.emplace_back(std::move(f), std::move(anchor));
  }

  const std::uint64_t cap = get_u64(in);
  const std::uint64_t x_dim = get_u64(in);
  const std::uint64_t y_dim = get_u64(in);
  if (cap > 0) {
    if (x_dim != st.arch.input_dim) corrupt("buffer width mismatch");
    st.buffer = ReplayBuffer(cap, x_dim, y_dim);
  }

  in.peek();
  if (!in.eof()) corrupt("trailing bytes");
  return st;
}

}  // namespace bgr
