#include "bgr/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "bgr/ebm.hpp"
#include "json.hpp"

namespace bgr {

void AccuracyMatrix::append_row(std::vector<double> row) {
  if (row.size() != rows.size() + 1)
    throw std::runtime_error("dimension mismatch: accuracy row length");
  for (double v : row)
    if (v < 0.0 || v > 1.0) throw std::runtime_error("accuracy outside [0,1]");
  rows.push_back(std::move(row));
}

double AccuracyMatrix::at(std::size_t t, std::size_t j) const {
  if (t < 1 || t > rows.size() || j < 1 || j > t)
    throw std::runtime_error("accuracy cell out of range");
  return rows[t - 1][j - 1];
}

double row_average(const AccuracyMatrix& m, std::size_t t) {
  if (t < 1 || t > m.rows.size()) throw std::runtime_error("row out of range");
  const auto& row = m.rows[t - 1];
  return std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(row.size());
}

SaliencyResult integrated_gradients(const ParamVector& params,
                                    const MlpArchitecture& arch, const Tensor& x,
                                    int task, std::size_t class_idx,
                                    const Tensor& baseline, std::size_t M,
                                    double top_fraction) {
  if (M < 1) throw std::runtime_error("integrated gradients need M >= 1");
  if (x.rank() != 2 || x.rows() != 1 || x.cols() != arch.input_dim)
    throw std::runtime_error("dimension mismatch: saliency input");
  if (baseline.shape != x.shape)
    throw std::runtime_error("dimension mismatch: baseline shape");
  const std::size_t classes = arch.head_classes(task);
  if (class_idx >= classes) throw std::runtime_error("class index out of range");
  const std::size_t d = arch.input_dim;

  // right-endpoint points baseline + (m/M)(x - baseline), m = 1..M
  Tensor points = Tensor::zeros({M, d});
  for (std::size_t m = 1; m <= M; ++m) {
    const double a = static_cast<double>(m) / static_cast<double>(M);
    for (std::size_t c = 0; c < d; ++c)
      points.at(m - 1, c) = baseline.at(0, c) + a * (x.at(0, c) - baseline.at(0, c));
  }
  Tensor y = Tensor::zeros({M, classes});
  for (std::size_t m = 0; m < M; ++m) y.at(m, class_idx) = 1.0;
  Tensor grads = grad_input(params, arch, points, task, y);

  SaliencyResult out;
  out.attributions = Tensor::zeros({d});
  for (std::size_t c = 0; c < d; ++c) {
    double g = 0.0;
    for (std::size_t m = 0; m < M; ++m) g += grads.at(m, c);
    out.attributions.data[c] =
        (x.at(0, c) - baseline.at(0, c)) * g / static_cast<double>(M);
  }

  const auto k = static_cast<std::size_t>(
      std::ceil(top_fraction * static_cast<double>(d)));
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(out.attributions.data[a]) > std::abs(out.attributions.data[b]);
  });
  out.top_mask.assign(d, false);
  for (std::size_t i = 0; i < k && i < d; ++i) out.top_mask[order[i]] = true;
  return out;
}

void export_pgm(const Tensor& image, const std::string& path) {
  if (image.rank() != 2) throw std::runtime_error("dimension mismatch: pgm image rank");
  for (double v : image.data)
    if (!(v >= 0.0 && v <= 1.0)) throw std::runtime_error("pgm values must lie in [0,1]");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "P5\n" << image.cols() << " " << image.rows() << "\n255\n";
  std::vector<unsigned char> bytes(image.data.size());
  for (std::size_t i = 0; i < bytes.size(); ++i)
    bytes[i] = static_cast<unsigned char>(std::lround(image.data[i] * 255.0));
  out.write(reinterpret_cast<char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

Tensor load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string magic;
  std::size_t w = 0, h = 0;
  int maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || maxval != 255 || w == 0 || h == 0)
    throw std::runtime_error("bad magic");
  in.get();  // single whitespace after the header
  std::vector<unsigned char> bytes(w * h);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size())
    throw std::runtime_error("short read");
  Tensor t = Tensor::zeros({h, w});
  for (std::size_t i = 0; i < bytes.size(); ++i) t.data[i] = bytes[i] / 255.0;
  return t;
}

void emit_metrics(const AccuracyMatrix& m, const RunMetadata& meta,
                  const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);

  std::ofstream csv(out_dir + "/metrics.csv", std::ios::binary);
  if (!csv) throw std::runtime_error("cannot open " + out_dir + "/metrics.csv");
  csv << "after_task,eval_task,accuracy\n";
  csv << std::setprecision(17);
  for (std::size_t t = 1; t <= m.tasks(); ++t)
    for (std::size_t j = 1; j <= t; ++j)
      csv << t << "," << j << "," << m.at(t, j) << "\n";
  if (!csv) throw std::runtime_error("write failed: metrics.csv");

  nlohmann::json doc;
  doc["config"] = meta.config_json.empty()
                      ? nlohmann::json::object()
                      : nlohmann::json::parse(meta.config_json);
  doc["seed"] = meta.seed;
  std::vector<double> averages;
  for (std::size_t t = 1; t <= m.tasks(); ++t) averages.push_back(row_average(m, t));
  doc["row_averages"] = averages;
  doc["task_seconds"] = meta.task_seconds;

  std::ofstream js(out_dir + "/run.json", std::ios::binary);
  if (!js) throw std::runtime_error("cannot open " + out_dir + "/run.json");
  js << doc.dump(2) << "\n";
  if (!js) throw std::runtime_error("write failed: run.json");
}

}  // namespace bgr
