#include "otrcl/data.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

namespace otrcl {
namespace {

constexpr std::array<char, 5> kMatrixMagic = {'O', 'T', 'R', 'F', '1'};

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

Eigen::Index SplitSizes::offset(Split s) const {
  switch (s) {
    case Split::kTrain: return 0;
    case Split::kVal: return train;
    case Split::kTest: return train + val;
  }
  return 0;
}

Eigen::Index SplitSizes::count(Split s) const {
  switch (s) {
    case Split::kTrain: return train;
    case Split::kVal: return val;
    case Split::kTest: return test;
  }
  return 0;
}

void Dataset::validate() const {
  const Eigen::Index n = features_v.rows();
  if (features_t.rows() != n)
    throw std::invalid_argument("visual features have " + std::to_string(n) + " rows but text features have " +
                                std::to_string(features_t.rows()));
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw std::invalid_argument("label count " + std::to_string(labels.size()) + " does not match " +
                                std::to_string(n) + " samples");
  if (true_labels && true_labels->size() != labels.size())
    throw std::invalid_argument("true label count does not match sample count");
  if (num_classes < 2) throw std::invalid_argument("dataset needs at least two classes");
  auto in_range = [&](int c) { return c >= 0 && c < num_classes; };
  if (!std::all_of(labels.begin(), labels.end(), in_range) ||
      (true_labels && !std::all_of(true_labels->begin(), true_labels->end(), in_range)))
    throw std::invalid_argument("label outside [0, " + std::to_string(num_classes) + ")");
  if (splits.total() != n) throw std::invalid_argument("split sizes do not add up to the sample count");
}

Dataset Dataset::subset(Split s) const {
  const Eigen::Index off = splits.offset(s);
  const Eigen::Index cnt = splits.count(s);
  Dataset out;
  out.features_v = features_v.middleRows(off, cnt);
  out.features_t = features_t.middleRows(off, cnt);
  out.labels.assign(labels.begin() + off, labels.begin() + off + cnt);
  if (true_labels) out.true_labels = Labels(true_labels->begin() + off, true_labels->begin() + off + cnt);
  out.num_classes = num_classes;
  out.splits = {s == Split::kTrain ? cnt : 0, s == Split::kVal ? cnt : 0, s == Split::kTest ? cnt : 0};
  return out;
}

void SynthConfig::validate() const {
  if (classes < 2) throw std::invalid_argument("synthetic data needs at least two classes");
  if (!(noise_ratio >= 0.0 && noise_ratio < 1.0)) throw std::invalid_argument("noise ratio must lie in [0, 1)");
  if (n_train < 1 || n_val < 0 || n_test < 0) throw std::invalid_argument("invalid split sizes");
  if (dim_v < 1 || dim_t < 1 || latent_dim < 1) throw std::invalid_argument("invalid feature dimensions");
  if (!(cluster_spread >= 0.0) || !(modality_noise >= 0.0)) throw std::invalid_argument("spreads must be nonnegative");
}

Dataset generate(const SynthConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int d = config.latent_dim;

  Matrix centers(config.classes, d);
  for (int k = 0; k < config.classes; ++k) {
    Vector c(d);
    do {
      for (int j = 0; j < d; ++j) c(j) = gauss(rng);
    } while (c.norm() == 0.0);
    centers.row(k) = c.normalized().transpose();
  }
  auto random_map = [&](int out_dim, Matrix& weight, Vector& bias) {
    weight.resize(out_dim, d);
    bias.resize(out_dim);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (Eigen::Index i = 0; i < weight.size(); ++i) weight.data()[i] = scale * gauss(rng);
    for (int i = 0; i < out_dim; ++i) bias(i) = 0.1 * gauss(rng);
  };
  Matrix map_v, map_t;
  Vector bias_v, bias_t;
  random_map(config.dim_v, map_v, bias_v);
  random_map(config.dim_t, map_t, bias_t);

  const SplitSizes splits{config.n_train, config.n_val, config.n_test};
  const Eigen::Index n = splits.total();
  Dataset data;
  data.num_classes = config.classes;
  data.splits = splits;
  data.features_v.resize(n, config.dim_v);
  data.features_t.resize(n, config.dim_t);
  Labels truth(static_cast<std::size_t>(n));
  std::uniform_int_distribution<int> pick_class(0, config.classes - 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int k = pick_class(rng);
    truth[static_cast<std::size_t>(i)] = k;
    Vector latent = centers.row(k).transpose();
    for (int j = 0; j < d; ++j) latent(j) += config.cluster_spread * gauss(rng);
    Vector xv = map_v * latent + bias_v;
    Vector xt = map_t * latent + bias_t;
    for (Eigen::Index j = 0; j < xv.size(); ++j) xv(j) += config.modality_noise * gauss(rng);
    for (Eigen::Index j = 0; j < xt.size(); ++j) xt(j) += config.modality_noise * gauss(rng);
    data.features_v.row(i) = xv.transpose();
    data.features_t.row(i) = xt.transpose();
  }

  Labels train_truth(truth.begin(), truth.begin() + splits.train);
  Labels noisy = inject_symmetric_noise(train_truth, config.classes, config.noise_ratio, rng());
  data.labels = noisy;
  data.labels.insert(data.labels.end(), truth.begin() + splits.train, truth.end());
  data.true_labels = std::move(truth);
  return data;
}

Labels inject_symmetric_noise(const Labels& labels, int num_classes, double rho, std::uint64_t seed) {
  if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("noise ratio must lie in [0, 1)");
  if (num_classes < 2) throw std::invalid_argument("noise injection needs at least two classes");
  Labels out = labels;
  const auto n = labels.size();
  const auto corrupt = static_cast<std::size_t>(std::floor(rho * static_cast<double>(n)));
  if (corrupt == 0) return out;
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::uniform_int_distribution<int> other(0, num_classes - 2);
  for (std::size_t j = 0; j < corrupt; ++j) {
    const std::size_t i = order[j];
    int c = other(rng);
    if (c >= labels[i]) ++c;
    out[i] = c;
  }
  return out;
}

void write_matrix(const std::filesystem::path& path, const Matrix& m) {
  if (m.rows() > std::numeric_limits<std::uint32_t>::max() || m.cols() > std::numeric_limits<std::uint32_t>::max())
    throw std::invalid_argument("matrix too large for the feature container");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const auto rows = static_cast<std::uint32_t>(m.rows());
  const auto cols = static_cast<std::uint32_t>(m.cols());
  out.write(kMatrixMagic.data(), kMatrixMagic.size());
  out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
  out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Matrix read_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open matrix file " + path.string());
  std::array<char, 5> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMatrixMagic) throw LoadError(path.string() + ": not an OTRF1 matrix file");
  std::uint32_t rows = 0, cols = 0;
  in.read(reinterpret_cast<char*>(&rows), sizeof rows);
  in.read(reinterpret_cast<char*>(&cols), sizeof cols);
  if (!in) throw LoadError(path.string() + ": truncated header");
  Matrix m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(m.size() * sizeof(double)))
    throw LoadError(path.string() + ": truncated payload (expected " + std::to_string(rows) + "x" +
                    std::to_string(cols) + " values)");
  if (in.peek() != std::char_traits<char>::eof()) throw LoadError(path.string() + ": trailing bytes after payload");
  for (Eigen::Index i = 0; i < m.size(); ++i)
    if (!std::isfinite(m.data()[i]))
      throw LoadError(path.string() + ": non-finite value at row " + std::to_string(i / std::max<Eigen::Index>(1, cols)));
  return m;
}

void write_labels(const std::filesystem::path& path, const Labels& labels) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (int c : labels) out << c << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Labels read_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open label file " + path.string());
  Labels out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    int c = 0;
    std::string rest;
    if (!(ss >> c) || (ss >> rest))
      throw LoadError(path.string() + ":" + std::to_string(line_no) + ": expected one class index");
    out.push_back(c);
  }
  return out;
}

std::filesystem::path save_dataset(const std::filesystem::path& dir, const Dataset& data) {
  data.validate();
  std::filesystem::create_directories(dir);
  write_matrix(dir / "features_v.otrf", data.features_v);
  write_matrix(dir / "features_t.otrf", data.features_t);
  write_labels(dir / "labels.txt", data.labels);
  nlohmann::ordered_json manifest = {
      {"format", "otrcl-dataset-1"},
      {"features_v", "features_v.otrf"},
      {"features_t", "features_t.otrf"},
      {"labels", "labels.txt"},
      {"num_classes", data.num_classes},
      {"splits", {{"train", data.splits.train}, {"val", data.splits.val}, {"test", data.splits.test}}},
  };
  if (data.true_labels) {
    write_labels(dir / "true_labels.txt", *data.true_labels);
    manifest["true_labels"] = "true_labels.txt";
  }
  const auto path = dir / "manifest.json";
  std::ofstream out(path, std::ios::trunc);
  out << manifest.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
  return path;
}

Dataset load_features(const std::filesystem::path& path_v, const std::filesystem::path& path_t,
                      const std::filesystem::path& path_labels, int num_classes,
                      std::optional<SplitSizes> splits,
                      const std::optional<std::filesystem::path>& path_true) {
  Dataset data;
  data.features_v = read_matrix(path_v);
  data.features_t = read_matrix(path_t);
  if (data.features_v.rows() != data.features_t.rows())
    throw LoadError("sample count mismatch: " + path_v.string() + " has " + std::to_string(data.features_v.rows()) +
                    " rows, " + path_t.string() + " has " + std::to_string(data.features_t.rows()));
  data.labels = read_labels(path_labels);
  if (path_true) data.true_labels = read_labels(*path_true);
  data.num_classes = num_classes;
  data.splits = splits.value_or(SplitSizes{data.features_v.rows(), 0, 0});
  try {
    data.validate();
  } catch (const std::invalid_argument& e) {
    throw LoadError(std::string("invalid dataset: ") + e.what());
  }
  return data;
}

DatasetManifest read_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw LoadError("cannot open dataset manifest " + manifest.string());
  nlohmann::json j;
  try {
    in >> j;
    if (j.value("format", "") != "otrcl-dataset-1")
      throw LoadError(manifest.string() + ": unsupported dataset manifest version");
    const auto base = manifest.parent_path();
    DatasetManifest m;
    m.features_v = resolve(base, j.at("features_v").get<std::string>());
    m.features_t = resolve(base, j.at("features_t").get<std::string>());
    m.labels = resolve(base, j.at("labels").get<std::string>());
    if (j.contains("true_labels")) m.true_labels = resolve(base, j.at("true_labels").get<std::string>());
    m.num_classes = j.at("num_classes").get<int>();
    const auto& s = j.at("splits");
    m.splits = {s.at("train").get<Eigen::Index>(), s.at("val").get<Eigen::Index>(), s.at("test").get<Eigen::Index>()};
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(manifest.string() + ": malformed manifest: " + e.what());
  }
}

Dataset load_dataset(const std::filesystem::path& manifest) {
  const DatasetManifest m = read_manifest(manifest);
  return load_features(m.features_v, m.features_t, m.labels, m.num_classes, m.splits, m.true_labels);
}

}  // namespace otrcl
