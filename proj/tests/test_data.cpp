#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "otrcl/data.hpp"

using namespace otrcl;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("otrcl_test_data_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

SynthConfig small_config() {
  SynthConfig c;
  c.n_train = 60;
  c.n_val = 20;
  c.n_test = 20;
  c.classes = 4;
  c.dim_v = 6;
  c.dim_t = 5;
  c.latent_dim = 3;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("zero spread and noise collapse each class") {
  SynthConfig c = small_config();
  c.cluster_spread = 0.0;
  c.modality_noise = 0.0;
  const Dataset d = generate(c);
  const Labels& truth = *d.true_labels;
  for (Eigen::Index i = 0; i < d.size(); ++i)
    for (Eigen::Index j = 0; j < i; ++j)
      if (truth[static_cast<std::size_t>(i)] == truth[static_cast<std::size_t>(j)]) {
        CHECK(d.features_v.row(i) == d.features_v.row(j));
        CHECK(d.features_t.row(i) == d.features_t.row(j));
      }
}

TEST_CASE("two well separated classes are perfectly classified by nearest centroid") {
  SynthConfig c = small_config();
  c.classes = 2;
  c.cluster_spread = 0.01;
  c.modality_noise = 0.0;
  const Dataset d = generate(c);
  const Labels& truth = *d.true_labels;
  Matrix centroid = Matrix::Zero(2, d.features_v.cols());
  Vector count = Vector::Zero(2);
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    centroid.row(truth[static_cast<std::size_t>(i)]) += d.features_v.row(i);
    count(truth[static_cast<std::size_t>(i)]) += 1.0;
  }
  for (int k = 0; k < 2; ++k) centroid.row(k) /= count(k);
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const double d0 = (d.features_v.row(i) - centroid.row(0)).norm();
    const double d1 = (d.features_v.row(i) - centroid.row(1)).norm();
    CHECK((d0 < d1 ? 0 : 1) == truth[static_cast<std::size_t>(i)]);
  }
}

TEST_CASE("generation is deterministic and noise only touches train") {
  SynthConfig c = small_config();
  c.noise_ratio = 0.5;
  const Dataset a = generate(c), b = generate(c);
  CHECK(a.features_v == b.features_v);
  CHECK(a.features_t == b.features_t);
  CHECK(a.labels == b.labels);
  long flipped = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const bool differs = a.labels[static_cast<std::size_t>(i)] != (*a.true_labels)[static_cast<std::size_t>(i)];
    if (i >= c.n_train) CHECK_FALSE(differs);
    flipped += differs;
  }
  CHECK(flipped == 30);
  c.seed = 8;
  CHECK(generate(c).features_v != a.features_v);
}

TEST_CASE("symmetric noise examples") {
  Labels truth(1000);
  for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = static_cast<int>(i % 7);
  CHECK(inject_symmetric_noise(truth, 7, 0.0, 1) == truth);
  const Labels noisy = inject_symmetric_noise(truth, 7, 0.5, 1);
  long differ = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) differ += noisy[i] != truth[i];
  CHECK(differ == 500);
  CHECK_THROWS_AS(inject_symmetric_noise(truth, 7, 1.0, 1), std::invalid_argument);
  const Labels small{0, 1, 2};
  long d3 = 0;
  const Labels n3 = inject_symmetric_noise(small, 3, 0.7, 2);
  for (std::size_t i = 0; i < 3; ++i) d3 += n3[i] != small[i];
  CHECK(d3 == 2);  // floor(0.7 * 3)
}

TEST_CASE("symmetric noise spreads uniformly over the other classes") {
  const int n = 10000, k = 10;
  Labels truth(n);
  for (int i = 0; i < n; ++i) truth[static_cast<std::size_t>(i)] = i % k;
  const Labels noisy = inject_symmetric_noise(truth, k, 0.4, 123);
  Matrix counts = Matrix::Zero(k, k);
  for (int i = 0; i < n; ++i) {
    const int t = truth[static_cast<std::size_t>(i)], o = noisy[static_cast<std::size_t>(i)];
    if (t != o) counts(t, o) += 1.0;
  }
  CHECK(counts.diagonal().isZero());
  for (int t = 0; t < k; ++t) {
    const double total = counts.row(t).sum();
    const double p = 1.0 / (k - 1);
    const double mean = total * p;
    const double sigma = std::sqrt(total * p * (1.0 - p));
    for (int o = 0; o < k; ++o)
      if (o != t) CHECK(std::abs(counts(t, o) - mean) <= 3.0 * sigma);
  }
}

TEST_CASE("matrix files round-trip exactly") {
  const fs::path dir = scratch("matrix");
  Matrix m(3, 2);
  m << 1.0, -0.0, 1e-300, 3.141592653589793, -7.25, 1e300;
  write_matrix(dir / "m.otrf", m);
  CHECK(read_matrix(dir / "m.otrf") == m);
  const std::string bytes = slurp(dir / "m.otrf");
  CHECK(bytes.substr(0, 5) == "OTRF1");
  CHECK(bytes.size() == 5 + 4 + 4 + 6 * 8);
  CHECK(static_cast<unsigned char>(bytes[5]) == 3);  // little-endian row count
}

TEST_CASE("matrix file errors") {
  const fs::path dir = scratch("matrix_err");
  CHECK_THROWS_AS(read_matrix(dir / "missing.otrf"), LoadError);
  write_matrix(dir / "m.otrf", Matrix::Ones(4, 4));
  const std::string bytes = slurp(dir / "m.otrf");
  {
    std::ofstream out(dir / "short.otrf", std::ios::binary);
    out << bytes.substr(0, bytes.size() - 3);
  }
  CHECK_THROWS_AS(read_matrix(dir / "short.otrf"), LoadError);
  {
    std::ofstream out(dir / "long.otrf", std::ios::binary);
    out << bytes << 'x';
  }
  CHECK_THROWS_AS(read_matrix(dir / "long.otrf"), LoadError);
  {
    std::ofstream out(dir / "magic.otrf", std::ios::binary);
    out << "OTRF2" << bytes.substr(5);
  }
  CHECK_THROWS_AS(read_matrix(dir / "magic.otrf"), LoadError);
  Matrix bad = Matrix::Ones(2, 2);
  bad(1, 0) = std::nan("");
  {
    std::string b = bytes.substr(0, 13);
    b[5] = 2;
    b[9] = 2;
    b.append(reinterpret_cast<const char*>(bad.data()), 4 * sizeof(double));
    std::ofstream out(dir / "nan.otrf", std::ios::binary);
    out << b;
  }
  CHECK_THROWS_AS(read_matrix(dir / "nan.otrf"), LoadError);
}

TEST_CASE("label files") {
  const fs::path dir = scratch("labels");
  const Labels l{3, 0, 2, 2};
  write_labels(dir / "l.txt", l);
  CHECK(read_labels(dir / "l.txt") == l);
  std::ofstream(dir / "bad.txt") << "1\nx\n";
  CHECK_THROWS_AS(read_labels(dir / "bad.txt"), LoadError);
}

TEST_CASE("dataset save and load round-trip") {
  const fs::path dir = scratch("dataset");
  SynthConfig c = small_config();
  c.noise_ratio = 0.3;
  const Dataset d = generate(c);
  const fs::path manifest = save_dataset(dir, d);
  const Dataset e = load_dataset(manifest);
  CHECK(e.features_v == d.features_v);
  CHECK(e.features_t == d.features_t);
  CHECK(e.labels == d.labels);
  CHECK(e.true_labels == d.true_labels);
  CHECK(e.num_classes == d.num_classes);
  CHECK(e.splits == d.splits);
}

TEST_CASE("load errors are descriptive") {
  const fs::path dir = scratch("load_err");
  write_matrix(dir / "v.otrf", Matrix::Ones(5, 3));
  write_matrix(dir / "t.otrf", Matrix::Ones(4, 3));
  write_labels(dir / "l.txt", {0, 1, 0, 1, 0});
  try {
    load_features(dir / "v.otrf", dir / "t.otrf", dir / "l.txt", 2);
    FAIL("expected a load error");
  } catch (const LoadError& e) {
    const std::string msg = e.what();
    CHECK(msg.find('5') != std::string::npos);
    CHECK(msg.find('4') != std::string::npos);
  }
  write_matrix(dir / "t.otrf", Matrix::Ones(5, 3));
  write_labels(dir / "l.txt", {0, 1, 0, 2, 0});
  CHECK_THROWS_AS(load_features(dir / "v.otrf", dir / "t.otrf", dir / "l.txt", 2), LoadError);
  CHECK_THROWS_AS(load_features(dir / "v.otrf", dir / "t.otrf", dir / "nope.txt", 3), LoadError);
  CHECK_THROWS_AS(load_dataset(dir / "manifest.json"), LoadError);
}

TEST_CASE("subsets follow the split layout") {
  const Dataset d = generate(small_config());
  const Dataset test = d.subset(Split::kTest);
  CHECK(test.size() == 20);
  CHECK(test.features_v.row(0) == d.features_v.row(80));
  CHECK(test.labels[0] == d.labels[80]);
}
