#include "otrcl/checkpoint.hpp"

#include <array>
#include <cstdint>
#include <fstream>

#include "otrcl/data.hpp"

namespace otrcl {
namespace {

constexpr std::array<char, 6> kMagic = {'O', 'T', 'R', 'C', 'L', '1'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
    if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void bytes(const std::string& s) {
    pod(static_cast<std::uint64_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void vector(const Vector& v) {
    pod(static_cast<std::uint64_t>(v.size()));
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  void matrix(const Matrix& m) {
    pod(static_cast<std::uint64_t>(m.rows()));
    pod(static_cast<std::uint64_t>(m.cols()));
    out_.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  void raw(const char* data, std::size_t n) { out_.write(data, static_cast<std::streamsize>(n)); }
  void finish() {
    out_.flush();
    if (!out_) throw std::runtime_error("failed writing " + path_.string());
  }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw LoadError("cannot open checkpoint " + path.string());
  }
  template <typename T>
  T pod() {
    T v{};
    read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  }
  std::string bytes() {
    const auto n = checked_size(pod<std::uint64_t>(), 1);
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  Vector vector() {
    const auto n = checked_size(pod<std::uint64_t>(), sizeof(double));
    Vector v(static_cast<Eigen::Index>(n));
    read(reinterpret_cast<char*>(v.data()), n * sizeof(double));
    return v;
  }
  Matrix matrix() {
    const auto rows = pod<std::uint64_t>();
    const auto cols = pod<std::uint64_t>();
    const auto n = checked_size(rows * cols, sizeof(double));
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    read(reinterpret_cast<char*>(m.data()), n * sizeof(double));
    return m;
  }
  void read(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n)) throw LoadError(path_.string() + ": truncated checkpoint");
  }

 private:
  // Rejects lengths that cannot fit in the remaining file.
  std::size_t checked_size(std::uint64_t count, std::size_t unit) {
    const auto here = in_.tellg();
    in_.seekg(0, std::ios::end);
    const auto end = in_.tellg();
    in_.seekg(here);
    if (count > static_cast<std::uint64_t>(end - here) / unit)
      throw LoadError(path_.string() + ": truncated checkpoint");
    return static_cast<std::size_t>(count);
  }

  std::ifstream in_;
  std::filesystem::path path_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  Writer w(path);
  w.raw(kMagic.data(), kMagic.size());
  w.pod(kVersion);
  const ModelDims& d = ckpt.model.dims();
  for (int v : {d.dim_v, d.dim_t, d.hidden, d.embed, d.classes}) w.pod(static_cast<std::int32_t>(v));
  w.pod(ckpt.model.tau1());
  w.vector(ckpt.model.params());
  w.pod(ckpt.adam.lr);
  w.pod(ckpt.adam.beta1);
  w.pod(ckpt.adam.beta2);
  w.pod(ckpt.adam.eps);
  w.pod(static_cast<std::int64_t>(ckpt.adam.step));
  w.vector(ckpt.adam.m);
  w.vector(ckpt.adam.v);
  w.pod(static_cast<std::int32_t>(ckpt.epoch));
  w.bytes(ckpt.rng_state);
  w.matrix(ckpt.targets);
  w.matrix(ckpt.training_targets);
  w.matrix(ckpt.soft_labels);
  w.bytes(ckpt.config_json);
  w.finish();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  std::array<char, 6> magic{};
  r.read(magic.data(), magic.size());
  if (magic != kMagic) throw LoadError(path.string() + ": not an OTRCL1 checkpoint");
  const auto version = r.pod<std::uint32_t>();
  if (version != kVersion)
    throw LoadError(path.string() + ": checkpoint version " + std::to_string(version) + ", expected " +
                    std::to_string(kVersion));
  ModelDims d;
  d.dim_v = r.pod<std::int32_t>();
  d.dim_t = r.pod<std::int32_t>();
  d.hidden = r.pod<std::int32_t>();
  d.embed = r.pod<std::int32_t>();
  d.classes = r.pod<std::int32_t>();
  const auto tau1 = r.pod<double>();
  Checkpoint ckpt;
  try {
    ckpt.model = ModelState(d, tau1);
  } catch (const std::invalid_argument& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
  Vector params = r.vector();
  if (params.size() != ckpt.model.params().size())
    throw LoadError(path.string() + ": parameter count does not match model dimensions");
  ckpt.model.params() = std::move(params);
  ckpt.adam.lr = r.pod<double>();
  ckpt.adam.beta1 = r.pod<double>();
  ckpt.adam.beta2 = r.pod<double>();
  ckpt.adam.eps = r.pod<double>();
  ckpt.adam.step = r.pod<std::int64_t>();
  ckpt.adam.m = r.vector();
  ckpt.adam.v = r.vector();
  ckpt.epoch = r.pod<std::int32_t>();
  ckpt.rng_state = r.bytes();
  ckpt.targets = r.matrix();
  ckpt.training_targets = r.matrix();
  ckpt.soft_labels = r.matrix();
  ckpt.config_json = r.bytes();
  return ckpt;
}

}  // namespace otrcl
