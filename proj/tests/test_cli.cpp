#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <sys/wait.h>

#include "otrcl/data.hpp"
#include "otrcl/ot_core.hpp"

using namespace otrcl;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(OTRCL_CLI_PATH) + " " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("otrcl_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_problem(const fs::path& dir, const Matrix& cost, const Vector& a, const Vector& b) {
  write_matrix(dir / "c.otrf", cost);
  write_matrix(dir / "a.otrf", Matrix(a));
  write_matrix(dir / "b.otrf", Matrix(b));
}

std::string solve_args(const fs::path& dir) {
  return "solve --cost " + (dir / "c.otrf").string() + " --alpha " + (dir / "a.otrf").string() + " --beta " +
         (dir / "b.otrf").string();
}

}  // namespace

TEST_CASE("solve a single cell") {
  const fs::path d = scratch("one");
  write_problem(d, Matrix::Constant(1, 1, 2.5), Vector::Ones(1), Vector::Ones(1));
  const Run r = cli(solve_args(d) + " --out " + (d / "p.otrf").string());
  CHECK(r.code == 0);
  CHECK(r.out.find("objective: 2.5") != std::string::npos);
  CHECK(read_matrix(d / "p.otrf")(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("constant cost gives the outer product") {
  const fs::path d = scratch("const");
  Vector a(2), b(3);
  a << 0.25, 0.75;
  b << 0.5, 0.3, 0.2;
  write_problem(d, Matrix::Constant(2, 3, 1.0), a, b);
  const Run r = cli(solve_args(d) + " --out " + (d / "p.otrf").string());
  CHECK(r.code == 0);
  const Matrix p = read_matrix(d / "p.otrf");
  CHECK((p - a * b.transpose()).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("4x4 plan follows the optimal permutation") {
  const fs::path d = scratch("perm");
  Matrix c(4, 4);
  c << 0.9, 0.1, 0.8, 0.7,  //
      0.6, 0.9, 0.2, 0.8,   //
      0.1, 0.7, 0.9, 0.6,   //
      0.8, 0.6, 0.7, 0.15;
  write_problem(d, c, Vector::Constant(4, 0.25), Vector::Constant(4, 0.25));
  const Run r = cli(solve_args(d) + " --epsilon 0.01 --out " + (d / "p.otrf").string());
  CHECK(r.code == 0);
  const Matrix p = read_matrix(d / "p.otrf");
  const AssignmentSolution oracle = exact_ot_oracle(CostMatrix(c));
  for (Eigen::Index i = 0; i < 4; ++i) {
    Eigen::Index j = 0;
    p.row(i).maxCoeff(&j);
    CHECK(j == oracle.permutation[static_cast<std::size_t>(i)]);
  }
}

TEST_CASE("solve exit codes") {
  const fs::path d = scratch("codes");
  write_problem(d, Matrix::Ones(2, 2), Vector::Ones(3), Vector::Ones(2));
  CHECK(cli(solve_args(d)).code == 2);
  write_problem(d, Matrix::Ones(2, 2), Vector::Ones(2), Vector::Ones(2));
  CHECK(cli(solve_args(d) + " --epsilon -1").code == 2);
  CHECK(cli("solve --cost " + (d / "none.otrf").string() + " --alpha x --beta y").code == 1);
  Matrix c(3, 3);
  c << 0.3, 0.9, 0.1, 0.7, 0.2, 0.8, 0.5, 0.6, 0.4;
  Vector a(3), b(3);
  a << 0.6, 0.3, 0.1;
  b << 0.2, 0.2, 0.6;
  write_problem(d, c, a, b);
  CHECK(cli(solve_args(d) + " --epsilon 0.001 --max-iters 10 --tol 1e-15").code == 3);
}

TEST_CASE("gen, train, eval and correct end to end") {
  const fs::path d = scratch("pipeline");
  const std::string data = (d / "data").string();
  Run r = cli("gen --n 200 --n-val 50 --n-test 50 --k 4 --dim-v 10 --dim-t 8 --latent-dim 5 --noise 0.2 --out " + data);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("corrupted train labels: 40") != std::string::npos);
  const std::string manifest = data + "/manifest.json";

  r = cli("train --data " + manifest + " --epochs 2 --warmup 2 --batch-size 50 --out " + (d / "warm").string());
  REQUIRE(r.code == 0);
  r = cli("train --data " + manifest + " --epochs 4 --warmup 2 --batch-size 50 --out " + (d / "full").string());
  REQUIRE(r.code == 0);
  CHECK(fs::exists(d / "full" / "metrics.json"));

  r = cli("eval --manifest " + manifest + " --checkpoint " + (d / "warm" / "checkpoint.otrcl").string() + " " +
          (d / "full" / "checkpoint.otrcl").string());
  CHECK(r.code == 0);
  std::istringstream lines(r.out);
  std::string line;
  int rows = 0;
  std::getline(lines, line);
  CHECK(line == "checkpoint,map_i2t,map_t2i,map_mean");
  while (std::getline(lines, line))
    if (line.find("checkpoint.otrcl,") != std::string::npos) ++rows;
  CHECK(rows == 2);

  r = cli("correct --manifest " + manifest + " --checkpoint " + (d / "full" / "checkpoint.otrcl").string() +
          " --mass 0.5 --out " + (d / "y.otrf").string());
  CHECK(r.code == 0);
  const Matrix y = read_matrix(d / "y.otrf");
  CHECK(y.rows() == 200);
  CHECK(y.sum() / 200.0 == doctest::Approx(0.5).epsilon(1e-4));

  CHECK(cli("train --data " + manifest + " --n 10 --out " + (d / "bad").string()).code == 2);
  CHECK(cli("eval --manifest " + manifest + " --checkpoint " + (d / "missing.otrcl").string()).code == 1);
}
