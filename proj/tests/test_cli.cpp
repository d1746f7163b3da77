#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include <doctest.h>
#include <json.hpp>

#include "spdc/binary_io.hpp"
#include "spdc/dataset.hpp"
#include "spdc/schmidt.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

fs::path workdir(const std::string& name) {
  const auto d = fs::temp_directory_path() / "oamnet_test_cli" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

Run oamnet(const fs::path& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.string() + "' && '" OAMNET_BIN "' " + args + " > stdout.txt 2> stderr.txt";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(dir / "stdout.txt");
  r.err = slurp(dir / "stderr.txt");
  return r;
}

json manifest(const fs::path& p) { return json::parse(slurp(p)); }

double number_after(const std::string& text, const std::string& key) {
  std::smatch m;
  const std::regex re(key + " = ([-+0-9.eE]+)");
  REQUIRE(std::regex_search(text, m, re));
  return std::stod(m[1]);
}

const char* kGrid = "--n 16 --p 64 --m-modes 4 --ellmax 3";

// Shared tiny dataset and checkpoint, built once through the CLI.
const fs::path& fixture() {
  static const fs::path dir = [] {
    const auto d = workdir("fixture");
    auto g = oamnet(d, std::string("gen-dataset --count 20 --seed 4 --strict ") + kGrid + " --out data.oamd");
    REQUIRE(g.code == 0);
    auto t = oamnet(d, "train --data data.oamd --out model.oamc --epochs 2 --batch 8 --channels 8 --strict --seed 1");
    REQUIRE(t.code == 0);
    return d;
  }();
  return dir;
}

void corrupt(const fs::path& p, std::size_t offset) {
  std::string b = slurp(p);
  b[offset] = static_cast<char>(b[offset] ^ 0x40);
  std::ofstream(p, std::ios::binary) << b;
}

}  // namespace

TEST_CASE("exit codes") {
  const auto d = workdir("codes");
  CHECK(oamnet(d, "").code == 2);
  CHECK(oamnet(d, "simulate --no-such-flag").code == 2);
  CHECK(oamnet(d, "--version").code == 0);
  const auto bad = oamnet(d, "simulate --g -1 --n 16 --p 64");
  CHECK(bad.code == 2);
  CHECK(bad.err.find("error") != std::string::npos);
  CHECK(oamnet(d, "simulate --wp -5 --n 16 --p 64").code == 2);
  const auto missing = oamnet(d, "eval --checkpoint none.oamc --data none.oamd");
  CHECK(missing.code == 1);
  CHECK(oamnet(d, "replay absent.json").code == 1);
  // Failed runs still leave a manifest with their exit code.
  CHECK(manifest(d / "eval.manifest.json")["exit_code"] == 1);
}

TEST_CASE("simulate a high-gain twisted-pump row") {
  const auto d = workdir("simulate");
  const std::string flags = "--g 5.364 --theta 32.951 --L 997.411 --wp 358.182 --ellp 2 --pp 3 --n 32 --p 128";
  const auto r = oamnet(d, "simulate " + flags + " --out row --seed 9");
  REQUIRE(r.code == 0);
  const double K = number_after(r.out, "K");
  CHECK(K >= 1.0);
  CHECK(r.out.find("top modes") != std::string::npos);
  CHECK(fs::exists(d / "row.txt"));

  const auto ds = spdc::data::load_dataset(d / "row.oamd");
  REQUIRE(ds.records.size() == 1);
  const Eigen::ArrayXXd w = ds.records[0].target.cast<double>();
  CHECK(std::abs(w.sum() - 1.0) < 1e-6);
  CHECK((w >= 0).all());
  CHECK(spdc::schmidt_number(w) == doctest::Approx(K).epsilon(1e-5));

  // Stored parameters are single precision; rerun from the exact flags.
  const auto& stored = ds.records[0].params;
  CHECK(stored.g == doctest::Approx(5.364).epsilon(1e-7));
  CHECK(stored.ell_p == 2);
  CHECK(stored.p_p == 3);
  spdc::PhysicalParams p;
  p.g = 5.364;
  p.theta_deg = 32.951;
  p.L_um = 997.411;
  p.w_p_um = 358.182;
  p.ell_p = 2;
  p.p_p = 3;
  const auto lib = spdc::simulate(p, ds.header.sim);
  CHECK((lib.weights.cast<float>() == ds.records[0].target).all());

  const auto m = manifest(d / "row.run.json");
  CHECK(m["command"] == "simulate");
  CHECK(m["flags"]["g"] == "5.364");
  CHECK(m["flags"]["ellp"] == "2");
  CHECK(m["seed"] == 9);
  CHECK(m["strict"] == false);
  CHECK(m["exit_code"] == 0);
  CHECK(m["config_hashes"].contains("sim"));
  CHECK(m["tool_version"].is_string());
  CHECK(m["wall_time_s"].get<double>() >= 0.0);
  CHECK(m["argv"].size() > 10);
  CHECK(m["outputs"]["binary"] == "row.oamd");
}

TEST_CASE("zero gain is the low-gain identity path") {
  const auto d = workdir("zero_gain");
  REQUIRE(oamnet(d, "simulate --g 0 --n 32 --p 128 --out low").code == 0);
  const auto ds = spdc::data::load_dataset(d / "low.oamd");
  spdc::PhysicalParams p;
  p.g = 0.0;
  const auto lib = spdc::simulate(p, ds.header.sim);
  CHECK((lib.weights.cast<float>() == ds.records[0].target).all());
  const auto again = spdc::gain_correct(lib, 0.0);
  CHECK((again.weights - lib.weights).abs().maxCoeff() < 1e-15);
}

TEST_CASE("phase matching") {
  const auto d = workdir("phase");
  const auto r = oamnet(d, "phase-match");
  REQUIRE(r.code == 0);
  const double theta = number_after(r.out, "theta_deg");
  CHECK(theta > 32.0);
  CHECK(theta < 34.0);
  CHECK(manifest(d / "phase-match.manifest.json")["outputs"]["theta_deg"].get<double>() == doctest::Approx(theta));
}

TEST_CASE("strict dataset generation is reproducible") {
  const auto a = workdir("gen_a"), b = workdir("gen_b");
  const std::string args = std::string("gen-dataset --count 8 --seed 21 --strict --stratified ") + kGrid + " --out d.oamd";
  REQUIRE(oamnet(a, args).code == 0);
  REQUIRE(oamnet(b, args).code == 0);
  CHECK(slurp(a / "d.oamd") == slurp(b / "d.oamd"));
  CHECK(oamnet(b, std::string("gen-dataset --count 8 --seed 21 --jobs 3 --stratified ") + kGrid + " --out j.oamd").code == 0);
  CHECK(slurp(a / "d.oamd") == slurp(b / "j.oamd"));

  // Replaying the manifest rewrites the same bytes.
  fs::rename(a / "d.oamd", a / "first.oamd");
  REQUIRE(oamnet(a, "replay d.oamd.run.json").code == 0);
  CHECK(slurp(a / "first.oamd") == slurp(a / "d.oamd"));

  const auto m = manifest(a / "d.oamd.run.json");
  CHECK(m["strict"] == true);
  CHECK(m["flags"]["count"] == "8");
  CHECK(oamnet(a, std::string("gen-dataset --count 4 --g-range 3,1 ") + kGrid + " --out x.oamd").code == 2);
}

TEST_CASE("training, evaluation and prediction") {
  const auto& f = fixture();
  const auto d = workdir("train");
  fs::copy(f / "data.oamd", d / "data.oamd");
  const std::string args = "train --data data.oamd --out model.oamc --epochs 2 --batch 8 --channels 8 --strict --seed 1";
  REQUIRE(oamnet(d, args).code == 0);
  CHECK(slurp(d / "model.oamc.history.jsonl") == slurp(f / "model.oamc.history.jsonl"));
  CHECK(slurp(d / "model.oamc") == slurp(f / "model.oamc"));

  const auto e = oamnet(d, "eval --checkpoint model.oamc --data data.oamd --split all --out per_sample.csv");
  REQUIRE(e.code == 0);
  CHECK(number_after(e.out, "jsd") >= 0.0);
  const std::string csv = slurp(d / "per_sample.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 21);

  const auto p = oamnet(d, "predict --checkpoint model.oamc --g 1.5 --ellp 1 --pp 2");
  REQUIRE(p.code == 0);
  CHECK(number_after(p.out, "K") >= 1.0);

  // A checkpoint for another grid is refused.
  REQUIRE(oamnet(d, "gen-dataset --count 10 --n 16 --p 64 --m-modes 3 --ellmax 3 --out other.oamd").code == 0);
  const auto mismatch = oamnet(d, "eval --checkpoint model.oamc --data other.oamd");
  CHECK(mismatch.code == 2);
  CHECK(mismatch.err.find("grid mismatch") != std::string::npos);
  CHECK(oamnet(d, "train --data data.oamd --out m.oamc --weights E12 --epochs 1").code == 2);
}

TEST_CASE("corrupted files are rejected") {
  const auto& f = fixture();
  const auto d = workdir("corrupt");
  fs::copy(f / "data.oamd", d / "data.oamd");
  fs::copy(f / "model.oamc", d / "model.oamc");
  fs::copy(f / "data.oamd", d / "bad.oamd");
  corrupt(d / "bad.oamd", fs::file_size(d / "bad.oamd") - 7);
  const auto r = oamnet(d, "eval --checkpoint model.oamc --data bad.oamd");
  CHECK(r.code == 2);
  CHECK(r.err.find("checksum") != std::string::npos);

  fs::copy(f / "model.oamc", d / "bad.oamc");
  corrupt(d / "bad.oamc", 100);
  CHECK(oamnet(d, "eval --checkpoint bad.oamc --data data.oamd").code == 2);
  fs::resize_file(d / "model.oamc", fs::file_size(d / "model.oamc") / 2);
  CHECK(oamnet(d, "predict --checkpoint model.oamc").code == 2);
  std::ofstream(d / "junk.json") << "{not json";
  CHECK(oamnet(d, "replay junk.json").code == 2);
}

TEST_CASE("bench") {
  const auto& f = fixture();
  const auto d = workdir("bench");
  const auto sim_only = oamnet(d, "bench --n-samples 2 --grid 16 --reps 5 --out b.json");
  REQUIRE(sim_only.code == 0);
  CHECK(sim_only.out.find("ratio") == std::string::npos);
  const auto j = json::parse(slurp(d / "b.json"));
  CHECK(j["repetitions"] == 5);
  CHECK(j.contains("simulator_std_s"));
  CHECK(!j.contains("ratio"));

  fs::copy(f / "model.oamc", d / "model.oamc");
  const auto both = oamnet(d, "bench --n-samples 2 --grid 16 --reps 5 --checkpoint model.oamc");
  REQUIRE(both.code == 0);
  CHECK(number_after(both.out, "ratio") > 0.0);
  CHECK(manifest(d / "bench.manifest.json")["outputs"].contains("ratio"));
}

TEST_CASE("spectrum") {
  const auto& f = fixture();
  const auto d = workdir("spectrum");
  fs::copy(f / "model.oamc", d / "model.oamc");
  const std::string grid = " --n 16 --p 64 --m-modes 4 --ellmax 3 --g 2.258";
  const auto no_ckpt = oamnet(d, "spectrum --source model" + grid);
  CHECK(no_ckpt.code == 2);
  CHECK(no_ckpt.err.find("checkpoint") != std::string::npos);

  const auto both = oamnet(d, "spectrum --source both --checkpoint model.oamc --out s.csv" + grid);
  REQUIRE(both.code == 0);
  CHECK(number_after(both.out, "mae") >= 0.0);
  CHECK(number_after(both.out, "cosine") <= 1.0 + 1e-12);

  // Each source column sums to one.
  std::istringstream csv(slurp(d / "s.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line.find("sim") != std::string::npos);
  CHECK(line.find("model") != std::string::npos);
  double s_sim = 0.0, s_model = 0.0;
  int rows = 0;
  while (std::getline(csv, line)) {
    double ell, a, b;
    char c1, c2;
    std::istringstream(line) >> ell >> c1 >> a >> c2 >> b;
    s_sim += a;
    s_model += b;
    ++rows;
  }
  CHECK(rows == 7);
  CHECK(std::abs(s_sim - 1.0) < 1e-6);
  CHECK(std::abs(s_model - 1.0) < 1e-6);

  CHECK(oamnet(d, "spectrum --source sim" + grid).code == 0);
}

TEST_CASE("ablate") {
  const auto& f = fixture();
  const auto d = workdir("ablate");
  fs::copy(f / "data.oamd", d / "data.oamd");
  const auto r = oamnet(d, "ablate --data data.oamd --ids E0,E7 --seeds 1 --epochs 1 --channels 8 --out table.csv --strict");
  REQUIRE(r.code == 0);
  const std::string t = slurp(d / "table.csv");
  CHECK(t.find("E0") != std::string::npos);
  CHECK(t.find("E7") != std::string::npos);
  CHECK(oamnet(d, "ablate --data data.oamd --ids E0,X3 --seeds 1 --epochs 1 --channels 8").code == 2);
}
