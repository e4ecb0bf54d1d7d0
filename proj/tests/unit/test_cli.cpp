#include <doctest.h>
#include <sys/wait.h>
#include <unistd.h>


#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>

#include "calibration.hpp"
#include "cli.hpp"
#include "helpers.hpp"
#include "redi/core.hpp"
#include "redi/io.hpp"

namespace fs = std::filesystem;
using redi::cli::run;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

// Fresh directory that becomes the working directory for the scope.
class Scratch {
 public:
  explicit Scratch(const std::string& name) : old_(fs::current_path()) {
    dir_ = fs::temp_directory_path() / ("redi-cli-" + name + "-" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    fs::current_path(dir_);
  }
  ~Scratch() {
    fs::current_path(old_);
    fs::remove_all(dir_);
  }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path old_;
  fs::path dir_;
};

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

// Third line of a metrics CSV, split into fields.
std::vector<std::string> metrics(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  REQUIRE(line == "# redi metrics v1");
  std::getline(in, line);
  REQUIRE(line == "kind,t,s,value_nats,method,roots,samples_per_root,seed,steps,tv,kl,coverage");
  std::getline(in, line);
  auto f = split(line, ',');
  REQUIRE(f.size() == 12);
  return f;
}

std::vector<double> curve(const fs::path& file) {
  std::istringstream in(redi::read_text_file(file));
  std::string line;
  std::getline(in, line);
  REQUIRE(line == "k,tc_nats,method");
  std::vector<double> out;
  while (std::getline(in, line)) out.push_back(redi::parse_double(split(line, ',')[1]));
  return out;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = redi::read_text_file(e.path());
  }
  return files;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("make") {
    Scratch s("make");
    auto r = cli({"make", "fig1-pi0", "--out", "pi0.redi"});
    REQUIRE(r.code == 0);
    const auto pi0 = redi::load_coupling("pi0.redi");
    CHECK(pi0.size() == 8);
    for (const auto& e : pi0.entries()) CHECK(e.weight == 0.125);
    const auto manifest = redi::read_text_file("pi0.redi.manifest");
    CHECK(manifest.find("tool=redi-lab 0.1.0\n") != std::string::npos);
    CHECK(manifest.find("output.pi0.redi.sha256=" + redi::cli::sha256_hex(redi::read_text_file("pi0.redi"))) !=
          std::string::npos);

    REQUIRE(cli({"make", "masked", "--n", "2", "--d", "3", "--mask", "2", "--r", "1.0", "--target", "uniform",
                 "--out", "m.redi"})
                .code == 0);
    const auto m = redi::load_coupling("m.redi");
    for (const auto& e : m.entries()) CHECK(e.x0 == testing::st("22"));
    CHECK(redi::coupling_marginal(m, redi::Side::target).support_size() == 4);  // mask token excluded

    for (const char* out : {"a.redi", "b.redi"}) {
      REQUIRE(cli({"make", "random", "--n", "3", "--d", "3", "--support", "20", "--seed", "7", "--out", out}).code == 0);
    }
    CHECK(redi::read_text_file("a.redi") == redi::read_text_file("b.redi"));

    REQUIRE(cli({"make", "independent", "--source", "fig1-source", "--target", "fig1-target", "--out", "i.redi"}).code == 0);
    CHECK(redi::read_text_file("i.redi") == redi::read_text_file("pi0.redi"));
    REQUIRE(cli({"make", "independent", "--n", "2", "--d", "3", "--source", "uniform", "--target", "diagonal",
                 "--out", "d.redi"})
                .code == 0);
    CHECK(redi::load_coupling("d.redi").size() == 27);
  }

  TEST_CASE("invalid make flag combinations are usage errors") {
    Scratch s("make-bad");
    CHECK(cli({"make", "masked", "--n", "2", "--d", "3", "--out", "x.redi"}).code == 2);
    CHECK(cli({"make", "random", "--n", "2", "--d", "3", "--out", "x.redi"}).code == 2);
    CHECK(cli({"make", "random", "--n", "2", "--support", "3", "--out", "x.redi"}).code == 2);
    CHECK(cli({"make", "fig1-pi0", "--n", "2", "--out", "x.redi"}).code == 2);
    CHECK(cli({"make", "masked", "--n", "2", "--d", "3", "--mask", "2", "--r", "1.5", "--out", "x.redi"}).code == 2);
    CHECK(cli({"make", "masked", "--n", "2", "--d", "3", "--mask", "5", "--out", "x.redi"}).code == 2);
    CHECK(cli({"make", "spiral", "--out", "x.redi"}).code == 2);
    CHECK(cli({"make", "fig1-pi0"}).code == 2);
    CHECK(cli({"make", "fig1-pi0", "--out", "x.redi", "--bogus"}).code == 2);
    CHECK(cli({"make", "independent", "--target", "nofile", "--out", "x.redi"}).code == 2);
    CHECK(cli({}).code == 2);
    CHECK_FALSE(fs::exists("x.redi"));
  }

  TEST_CASE("tc") {
    Scratch s("tc");
    REQUIRE(cli({"make", "fig1-pi0", "--out", "pi0.redi"}).code == 0);
    REQUIRE(cli({"make", "fig1-pi1", "--out", "pi1.redi"}).code == 0);
    auto r = cli({"tc", "pi0.redi", "--t", "0", "--s", "1", "--method", "exact"});
    REQUIRE(r.code == 0);
    auto f = metrics(r.out);
    CHECK(f[0] == "tc");
    CHECK(f[4] == "exact");
    CHECK(std::abs(redi::parse_double(f[3]) - 0.693147) <= 1e-6);
    CHECK(redi::parse_double(metrics(cli({"tc", "pi1.redi", "--t", "0", "--s", "1", "--method", "exact"}).out)[3]) == 0.0);

    r = cli({"tc", "pi0.redi", "--method", "plugin", "--roots", "5000", "--samples", "10", "--seed", "1"});
    REQUIRE(r.code == 0);
    f = metrics(r.out);
    const double v = redi::parse_double(f[3]);
    CHECK(v >= calibration::kPluginBandLow);
    CHECK(v <= calibration::kPluginBandHigh);
    CHECK(std::abs(v - std::log(2.0)) < 0.15);
    CHECK(f[5] == "5000");
    CHECK(f[6] == "10");
    CHECK(f[7] == "1");

    r = cli({"tc", "pi0.redi", "--t", "0.5", "--support-cap", "2"});
    CHECK(r.code == 3);
    CHECK(r.err.find("support cap 2") != std::string::npos);
    CHECK(cli({"tc", "pi0.redi", "--t", "0.5", "--s", "0.5"}).code == 2);
    CHECK(cli({"tc", "pi0.redi", "--method", "plugin", "--samples", "1"}).code == 2);
    CHECK(cli({"tc", "missing.redi"}).code == 2);
    redi::write_text_file("bad.redi", "#redi coupling v1\nn=2 d=2 mask=none\n0 0 | 0 5 | 1\n");
    CHECK(cli({"tc", "bad.redi"}).code == 2);
    CHECK(cli({"tc", "pi0.redi", "--schedule", "wobbly"}).code == 2);
    CHECK(cli({"tc", "pi0.redi", "--path", "diagonal"}).code == 2);
  }

  TEST_CASE("rectify") {
    Scratch s("rectify");
    REQUIRE(cli({"make", "fig1-pi0", "--out", "pi0.redi"}).code == 0);
    auto r = cli({"rectify", "pi0.redi", "--steps", "16", "--k", "3", "--method", "exact", "--out", "run"});
    REQUIRE(r.code == 0);
    const auto tc = curve("run/tc_curve.csv");
    REQUIRE(tc.size() == 4);
    CHECK(std::abs(tc[0] - std::log(2.0)) <= 1e-12);
    for (std::size_t k = 0; k + 1 < tc.size(); ++k) CHECK(tc[k + 1] <= tc[k] + 1e-9);
    for (int k = 0; k <= 3; ++k) CHECK(fs::exists("run/pi_" + std::to_string(k) + ".redi"));
    int manifests = 0;
    for (const auto& e : fs::directory_iterator("run")) {
      if (e.path().filename().string().find("manifest") != std::string::npos) ++manifests;
    }
    CHECK(manifests == 1);
    const auto manifest = redi::read_text_file("run/manifest.txt");
    for (const char* key : {"steps=16\n", "k=3\n", "method=exact\n", "tau=1\n", "schedule=linear\n",
                            "path=coordinatewise\n", "seed=0\n", "tc.3="}) {
      CHECK(manifest.find(key) != std::string::npos);
    }

    REQUIRE(cli({"rectify", "pi0.redi", "--steps", "1", "--k", "1", "--method", "exact", "--out", "one"}).code == 0);
    CHECK(curve("one/tc_curve.csv")[1] == 0.0);

    REQUIRE(cli({"rectify", "pi0.redi", "--method", "sampled", "--pairs", "2000", "--steps", "16", "--seed", "9",
                 "--out", "s"})
                .code == 0);
    CHECK(redi::read_text_file("s/manifest.txt").find("method=sampled(2000)\n") != std::string::npos);

    REQUIRE(cli({"make", "random", "--n", "12", "--d", "3", "--support", "4", "--seed", "1", "--out", "big.redi"}).code == 0);
    r = cli({"rectify", "big.redi", "--method", "exact", "--out", "big"});
    CHECK(r.code == 3);
    CHECK(r.err.find("--method sampled") != std::string::npos);
    CHECK(cli({"rectify", "pi0.redi", "--k", "0", "--out", "z"}).code == 2);
    CHECK(cli({"rectify", "pi0.redi", "--method", "sampled", "--pairs", "0", "--out", "z"}).code == 2);
  }

  TEST_CASE("eval") {
    Scratch s("eval");
    REQUIRE(cli({"make", "fig1-pi0", "--out", "pi0.redi"}).code == 0);
    REQUIRE(cli({"make", "fig1-pi1", "--out", "pi1.redi"}).code == 0);
    for (const char* m : {"1", "4", "16"}) {
      const auto f = metrics(cli({"eval", "pi1.redi", "--target", "fig1-target", "--steps", m}).out);
      CHECK(f[0] == "eval");
      CHECK(redi::parse_double(f[9]) == 0.0);
      CHECK(redi::parse_double(f[11]) == 1.0);
    }
    const double tv1 = redi::parse_double(metrics(cli({"eval", "pi0.redi", "--steps", "1"}).out)[9]);
    const double tv16 = redi::parse_double(metrics(cli({"eval", "pi0.redi", "--steps", "16"}).out)[9]);
    CHECK(tv1 == 0.5);
    CHECK(tv16 < tv1);
    const auto mc = metrics(cli({"eval", "pi0.redi", "--steps", "1", "--sampler", "mc", "--n", "20000", "--seed", "4"}).out);
    CHECK(mc[7] == "4");
    CHECK(std::abs(redi::parse_double(mc[9]) - 0.5) < 0.02);

    REQUIRE(cli({"make", "masked", "--n", "2", "--d", "3", "--mask", "2", "--r", "0.3", "--out", "m.redi"}).code == 0);
    redi::write_text_file("q3.txt", "#redi dist v1\nn=2 d=3 mask=2\n0 0 | 1\n");
    CHECK(cli({"eval", "pi0.redi", "--target", "q3.txt"}).code == 2);
    CHECK(cli({"eval", "m.redi", "--target", "q3.txt", "--steps", "2"}).code == 0);
    CHECK(cli({"eval", "pi0.redi", "--target", "m.redi"}).code == 2);
  }

  TEST_CASE("onestep") {
    Scratch s("onestep");
    REQUIRE(cli({"make", "fig1-pi0", "--out", "pi0.redi"}).code == 0);
    REQUIRE(cli({"make", "fig1-pi1", "--out", "pi1.redi"}).code == 0);
    auto r = cli({"onestep", "pi1.redi", "--n", "100000", "--seed", "3", "--out", "s1.txt"});
    REQUIRE(r.code == 0);
    CHECK(redi::parse_double(metrics(r.out)[9]) < 0.02);
    CHECK(fs::exists("s1.txt.manifest"));

    REQUIRE(cli({"onestep", "pi0.redi", "--n", "100000", "--seed", "3", "--out", "s0.txt"}).code == 0);
    std::istringstream in(redi::read_text_file("s0.txt"));
    const auto samples = redi::read_samples(in);
    REQUIRE(samples.size() == 100000);
    std::map<redi::SequenceState, double> freq;
    for (const auto& x : samples) freq[x] += 1.0 / 100000;
    CHECK(freq.size() == 4);
    for (const auto& [x, p] : freq) CHECK(std::abs(p - 0.25) < 3 * std::sqrt(0.25 * 0.75 / 100000) + 1e-12);

    REQUIRE(cli({"onestep", "pi0.redi", "--n", "500", "--seed", "3", "--out", "a.txt"}).code == 0);
    REQUIRE(cli({"onestep", "pi0.redi", "--n", "500", "--seed", "3", "--out", "b.txt"}).code == 0);
    CHECK(redi::read_text_file("a.txt") == redi::read_text_file("b.txt"));
  }

  TEST_CASE("sample") {
    Scratch s("sample");
    REQUIRE(cli({"make", "fig1-pi1", "--out", "pi1.redi"}).code == 0);
    REQUIRE(cli({"sample", "pi1.redi", "--steps", "4", "--n", "10", "--out", "t.txt"}).code == 0);
    std::istringstream in(redi::read_text_file("t.txt"));
    std::string line;
    std::getline(in, line);
    CHECK(line == "#redi trajectories v1");
    std::getline(in, line);
    int rows = 0;
    while (std::getline(in, line)) {
      const auto states = split(line, '|');
      CHECK(states.size() == 5);
      ++rows;
    }
    CHECK(rows == 10);
    REQUIRE(cli({"make", "masked", "--n", "2", "--d", "3", "--mask", "2", "--r", "1", "--out", "m.redi"}).code == 0);
    REQUIRE(cli({"sample", "m.redi", "--from", "2 2", "--n", "3", "--out", "f.txt"}).code == 0);
    CHECK(cli({"sample", "m.redi", "--from", "0 0", "--out", "g.txt"}).code == 3);
    CHECK(cli({"sample", "m.redi", "--from", "9 9", "--out", "g.txt"}).code == 2);
  }

  TEST_CASE("help and version") {
    auto r = cli({"--help"});
    CHECK(r.code == 0);
    CHECK(r.out.find("rectify") != std::string::npos);
    r = cli({"--version"});
    CHECK(r.code == 0);
    CHECK(r.out == "redi-lab 0.1.0\n");
  }

  TEST_CASE("the installed binary honours the exit-status contract") {
    Scratch s("binary");
    const std::string bin = REDI_LAB_BIN;
    auto status = [&](const std::string& args) {
      const int raw = std::system((bin + " " + args + " >/dev/null 2>&1").c_str());
      return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    };
    CHECK(status("make fig1-pi0 --out pi0.redi") == 0);
    CHECK(status("tc pi0.redi") == 0);
    CHECK(status("make masked --out x.redi") == 2);
    CHECK(status("tc pi0.redi --t 0.5 --support-cap 2") == 3);
  }
}

TEST_SUITE("properties") {
  TEST_CASE("every command is byte-deterministic under fixed seeds") {
    const std::vector<std::vector<std::string>> script{
        {"make", "fig1-pi0", "--out", "pi0.redi"},
        {"make", "random", "--n", "3", "--d", "3", "--support", "20", "--seed", "7", "--out", "rnd.redi"},
        {"make", "masked", "--n", "2", "--d", "3", "--mask", "2", "--r", "0.3", "--out", "m.redi"},
        {"tc", "pi0.redi", "--method", "plugin", "--roots", "500", "--seed", "1", "--manifest", "tc.manifest"},
        {"tc", "rnd.redi", "--t", "0.3", "--s", "0.9"},
        {"rectify", "pi0.redi", "--steps", "16", "--k", "2", "--out", "ex"},
        {"rectify", "rnd.redi", "--method", "sampled", "--pairs", "3000", "--steps", "4", "--seed", "9", "--k", "2",
         "--out", "sa"},
        {"eval", "m.redi", "--sampler", "mc", "--n", "2000", "--seed", "5", "--steps", "4", "--manifest", "ev.manifest"},
        {"onestep", "rnd.redi", "--n", "2000", "--seed", "2", "--out", "os.txt"},
        {"sample", "m.redi", "--steps", "8", "--n", "20", "--seed", "3", "--out", "tr.txt"},
    };
    std::map<std::string, std::string> first;
    std::vector<std::string> first_out;
    for (int run = 0; run < 2; ++run) {
      for (int threads : {1, 3}) {
        if (run == 0 && threads == 3) continue;
        Scratch s("det");
        std::vector<std::string> outs;
        for (auto args : script) {
          if (threads != 1) {
            args.push_back("--threads");
            args.push_back(std::to_string(threads));
          }
          const auto r = cli(args);
          REQUIRE(r.code == 0);
          outs.push_back(r.out);
        }
        auto files = snapshot(s.dir());
        if (run == 0) {
          first = std::move(files);
          first_out = std::move(outs);
          continue;
        }
        CHECK(outs == first_out);
        REQUIRE(files.size() == first.size());
        for (const auto& [name, bytes] : first) {
          // Manifests record the command line, which includes --threads.
          if (threads != 1 && name.find("manifest") != std::string::npos) continue;
          INFO(name);
          CHECK(files.at(name) == bytes);
        }
      }
    }
  }
}
