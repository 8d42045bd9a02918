#include "support.hpp"
#include "useg/checkpoint.hpp"
#include "useg/dataset.hpp"
#include "useg/png_io.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <sys/wait.h>

using namespace useg;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "useg_test_cli";

struct Run {
  int code = -1;
  std::string out;
};

// Runs the CLI with stdout captured; stderr is discarded.
Run cli(const std::string& args) {
  fs::create_directories(kRoot);
  const fs::path out = kRoot / "stdout.txt";
  const std::string command = std::string(USEG_CLI) + " " + args + " > " + out.string() + " 2>/dev/null";
  const int status = std::system(command.c_str());
  std::ifstream in(out);
  std::stringstream text;
  text << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, text.str()};
}

fs::path fresh(const std::string& name) {
  const fs::path p = kRoot / name;
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path write_text(const std::string& name, const std::string& text) {
  fs::create_directories(kRoot);
  const fs::path p = kRoot / name;
  std::ofstream(p) << text;
  return p;
}

double number_after(const std::string& text, const std::string& label) {
  const std::regex re(label + " ([-+0-9.eE]+)");
  std::smatch m;
  REQUIRE(std::regex_search(text, m, re));
  return std::stod(m[1]);
}

std::vector<std::string> fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream s(line);
  for (std::string f; std::getline(s, f, ',');) out.push_back(f);
  return out;
}

// The CSV row printed after the header.
std::string csv_row(const std::string& output) {
  const auto at = output.find("name,target_class");
  REQUIRE(at != std::string::npos);
  std::stringstream s(output.substr(at));
  std::string header, row;
  std::getline(s, header);
  std::getline(s, row);
  REQUIRE(fields(header).size() == fields(row).size());
  return row;
}

const char* kSmallConfig = R"({
  "seed": 3,
  "model": {"base_features": 2, "depth": 2},
  "train": {"max_epochs": 4, "eval_every": 2},
  "data": {"height": 32, "width": 32, "n_train": 3, "n_test": 2}
})";

}  // namespace

TEST_CASE("synth") {
  const auto a = fresh("synth_a"), b = fresh("synth_b");
  const Run r = cli("synth --n-train 1 --n-test 1 --seed 4 --out " + a.string());
  REQUIRE(r.code == 0);
  CHECK(r.out.find("effective config") != std::string::npos);
  const DatasetSplit data = load_dataset(a);
  CHECK(data.train.size() == 1);
  CHECK(data.test.size() == 1);

  REQUIRE(cli("synth --n-train 1 --n-test 1 --seed 4 --out " + b.string()).code == 0);
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    CHECK(slurp(entry.path()) == slurp(b / fs::relative(entry.path(), a)));
  }

  SUBCASE("defaults give the full split") {
    const auto d = fresh("synth_default");
    REQUIRE(cli("synth --out " + d.string()).code == 0);
    const DatasetSplit full = load_dataset(d);
    CHECK(full.train.size() == 38);
    CHECK(full.test.size() == 32);
  }
}

TEST_CASE("usage errors exit with code 2") {
  const auto config = write_text("small.json", kSmallConfig);
  CHECK(cli("train --config " + config.string() + " --data " + (kRoot / "no_such_dir").string() + " --out " +
            (kRoot / "x.ckpt").string())
            .code == 2);
  CHECK(cli("train --bogus-flag").code == 2);
  CHECK(cli("").code == 2);
  const auto bad = write_text("bad.json", R"({"model": {"base_featurez": 4}})");
  CHECK(cli("synth --config " + bad.string() + " --out " + fresh("bad_synth").string()).code == 2);
  CHECK(cli("eval --ckpt " + (kRoot / "missing.ckpt").string() + " --data " + kRoot.string()).code == 2);
}

TEST_CASE("train, eval and infer on a small profile") {
  const auto config = write_text("small.json", kSmallConfig);
  const auto data = fresh("small_data");
  REQUIRE(cli("synth --config " + config.string() + " --out " + data.string()).code == 0);

  const auto ckpt = kRoot / "small.ckpt";
  const Run trained = cli("train --config " + config.string() + " --data " + data.string() + " --out " + ckpt.string());
  REQUIRE(trained.code == 0);
  CHECK(trained.out.find("effective config") != std::string::npos);
  CHECK(fs::exists(kRoot / "small.ckpt.history.csv"));
  const double recorded = number_after(trained.out, "eval dsc");

  SUBCASE("eval of the written checkpoint reproduces the recorded DSC") {
    const Run r = cli("eval --ckpt " + ckpt.string() + " --data " + data.string());
    REQUIRE(r.code == 0);
    CHECK(std::abs(number_after(r.out, "\ndsc") - recorded) <= 1e-9);
    CHECK(std::abs(number_after(r.out, "recorded eval dsc") - recorded) <= 1e-9);
  }
  SUBCASE("alpha changes only the total error column") {
    const Run ten = cli("eval --ckpt " + ckpt.string() + " --data " + data.string() + " --split train");
    const Run one = cli("eval --ckpt " + ckpt.string() + " --data " + data.string() + " --split train --alpha 1");
    REQUIRE(ten.code == 0);
    REQUIRE(one.code == 0);
    const auto a = fields(csv_row(ten.out)), b = fields(csv_row(one.out));
    REQUIRE(a.size() == 12);
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (i == 2 || i == 6) continue;  // alpha, total_error
      CHECK(a[i] == b[i]);
    }
    CHECK(a[2] != b[2]);
  }
  SUBCASE("class may be given by name or index") {
    const Run by_name = cli("eval --ckpt " + ckpt.string() + " --data " + data.string() + " --class rivet");
    const Run by_index = cli("eval --ckpt " + ckpt.string() + " --data " + data.string() + " --class 3");
    CHECK(csv_row(by_name.out) == csv_row(by_index.out));
    CHECK(cli("eval --ckpt " + ckpt.string() + " --data " + data.string() + " --class rust").code == 2);
  }
  SUBCASE("infer writes a mask or an overlay of the input size and reports fps") {
    Image img(40, 50, 3);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 7);
    save_png(kRoot / "in.png", img);
    const Run mask = cli("infer --ckpt " + ckpt.string() + " --image " + (kRoot / "in.png").string() + " --out " +
                         (kRoot / "mask.png").string());
    REQUIRE(mask.code == 0);
    CHECK(number_after(mask.out, "fps:") > 0);
    const Image m = load_png(kRoot / "mask.png");
    CHECK(m.height == 40);
    CHECK(m.width == 50);
    CHECK(m.channels == 1);
    for (auto v : m.pixels) REQUIRE(v < 6);

    REQUIRE(cli("infer --overlay --ckpt " + ckpt.string() + " --image " + (kRoot / "in.png").string() + " --out " +
                (kRoot / "overlay.png").string())
                .code == 0);
    const Image o = load_png(kRoot / "overlay.png");
    CHECK(o.height == 40);
    CHECK(o.width == 50);
    CHECK(o.channels == 3);
  }
  SUBCASE("repeat runs are bitwise identical") {
    const auto again = kRoot / "small_again.ckpt";
    REQUIRE(cli("train --config " + config.string() + " --data " + data.string() + " --out " + again.string()).code == 0);
    CHECK(slurp(again) == slurp(ckpt));
    CHECK(slurp(kRoot / "small_again.ckpt.history.csv") == slurp(kRoot / "small.ckpt.history.csv"));
  }
}

TEST_CASE("eval of a perfect predictor prints 100%") {
  const UNet<double> model = testing::threshold_model();
  save_checkpoint(make_checkpoint(model, nullptr, 1, 1.0), kRoot / "oracle.ckpt");
  DatasetConfig config;
  config.synth.taxonomy.names = {"background", "target"};
  DatasetSplit data;
  data.train.push_back(testing::encoded_sample(16, 16, 1));
  data.test.push_back(testing::encoded_sample(16, 16, 2));
  const auto dir = fresh("oracle_data");
  save_dataset(data, config, dir);

  const Run r = cli("eval --ckpt " + (kRoot / "oracle.ckpt").string() + " --data " + dir.string() +
                    " --split train --class 1");
  REQUIRE(r.code == 0);
  CHECK(std::regex_search(r.out, std::regex("train\\s+100\\.0\\s+100\\.0\\s+100\\.0\\s+0\\.0")));
}

TEST_CASE("gradcheck") {
  const Run ok = cli("gradcheck --instances 3");
  CHECK(ok.code == 0);
  CHECK(ok.out.find("conv2d") != std::string::npos);
  CHECK(ok.out.find("PASS") != std::string::npos);
  CHECK(cli("gradcheck --instances 3 --seed 11").code == 0);
  const Run broken = cli("gradcheck --instances 3 --inject-fault");
  CHECK(broken.code == 1);
  CHECK(broken.out.find("FAIL") != std::string::npos);
}
