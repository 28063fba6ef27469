#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "dnp/checkpoint.hpp"
#include "dnp/xyz.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = dnp::cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dnp_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

const std::vector<std::string> kTiny = {"--features", "8", "--layers", "1", "--rbf", "6", "--head-hidden", "8"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// Shared small dataset: 2 molecules x 40 conformations.
const fs::path& dataset() {
  static const fs::path dir = [] {
    const fs::path d = scratch_dir("data");
    const Run r = run({"gen-data", "--out", d.string(), "--molecules", "2", "--confs", "40", "--seed", "5"});
    REQUIRE(r.code == 0);
    return d;
  }();
  static const fs::path file = dir / "dataset.xyz";
  return file;
}

}  // namespace

TEST_CASE("usage errors") {
  CHECK(run({}).code == dnp::cli::kUsage);
  CHECK(run({"frobnicate"}).code == dnp::cli::kUsage);
  CHECK(run({"gen-data", "--no-such-flag"}).code == dnp::cli::kUsage);
  CHECK(run({"--help"}).code == dnp::cli::kOk);
  CHECK(run({"pretrain", "--help"}).code == dnp::cli::kOk);
  const Run bad = run({"gen-data", "--out", scratch_dir("badnum").string(), "--confs", "abc"});
  CHECK(bad.code == dnp::cli::kUsage);
  CHECK(bad.err.find("data.confs") != std::string::npos);
}

TEST_CASE("gen-data writes dataset, manifest and resolved config") {
  const fs::path d = scratch_dir("gen");
  const Run r = run({"gen-data", "--out", d.string(), "--molecules", "2", "--confs", "10", "--seed", "3",
                     "--potential", "morse"});
  REQUIRE(r.code == 0);
  const auto data = dnp::read_xyz_file(d / "dataset.xyz");
  CHECK(data.size() == 20);
  for (const auto& c : data) CHECK(c.energy.has_value());
  const json m = read_json(d / "manifest.json");
  CHECK(m["n_conformations"] == 20);
  CHECK(m["potential"]["kind"] == "morse");
  CHECK(m["sampling"]["seed"] == 3);
  const std::string cfg = slurp(d / "config.txt");
  CHECK(cfg.find("data.confs = 10\n") != std::string::npos);
  CHECK(cfg.find("data.displacement = 0.05\n") != std::string::npos);
  CHECK(cfg.find("model.kind = invariant\n") != std::string::npos);

  SUBCASE("same seed gives identical bytes") {
    const fs::path d2 = scratch_dir("gen2");
    REQUIRE(run({"gen-data", "--out", d2.string(), "--molecules", "2", "--confs", "10", "--seed", "3",
                 "--potential", "morse"})
                .code == 0);
    CHECK(slurp(d / "dataset.xyz") == slurp(d2 / "dataset.xyz"));
  }
  SUBCASE("non-empty output directory needs --force") {
    const Run again = run({"gen-data", "--out", d.string(), "--molecules", "1", "--confs", "5"});
    CHECK(again.code == dnp::cli::kUsage);
    CHECK(again.err.find("--force") != std::string::npos);
    CHECK(run({"gen-data", "--out", d.string(), "--molecules", "1", "--confs", "5", "--force"}).code == 0);
    CHECK(dnp::read_xyz_file(d / "dataset.xyz").size() == 5);
  }
}

TEST_CASE("gen-data edge cases") {
  CHECK(run({"gen-data", "--out", scratch_dir("z").string(), "--confs", "0"}).code == dnp::cli::kUsage);
  CHECK(!fs::exists(scratch_dir("z") / "dataset.xyz"));
  CHECK(run({"gen-data", "--out", scratch_dir("p").string(), "--potential", "coulomb"}).code == dnp::cli::kUsage);
  CHECK(run({"gen-data", "--confs", "3"}).code == dnp::cli::kUsage);

  const fs::path w = scratch_dir("well");
  REQUIRE(run({"gen-data", "--out", w.string(), "--potential", "well", "--molecules", "1", "--confs", "30"}).code == 0);
  const auto data = dnp::read_xyz_file(w / "dataset.xyz");
  CHECK(data.size() == 30);
  CHECK(data[0].size() == 2);
  CHECK(read_json(w / "manifest.json")["potential"]["tau"] == doctest::Approx(0.15));
}

TEST_CASE("config file is closed and flags override it") {
  const fs::path dir = scratch_dir("cfg");
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "run.cfg");
    f << "# comment\n\ndata.molecules = 1\ndata.confs = 7   # trailing\nseed = 9\n";
  }
  const fs::path out = dir / "a";
  REQUIRE(run({"gen-data", "--config", (dir / "run.cfg").string(), "--out", out.string(), "--confs", "4"}).code == 0);
  CHECK(dnp::read_xyz_file(out / "dataset.xyz").size() == 4);
  const std::string cfg = slurp(out / "config.txt");
  CHECK(cfg.find("seed = 9\n") != std::string::npos);
  CHECK(cfg.find("data.confs = 4\n") != std::string::npos);

  {
    std::ofstream f(dir / "bad.cfg");
    f << "data.molecules = 1\nmodel.depth = 3\n";
  }
  const Run r = run({"gen-data", "--config", (dir / "bad.cfg").string(), "--out", (dir / "b").string()});
  CHECK(r.code == dnp::cli::kUsage);
  CHECK(r.err.find("model.depth") != std::string::npos);
  CHECK(r.err.find(":2:") != std::string::npos);

  {
    std::ofstream f(dir / "noeq.cfg");
    f << "seed 4\n";
  }
  CHECK(run({"gen-data", "--config", (dir / "noeq.cfg").string(), "--out", (dir / "c").string()}).code ==
        dnp::cli::kUsage);
  CHECK(run({"gen-data", "--config", (dir / "missing.cfg").string(), "--out", (dir / "d").string()}).code ==
        dnp::cli::kUsage);
}

TEST_CASE("pretrain, finetune and eval") {
  const fs::path p = scratch_dir("pre");
  const Run pr = run(with({"pretrain", "--data", dataset().string(), "--out", p.string(), "--epochs", "2",
                           "--batch-size", "16"},
                          kTiny));
  REQUIRE(pr.code == 0);
  const auto ck = dnp::load_checkpoint(p / "checkpoint.bin");
  CHECK(ck.config.feature_width == 8);
  CHECK(ck.config.n_layers == 1);
  const json s = read_json(p / "summary.json");
  CHECK(s["best_epoch"].get<int>() >= 1);
  CHECK(s["best_val_loss"].is_number());
  CHECK(s["warnings"].empty());
  CHECK(s["config"]["pretrain.epochs"] == "2");
  CHECK(slurp(p / "metrics.csv").rfind("step,epoch,split,metric,value\n", 0) == 0);

  SUBCASE("finetune requires exactly one start") {
    const std::vector<std::string> base = {"finetune", "--data", dataset().string(), "--epochs", "1"};
    CHECK(run(with(with(base, {"--out", scratch_dir("f0").string()}), kTiny)).code == dnp::cli::kUsage);
    CHECK(run(with(with(base, {"--out", scratch_dir("f1").string(), "--from-scratch", "--pretrained",
                               (p / "checkpoint.bin").string()}),
                   kTiny))
              .code == dnp::cli::kUsage);
  }
  SUBCASE("mismatched checkpoint") {
    const Run r = run({"finetune", "--data", dataset().string(), "--out", scratch_dir("fm").string(),
                       "--pretrained", (p / "checkpoint.bin").string(), "--epochs", "1"});
    CHECK(r.code == dnp::cli::kUsage);
    CHECK(r.err.find("F (8 vs 32)") != std::string::npos);
  }
  SUBCASE("finetune and eval agree") {
    const fs::path f = scratch_dir("ft");
    const Run r = run(with({"finetune", "--data", dataset().string(), "--out", f.string(), "--pretrained",
                            (p / "checkpoint.bin").string(), "--epochs", "2", "--batch-size", "16"},
                           kTiny));
    REQUIRE(r.code == 0);
    const json fs_ = read_json(f / "summary.json");
    CHECK(fs_["variant"] == "pretrained");
    CHECK(fs_["test_mae_kcal_mol"].is_number());
    CHECK(fs_["test_rmse_kcal_mol"].get<double>() >= fs_["test_mae_kcal_mol"].get<double>());
    CHECK(fs_["n_train"].get<int>() + fs_["n_val"].get<int>() + fs_["n_test"].get<int>() == 80);

    const Run e = run({"eval", "--checkpoint", (f / "checkpoint.bin").string(), "--data", dataset().string()});
    REQUIRE(e.code == 0);
    CHECK(e.out.find("rmse_kcal_mol") != std::string::npos);
    CHECK(e.out.find("mae_kcal_mol") != std::string::npos);
  }
  SUBCASE("scratch variant") {
    const fs::path f = scratch_dir("fs");
    REQUIRE(run(with({"finetune", "--data", dataset().string(), "--out", f.string(), "--from-scratch", "--epochs",
                      "1"},
                     kTiny))
                .code == 0);
    CHECK(read_json(f / "summary.json")["variant"] == "scratch");
  }
  SUBCASE("repeated runs give identical outputs") {
    const std::vector<std::string> args = with({"finetune", "--data", dataset().string(), "--pretrained",
                                                (p / "checkpoint.bin").string(), "--epochs", "1", "--seed", "3"},
                                               kTiny);
    const fs::path a = scratch_dir("rep_a"), b = scratch_dir("rep_a");
    REQUIRE(run(with(args, {"--out", a.string()})).code == 0);
    const std::string summary = slurp(a / "summary.json");
    const std::string ck_bytes = slurp(a / "checkpoint.bin");
    const std::string metrics = slurp(a / "metrics.csv");
    REQUIRE(run(with(args, {"--out", b.string(), "--force"})).code == 0);
    CHECK(slurp(b / "summary.json") == summary);
    CHECK(slurp(b / "checkpoint.bin") == ck_bytes);
    CHECK(slurp(b / "metrics.csv") == metrics);
  }
}

TEST_CASE("pretrain warnings and failures") {
  const fs::path p = scratch_dir("sigma0");
  const Run r = run(with({"pretrain", "--data", dataset().string(), "--out", p.string(), "--epochs", "1",
                          "--sigma", "0"},
                         kTiny));
  REQUIRE(r.code == 0);
  CHECK(read_json(p / "summary.json")["warnings"].size() == 1);
  CHECK(r.err.find("degenerate") != std::string::npos);

  const Run d = run(with({"pretrain", "--data", dataset().string(), "--out", scratch_dir("div").string(),
                          "--epochs", "1", "--sigma", "1e300"},
                         kTiny));
  CHECK(d.code == dnp::cli::kDiverged);
  CHECK(d.err.find("step 1") != std::string::npos);

  CHECK(run({"pretrain", "--data", "/nonexistent/file.xyz", "--out", scratch_dir("nx").string()}).code ==
        dnp::cli::kUsage);
  CHECK(run({"pretrain", "--data", dataset().string(), "--out", scratch_dir("neg").string(), "--sigma", "-1"})
            .code == dnp::cli::kUsage);
}

TEST_CASE("check") {
  const Run ok = run({"check", "--features", "8", "--layers", "2"});
  CHECK(ok.code == dnp::cli::kOk);
  CHECK(ok.out.find("FAIL") == std::string::npos);
  CHECK(ok.out.find("energy_rotation_max_abs_dE") != std::string::npos);

  const Run eq = run({"check", "--features", "8", "--layers", "2", "--kind", "equivariant"});
  CHECK(eq.code == dnp::cli::kOk);

  const Run bad = run({"check", "--features", "8", "--layers", "2", "--corrupt"});
  CHECK(bad.code == dnp::cli::kCheckFailed);
  CHECK(bad.out.find("FAIL energy_gradient_rel_err") != std::string::npos);
}

TEST_CASE("ablate-sigma and sweep-data") {
  const fs::path a = scratch_dir("ablate");
  const Run r = run(with({"ablate-sigma", "--pretrain-data", dataset().string(), "--data", dataset().string(),
                          "--out", a.string(), "--sigmas", "0.2,0,0.2", "--seeds", "1,2", "--pretrain-epochs", "1",
                          "--epochs", "1"},
                         kTiny));
  REQUIRE(r.code == 0);
  const std::string csv = slurp(a / "sigma_ablation.csv");
  CHECK(csv.rfind("sigma,seed,test_rmse,test_mae\n", 0) == 0);
  CHECK(line_count(csv) == 1 + 2 * 2);
  CHECK(read_json(a / "summary.json")["results"].size() == 2);

  const fs::path p = scratch_dir("sweep_pre");
  REQUIRE(run(with({"pretrain", "--data", dataset().string(), "--out", p.string(), "--epochs", "1"}, kTiny)).code ==
          0);
  const fs::path s = scratch_dir("sweep");
  const Run sw = run(with({"sweep-data", "--pretrained", (p / "checkpoint.bin").string(), "--data",
                           dataset().string(), "--out", s.string(), "--fractions", "1.0,0.5", "--seeds", "4",
                           "--epochs", "1"},
                          kTiny));
  REQUIRE(sw.code == 0);
  const std::string scsv = slurp(s / "data_efficiency.csv");
  CHECK(scsv.rfind("fraction,seed,variant,test_mae,test_rmse\n", 0) == 0);
  CHECK(line_count(scsv) == 1 + 2 * 2);
  CHECK(scsv.find("0.5,4,pretrained,") != std::string::npos);
}
