#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

// End-to-end checks of the installed command surface. CTest exports the
// binary location as HYOLO_BIN; without it these cases are skipped.

namespace fs = std::filesystem;

namespace {

const char* binary() { return std::getenv("HYOLO_BIN"); }

int run(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(binary()) + " " + args + " > " + log.string() + " 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("validate-tax distinguishes clean files from cycles") {
    if (!binary()) return;
    TempDir dir("hyolo_cli_tax");
    std::ofstream(dir.path / "ok.txt") << "depth=2 pad=false\nROOT > a\na > b\n";
    std::ofstream(dir.path / "cycle.txt")
        << "depth=2 pad=false\na > b\nb > a\nROOT > a\n";
    CHECK(run("validate-tax " + (dir.path / "ok.txt").string(), dir.path / "ok.log") == 0);
    CHECK(run("validate-tax " + (dir.path / "cycle.txt").string(), dir.path / "cyc.log") == 3);
    CHECK(slurp(dir.path / "cyc.log").find("cycle") != std::string::npos);
}

TEST_CASE("gen-data rejects an out-of-range occlusion cap by key name") {
    if (!binary()) return;
    TempDir dir("hyolo_cli_occ");
    std::ofstream(dir.path / "bad.cfg") << "occlusion=1.5\n";
    const int rc = run("gen-data --config " + (dir.path / "bad.cfg").string() + " --out " +
                           (dir.path / "out").string(),
                       dir.path / "log");
    CHECK(rc == 2);
    CHECK(slurp(dir.path / "log").find("occlusion") != std::string::npos);
}

TEST_CASE("gen-data is deterministic and honors the requested depth") {
    if (!binary()) return;
    TempDir dir("hyolo_cli_gen");
    std::ofstream(dir.path / "gen.cfg") << "hier_depth=3\nimgsz=64\nobjects=3\n"
                                            "scenes_train=3\nscenes_val=1\nscenes_test=1\n"
                                            "seed=5\n";
    const std::string cfg = (dir.path / "gen.cfg").string();
    REQUIRE(run("gen-data --config " + cfg + " --out " + (dir.path / "a").string(),
                dir.path / "a.log") == 0);
    REQUIRE(run("gen-data --config " + cfg + " --out " + (dir.path / "b").string(),
                dir.path / "b.log") == 0);

    CHECK(slurp(dir.path / "a" / "taxonomy.txt").find("depth=3") == 0);
    for (auto it = fs::recursive_directory_iterator(dir.path / "a");
         it != fs::recursive_directory_iterator(); ++it) {
        if (!it->is_regular_file()) continue;
        const auto rel = fs::relative(it->path(), dir.path / "a");
        CHECK(slurp(it->path()) == slurp(dir.path / "b" / rel));
    }
}

TEST_CASE("train writes the run artifacts and eval consumes the checkpoint") {
    if (!binary()) return;
    TempDir dir("hyolo_cli_train");
    std::ofstream(dir.path / "run.cfg")
        << "hier_depth=2\nimgsz=64\nobjects=3\nscenes_train=8\nscenes_val=4\n"
           "scenes_test=4\nepochs=2\nbatch=4\nwidth=8\nreg_max=4\nseed=5\n";
    const std::string cfg = (dir.path / "run.cfg").string();
    REQUIRE(run("gen-data --config " + cfg + " --out " + (dir.path / "data").string(),
                dir.path / "gen.log") == 0);
    REQUIRE(run("train --config " + cfg + " --data " + (dir.path / "data").string() +
                    " --out " + (dir.path / "run").string(),
                dir.path / "train.log") == 0);

    for (const char* f : {"config.txt", "loss.csv", "report.csv", "summary.txt", "model.ckpt"})
        CHECK(fs::exists(dir.path / "run" / f));

    // two epochs, two levels -> header + 4 rows
    std::istringstream loss(slurp(dir.path / "run" / "loss.csv"));
    std::string line;
    int rows = -1; // skip header
    while (std::getline(loss, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 4);

    REQUIRE(run("eval --checkpoint " + (dir.path / "run" / "model.ckpt").string() + " --data " +
                    (dir.path / "data").string() + " --split test --out " +
                    (dir.path / "eval").string(),
                dir.path / "eval.log") == 0);
    CHECK(fs::exists(dir.path / "eval" / "report.csv"));
    CHECK(fs::exists(dir.path / "eval" / "summary.txt"));
    CHECK(fs::exists(dir.path / "eval" / "dumps"));

    // report merges the run directory into one table
    REQUIRE(run("report --runs " + (dir.path / "run").string() + " --out " +
                    (dir.path / "merged.csv").string(),
                dir.path / "report.log") == 0);
    CHECK(slurp(dir.path / "merged.csv").find("hier_fbeta") != std::string::npos);
}

TEST_CASE("gradcheck subcommand reports a sound composite gradient") {
    if (!binary()) return;
    TempDir dir("hyolo_cli_gc");
    CHECK(run("gradcheck", dir.path / "log") == 0);
    CHECK(slurp(dir.path / "log").find("max rel err") != std::string::npos);
}

TEST_CASE("missing data directory exits with the data error code") {
    if (!binary()) return;
    TempDir dir("hyolo_cli_nodata");
    CHECK(run("train --data " + (dir.path / "nope").string() + " --out " +
                  (dir.path / "out").string(),
              dir.path / "log") == 3);
}
