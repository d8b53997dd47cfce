// Exit codes and surface behavior of the mamfsd binary (path injected by the
// build).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(MAMFSD_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("usage errors exit 1") {
    CHECK(run("") == 1);
    CHECK(run("gen-data") == 1);              // missing --out
    CHECK(run("no-such-command") == 1);
    CHECK(run("train --out /tmp/x") == 1);    // missing --data
}

TEST_CASE("data errors exit 2") {
    CHECK(run("train --data /nonexistent/dataset --out /tmp/mamfsd_cli_run") == 2);
    CHECK(run("eval --ckpt /nonexistent.ckpt --data /nonexistent") == 2);
}

TEST_CASE("gen-data then decode round trip exits 0") {
    const fs::path base = fs::temp_directory_path() / "mamfsd_cli_test";
    fs::remove_all(base);
    fs::create_directories(base);
    {
        std::ofstream spec(base / "gen.txt");
        spec << "G=4\ntrain=4\ndev=2\nlen_min=2\nlen_max=3\nres=24\n";
    }
    CHECK(run("gen-data --spec " + (base / "gen.txt").string() + " --out " + (base / "data").string() +
              " --seed 3") == 0);
    CHECK(fs::exists(base / "data" / "train" / "manifest.tsv"));
    // bad spec key is a data error
    {
        std::ofstream spec(base / "bad.txt");
        spec << "bogus=1\n";
    }
    CHECK(run("gen-data --spec " + (base / "bad.txt").string() + " --out " + (base / "d2").string()) == 2);
    fs::remove_all(base);
}
