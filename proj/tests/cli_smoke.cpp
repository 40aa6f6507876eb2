// End-to-end exercise of the CLI: a tiny phantom dataset flows through
// every subcommand, artifacts are re-generated to confirm byte-identical
// reproducibility, and error paths return nonzero exits.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

std::string g_cli;
int g_failures = 0;

void check(bool ok, const std::string& what) {
    std::printf("[%s] %s\n", ok ? "PASS" : "FAIL", what.c_str());
    if (!ok) ++g_failures;
}

int run(const std::string& args) {
    const std::string cmd = g_cli + " " + args;
    const int rc = std::system(cmd.c_str());
    return rc == -1 ? -1 : WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

} // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: cli_smoke <triplanar-binary>\n");
        return 2;
    }
    g_cli = argv[1];
    const fs::path work = fs::temp_directory_path() / "triplanar_cli_smoke";
    fs::remove_all(work);
    fs::create_directories(work);
    const std::string w = work.string();

    check(run("phantom-gen --out " + w + "/data --seed 11 --train 3 --val 1 --test 2") == 0,
          "phantom-gen exits 0");
    check(fs::exists(work / "data/manifest.csv"), "manifest written");
    int vol_count = 0;
    for (auto& e : fs::directory_iterator(work / "data/vols")) {
        (void)e;
        ++vol_count;
    }
    check(vol_count == 36, "6 classes x 6 volumes generated");

    const std::string common =
        " --manifest " + w + "/data/manifest.csv --volumes " + w + "/data";

    check(run("extract" + common + " --out " + w + "/train.tpst --seed 3 --target 4 --cap 24") == 0,
          "extract exits 0");
    check(fs::exists(work / "train.tpst.run.txt"), "extract echoes its run config");

    // reproducibility: identical config and seed, identical bytes
    check(run("extract" + common + " --out " + w + "/train2.tpst --seed 3 --target 4 --cap 24") ==
              0,
          "second extract exits 0");
    check(slurp(work / "train.tpst") == slurp(work / "train2.tpst"),
          "re-extraction is byte-identical");

    check(run("train" + common + " --store " + w + "/train.tpst --out " + w +
              "/model.tpln --seed 5 --scales 10,20,40 --profile desk --epochs 1 --batch 32 "
              "--val-fusion 2") == 0,
          "train exits 0");
    check(fs::exists(work / "model.tpln.log.csv"), "training log written");

    check(run("evaluate --model " + w + "/model.tpln" + common + " --split test --n 2 --report " +
              w + "/eval.txt") == 0,
          "evaluate exits 0");
    check(fs::exists(work / "eval.txt.kv"), "machine-readable report written");
    check(run("evaluate --model " + w + "/model.tpln" + common + " --split test --n 2 --report " +
              w + "/eval2.txt") == 0,
          "second evaluate exits 0");
    check(slurp(work / "eval.txt") == slurp(work / "eval2.txt"),
          "evaluation reports are byte-identical");

    check(run("predict --model " + w + "/model.tpln" + common + " --split test --n 2 --out " + w +
              "/preds.csv") == 0,
          "predict exits 0");
    {
        std::ifstream is(work / "preds.csv");
        std::string line;
        int rows = 0;
        while (std::getline(is, line))
            if (!line.empty() && line[0] != '#') ++rows;
        check(rows == 12, "one prediction row per test nodule");
    }

    check(run("baseline-svm" + common + " --store " + w + "/train.tpst --out " + w +
              "/svm.tpsv --report " + w + "/svm.txt --split test --n 3 --seed 7") == 0,
          "baseline-svm exits 0");
    check(fs::exists(work / "svm.tpsv"), "svm model written");

    check(run("baseline-kmeans" + common + " --store " + w + "/train.tpst --codebook-out " + w +
              "/cb.tpkm --svm-out " + w + "/ksvm.tpsv --report " + w +
              "/kmeans.txt --split test --n 2 --centroids 64 --windows 5000 --seed 9") == 0,
          "baseline-kmeans exits 0");
    check(fs::exists(work / "cb.tpkm"), "codebook written");

    check(run("embed --model " + w + "/model.tpln" + common + " --split test --out " + w +
              "/emb.csv --svg " + w + "/emb.svg --perplexity 3 --iters 350 --seed 13") == 0,
          "embed exits 0");
    check(fs::exists(work / "emb.svg"), "svg scatter written");

    // kappa from two label files
    {
        std::ofstream a(work / "a.labels"), b(work / "b.labels");
        const char* names[6] = {"solid",     "calcified",    "part-solid",
                                "non-solid", "perifissural", "spiculated"};
        for (int i = 0; i < 24; ++i) {
            a << "n" << i << "," << names[i % 6] << "\n";
            b << "n" << i << "," << (i % 5 == 0 ? "not_a_nodule" : names[i % 6]) << "\n";
        }
    }
    check(run("kappa --a " + w + "/a.labels --b " + w + "/b.labels --report " + w +
              "/kappa.txt") == 0,
          "kappa exits 0");
    check(slurp(work / "kappa.txt.kv").find("classes=7") != std::string::npos,
          "not-a-nodule activates 7-class mode");

    // error paths
    check(run("no-such-command 2>/dev/null") != 0, "unknown subcommand exits nonzero");
    check(run("evaluate --model nope.tpln 2>/dev/null") != 0, "missing flags exit nonzero");
    check(run("evaluate --model " + w + "/svm.tpsv" + common + " --report " + w +
              "/x.txt 2>/dev/null") != 0,
          "wrong magic exits nonzero");
    check(run("train" + common + " --store " + w + "/train.tpst --out " + w +
              "/m1.tpln --seed 5 --scales 40 2>/dev/null") != 0,
          "scale mismatch between store and --scales exits nonzero");

    std::printf("%s\n", g_failures == 0 ? "cli_smoke: all checks passed"
                                        : "cli_smoke: FAILURES PRESENT");
    return g_failures == 0 ? 0 : 1;
}
