#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out, err;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunResult run_cli(const std::string& args) {
    const std::string out_path = "cli_stdout.txt", err_path = "cli_stderr.txt";
    const std::string cmd = std::string(HYBRIDLM_CLI_PATH) + " " + args + " > " +
                            out_path + " 2> " + err_path;
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out_path);
    r.err = slurp(err_path);
    std::remove(out_path.c_str());
    std::remove(err_path.c_str());
    return r;
}

void write_attention_only_config(const std::string& path) {
    std::ofstream out(path);
    // single attention layer: with V2R blocking the instruction keys are raw
    // embeddings, so no vision information can reach response outputs at all
    out << "pattern = A\ninterleave_mlp = false\nhidden_dim = 16\n"
           "ssm_state = 4\nattn_heads = 2\nmamba_heads = 2\nvocab = 64\nseed = 5\n";
}

void write_toy_config(const std::string& path) {
    std::ofstream out(path);
    out << "pattern = MAM\ninterleave_mlp = true\nhidden_dim = 16\n"
           "ssm_state = 4\nattn_heads = 2\nmamba_heads = 2\nvocab = 64\nseed = 5\n";
}

}  // namespace

TEST_CASE("run with an empty schedule keeps token counts constant") {
    write_toy_config("cli_toy.cfg");
    const RunResult r = run_cli(
        "run --config cli_toy.cfg --frames 4 --tokens-per-frame 16 "
        "--schedule none --capture cli_run_out");
    CHECK(r.exit_code == 0);

    std::ifstream trace("cli_run_out/trace.csv");
    REQUIRE(trace.good());
    std::string line;
    std::getline(trace, line);
    CHECK(line ==
          "layer,kind,tokens_system,tokens_vision,tokens_instruction,"
          "tokens_response,tokens_total");
    std::string expected_total;
    while (std::getline(trace, line)) {
        const std::string total = line.substr(line.rfind(',') + 1);
        if (expected_total.empty()) expected_total = total;
        CHECK(total == expected_total);
    }
}

TEST_CASE("identical seeds produce byte-identical trace files") {
    write_toy_config("cli_toy.cfg");
    const std::string args =
        "run --config cli_toy.cfg --frames 2 --tokens-per-frame 4 --seed 7 ";
    CHECK(run_cli(args + "--capture cli_seed_a").exit_code == 0);
    CHECK(run_cli(args + "--capture cli_seed_b").exit_code == 0);
    CHECK(slurp("cli_seed_a/trace.csv") == slurp("cli_seed_b/trace.csv"));
    CHECK(slurp("cli_seed_a/decode.csv") == slurp("cli_seed_b/decode.csv"));
    CHECK_FALSE(slurp("cli_seed_a/trace.csv").empty());
}

TEST_CASE("out-of-range schedule layer exits 1 and names the layer") {
    write_toy_config("cli_toy.cfg");
    const RunResult r = run_cli(
        "run --config cli_toy.cfg --frames 2 --tokens-per-frame 4 "
        "--schedule uni_99_0.5");
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("99") != std::string::npos);
}

TEST_CASE("unknown flags and bad repeats are usage errors") {
    CHECK(run_cli("run --no-such-flag").exit_code == 2);
    CHECK(run_cli("bench measure --grid 64 --repeats 2").exit_code == 2);
    CHECK(run_cli("").exit_code == 2);  // missing subcommand
}

TEST_CASE("sweep CSV rate-zero rows report zero divergence") {
    write_toy_config("cli_toy.cfg");
    const RunResult r = run_cli(
        "analyze sweep --config cli_toy.cfg --frames 2 --tokens-per-frame 4 "
        "--layers 0,2 --rates 0,0.5,1.0 --out cli_sweep.csv");
    CHECK(r.exit_code == 0);

    std::ifstream csv("cli_sweep.csv");
    REQUIRE(csv.good());
    std::string line;
    std::getline(csv, line);
    CHECK(line ==
          "layer,rate,mode,divergence_logits,divergence_hidden,"
          "cosine_logits,cosine_hidden");
    std::size_t rows = 0;
    while (std::getline(csv, line)) {
        ++rows;
        if (line.find(",0,uni,") != std::string::npos) {
            CHECK(line.find(",0,uni,0,0,") != std::string::npos);
        }
    }
    CHECK(rows == 6);
}

TEST_CASE("v2r blocking on an attention-only toy reports near-zero sensitivity") {
    write_attention_only_config("cli_attn.cfg");
    const RunResult r = run_cli(
        "analyze block --config cli_attn.cfg --frames 2 --tokens-per-frame 4 "
        "--mode v2r --from-layer 0");
    CHECK(r.exit_code == 0);
    double sensitivity = 1.0;
    std::sscanf(r.out.c_str(), "mode v2r from layer 0: sensitivity %lf", &sensitivity);
    CHECK(sensitivity < 1e-8);
}

TEST_CASE("score export writes the heatmap and segment sidecar") {
    write_toy_config("cli_toy.cfg");
    const RunResult r = run_cli(
        "analyze scores --config cli_toy.cfg --frames 2 --tokens-per-frame 4 "
        "--layer 2 --head 0 --out cli_scores");
    CHECK(r.exit_code == 0);
    CHECK_FALSE(slurp("cli_scores/scores_layer2_head0.csv").empty());
    const std::string sidecar = slurp("cli_scores/segments.csv");
    CHECK(sidecar.find("segment,begin,end") == 0);
    CHECK(sidecar.find("vision,") != std::string::npos);
}

TEST_CASE("analytic bench with zero frames reports only text-token cost") {
    write_toy_config("cli_toy.cfg");
    const RunResult r = run_cli(
        "bench analytic --config cli_toy.cfg --frames 0 --system-tokens 8 "
        "--instruction-tokens 16 --out cli_cost.csv");
    CHECK(r.exit_code == 0);
    std::ifstream csv("cli_cost.csv");
    REQUIRE(csv.good());
    std::string line;
    std::getline(csv, line);  // header
    while (std::getline(csv, line)) {
        if (line.rfind("total,", 0) == 0) continue;
        // tokens column (third field) must equal 24: no vision contribution
        std::istringstream fields(line);
        std::string layer, kind, tokens;
        std::getline(fields, layer, ',');
        std::getline(fields, kind, ',');
        std::getline(fields, tokens, ',');
        CHECK(tokens == "24");
    }
}

TEST_CASE("categories export emits one row per (source, target) pair") {
    write_toy_config("cli_toy.cfg");
    const RunResult r = run_cli(
        "analyze categories --config cli_toy.cfg --frames 2 --tokens-per-frame 4 "
        "--out cli_categories.csv");
    CHECK(r.exit_code == 0);
    std::ifstream csv("cli_categories.csv");
    REQUIRE(csv.good());
    std::string line;
    std::getline(csv, line);
    CHECK(line == "layer,kind,source,target,value");
    std::size_t rows = 0;
    while (std::getline(csv, line)) ++rows;
    // 3 mixing layers (MAM) x (9 pairs + 3 overall rows)
    CHECK(rows == 36);
}
