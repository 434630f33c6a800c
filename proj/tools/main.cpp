// Command-line front end: run/generate, flow analysis, and cost benchmarks.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hybridlm/cost.hpp"
#include "hybridlm/errors.hpp"
#include "hybridlm/flow.hpp"
#include "hybridlm/model.hpp"
#include "hybridlm/tome.hpp"
#include "hybridlm/transfer.hpp"

namespace {

using namespace hybridlm;

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::size_t frames = 4;
    std::size_t tokens_per_frame = 16;
    std::size_t system_tokens = 8;
    std::size_t instruction_tokens = 16;
    std::string schedule_text = "none";
    std::string input_jsonl;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path,
                    "Model config file (default: $HYBRIDLM_CONFIG or built-in)");
    cmd->add_option("--seed", args.seed, "Override the config seed");
    cmd->add_option("--frames", args.frames, "Number of synthetic frames");
    cmd->add_option("--tokens-per-frame", args.tokens_per_frame,
                    "Vision tokens per frame after projection");
    cmd->add_option("--system-tokens", args.system_tokens, "System span length (incl. BOS)");
    cmd->add_option("--instruction-tokens", args.instruction_tokens,
                    "Instruction span length");
    cmd->add_option("--schedule", args.schedule_text,
                    "Compression schedule, e.g. uni_2_0.5-attn_21_0.9, or 'none'");
    cmd->add_option("--input", args.input_jsonl,
                    "JSONL frame embeddings (merged down to --tokens-per-frame)");
}

ModelConfig load_config(const CommonArgs& args) {
    ModelConfig cfg;
    if (!args.config_path.empty()) {
        cfg = ModelConfig::from_file(args.config_path);
    } else if (const char* env = std::getenv("HYBRIDLM_CONFIG"); env != nullptr && *env) {
        cfg = ModelConfig::from_file(env);
    } else {
        cfg = ModelConfig::desk_default();
    }
    if (args.seed) cfg.seed = *args.seed;
    return cfg;
}

TokenSequence build_input(const Model& model, const CommonArgs& args) {
    if (args.input_jsonl.empty()) {
        return build_synthetic_sequence(model, args.frames, args.tokens_per_frame,
                                        args.system_tokens, args.instruction_tokens,
                                        model.config().seed);
    }
    // external embeddings: merge each frame down to the per-frame budget,
    // then assemble around the usual system/instruction scaffold
    std::vector<FrameTokens> frames = load_frames_jsonl(args.input_jsonl);
    const std::size_t d = model.config().hidden_dim;
    TokenSequence scaffold = build_synthetic_sequence(
        model, 0, 0, args.system_tokens, args.instruction_tokens, model.config().seed);

    std::size_t vis = 0;
    for (FrameTokens& f : frames) {
        if (f.tokens.cols() != d) {
            throw Error("input: token width " + std::to_string(f.tokens.cols()) +
                        " does not match hidden_dim " + std::to_string(d));
        }
        if (f.count() > args.tokens_per_frame) {
            f = tome_merge(f, args.tokens_per_frame);
        }
        vis += f.count();
    }

    TokenSequence seq;
    seq.embeddings = Matrix(scaffold.segments.total() + vis, d);
    std::size_t row = 0;
    for (std::size_t i = 0; i < args.system_tokens; ++i, ++row) {
        std::copy(scaffold.embeddings.row(i), scaffold.embeddings.row(i) + d,
                  seq.embeddings.row(row));
    }
    for (const FrameTokens& f : frames) {
        const std::size_t begin = row;
        for (std::size_t t = 0; t < f.count(); ++t, ++row) {
            std::copy(f.tokens.row(t), f.tokens.row(t) + d, seq.embeddings.row(row));
        }
        seq.segments.frames.push_back({begin, row});
    }
    for (std::size_t i = 0; i < args.instruction_tokens; ++i, ++row) {
        const std::size_t src = args.system_tokens + i;
        std::copy(scaffold.embeddings.row(src), scaffold.embeddings.row(src) + d,
                  seq.embeddings.row(row));
    }
    seq.segments.system = {0, args.system_tokens};
    seq.segments.vision = {args.system_tokens, args.system_tokens + vis};
    seq.segments.instruction = {args.system_tokens + vis, row};
    seq.segments.response = {row, row};
    return seq;
}

/// Appends `count` seeded response-token rows, for probing response-span flow.
TokenSequence with_response_tokens(const Model& model, const TokenSequence& seq,
                                   std::size_t count) {
    if (count == 0) return seq;
    Rng rng(model.config().seed ^ 0x5bd1e995u);
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < count; ++i) ids.push_back(rng.below(model.config().vocab));
    const Matrix emb = model.embed(ids);
    const std::size_t d = seq.embeddings.cols();

    TokenSequence out = seq;
    out.embeddings = Matrix(seq.segments.total() + count, d);
    for (std::size_t i = 0; i < seq.segments.total(); ++i) {
        std::copy(seq.embeddings.row(i), seq.embeddings.row(i) + d,
                  out.embeddings.row(i));
    }
    for (std::size_t i = 0; i < count; ++i) {
        std::copy(emb.row(i), emb.row(i) + d,
                  out.embeddings.row(seq.segments.total() + i));
    }
    out.segments.response = {seq.segments.total(), seq.segments.total() + count};
    return out;
}

void write_trace_csv(const std::string& path, const CaptureTrace& trace) {
    std::ofstream out(path);
    if (!out) throw Error("trace csv: cannot open '" + path + "'");
    out << "layer,kind,tokens_system,tokens_vision,tokens_instruction,"
           "tokens_response,tokens_total\n";
    for (std::size_t l = 0; l < trace.layers.size(); ++l) {
        const SegCounts& c = trace.layers[l].counts;
        out << l << ',' << layer_kind_name(trace.layers[l].kind) << ',' << c.system
            << ',' << c.vision << ',' << c.instruction << ',' << c.response << ','
            << c.total() << '\n';
    }
}

void write_decode_csv(const std::string& path, const GenerateResult& gen) {
    std::ofstream out(path);
    if (!out) throw Error("decode csv: cannot open '" + path + "'");
    out << "step,token_id,kv_rows_total,ssm_state_bytes\n";
    for (std::size_t s = 0; s < gen.steps.size(); ++s) {
        std::size_t kv_total = 0;
        for (std::size_t r : gen.steps[s].kv_rows) kv_total += r;
        out << s << ',' << gen.steps[s].token_id << ',' << kv_total << ','
            << gen.steps[s].ssm_state_bytes << '\n';
    }
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
    std::vector<std::size_t> out;
    std::string cur;
    for (char c : text + ",") {
        if (c == ',') {
            if (!cur.empty()) out.push_back(std::stoull(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    return out;
}

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    std::string cur;
    for (char c : text + ",") {
        if (c == ',') {
            if (!cur.empty()) out.push_back(std::stod(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    return out;
}

int cmd_run(const CommonArgs& common, std::size_t steps, const std::string& capture_dir) {
    const ModelConfig cfg = load_config(common);
    const Model model(cfg);
    const TokenSequence seq = build_input(model, common);
    const CompressionSchedule schedule = parse_schedule(common.schedule_text);

    ForwardOptions opts;
    if (!schedule.empty()) opts.schedule = &schedule;
    opts.strict = false;

    const GenerateResult gen = model.generate(seq, steps, opts);

    std::printf("tokens in: %zu  out: %zu  final length: %zu\n", seq.segments.total(),
                gen.tokens.size(), gen.prefill.trace.final_segments.total());
    std::printf("generated ids:");
    for (std::size_t id : gen.tokens) std::printf(" %zu", id);
    std::printf("\n");

    if (!capture_dir.empty()) {
        std::filesystem::create_directories(capture_dir);
        write_trace_csv(capture_dir + "/trace.csv", gen.prefill.trace);
        write_decode_csv(capture_dir + "/decode.csv", gen);
        std::printf("trace written to %s\n", capture_dir.c_str());
    }
    return 0;
}

int cmd_analyze_block(const CommonArgs& common, const std::string& mode_text,
                      std::size_t from_layer, std::optional<std::size_t> only_layer,
                      std::size_t response_tokens) {
    const ModelConfig cfg = load_config(common);
    const Model model(cfg);
    TokenSequence seq = build_input(model, common);
    seq = with_response_tokens(model, seq, response_tokens);

    BlockingConfig blocking;
    blocking.mode = mode_text == "v2r" ? BlockingConfig::Mode::V2R
                                       : BlockingConfig::Mode::V2I;
    blocking.start_layer = from_layer;
    blocking.only_layer = only_layer;

    const Span probe = blocking.mode == BlockingConfig::Mode::V2I
                           ? seq.segments.instruction
                           : seq.segments.response;
    const double blocked =
        perturbation_flow(model, seq, seq.segments.vision, probe, &blocking);
    const double open = perturbation_flow(model, seq, seq.segments.vision, probe);
    std::printf("mode %s from layer %zu: sensitivity %.6e (unblocked %.6e)\n",
                mode_text.c_str(), from_layer, blocked, open);
    return 0;
}

int cmd_analyze_scores(const CommonArgs& common, std::size_t layer, std::size_t head,
                       const std::string& out_dir) {
    const ModelConfig cfg = load_config(common);
    const Model model(cfg);
    const TokenSequence seq = build_input(model, common);

    ForwardOptions opts;
    opts.capture = true;
    const ForwardResult result = model.forward(seq, opts);

    const LayerKind kind = cfg.layers.at(layer).kind;
    const std::vector<ScoreMatrix> scores =
        kind == LayerKind::Attention ? extract_attention_scores(result.trace, layer)
                                     : extract_mamba_scores(result.trace, layer);
    if (head >= scores.size()) {
        throw Error("analyze scores: head " + std::to_string(head) + " out of range (" +
                    std::to_string(scores.size()) + " heads)");
    }

    std::filesystem::create_directories(out_dir);
    const std::string base = out_dir + "/scores_layer" + std::to_string(layer) +
                             "_head" + std::to_string(head);
    write_score_csv(base + ".csv", scores[head]);
    write_segments_sidecar(out_dir + "/segments.csv", result.trace.final_segments);
    std::printf("wrote %s.csv and %s/segments.csv\n", base.c_str(), out_dir.c_str());
    return 0;
}

int cmd_analyze_categories(const CommonArgs& common, const std::string& out_path) {
    const ModelConfig cfg = load_config(common);
    const Model model(cfg);
    const TokenSequence seq = build_input(model, common);

    ForwardOptions opts;
    opts.capture = true;
    const ForwardResult result = model.forward(seq, opts);

    std::ofstream out(out_path);
    if (!out) throw Error("categories: cannot open '" + out_path + "'");
    out << "layer,kind,source,target,value\n";
    char buf[64];
    for (const LayerSpec& spec : cfg.layers) {
        if (spec.kind == LayerKind::Mlp) continue;
        const std::vector<ScoreMatrix> scores =
            spec.kind == LayerKind::Attention
                ? extract_attention_scores(result.trace, spec.index)
                : extract_mamba_scores(result.trace, spec.index);
        const CategoryStats stats = category_attention(
            scores, result.trace.final_segments, spec.kind);
        for (std::size_t s = 0; s < 3; ++s) {
            for (std::size_t t = 0; t < 3; ++t) {
                out << spec.index << ',' << layer_kind_name(spec.kind) << ','
                    << category_name(static_cast<Category>(s)) << ','
                    << category_name(static_cast<Category>(t)) << ',';
                if (stats.pair[s][t]) {
                    std::snprintf(buf, sizeof(buf), "%.12g", *stats.pair[s][t]);
                    out << buf;
                }
                out << '\n';
            }
        }
        for (std::size_t t = 0; t < 3; ++t) {
            out << spec.index << ',' << layer_kind_name(spec.kind) << ",all,"
                << category_name(static_cast<Category>(t)) << ',';
            if (stats.overall[t]) {
                std::snprintf(buf, sizeof(buf), "%.12g", *stats.overall[t]);
                out << buf;
            }
            out << '\n';
        }
    }
    std::printf("wrote %s\n", out_path.c_str());
    return 0;
}

int cmd_analyze_sweep(const CommonArgs& common, const std::string& layers_text,
                      const std::string& rates_text, const std::string& mode_text,
                      const std::string& out_path) {
    const ModelConfig cfg = load_config(common);
    const Model model(cfg);
    const TokenSequence seq = build_input(model, common);

    const DropMode mode = mode_text == "attn" ? DropMode::Attention : DropMode::Uniform;
    const std::vector<SweepRow> rows = redundancy_sweep(
        model, seq, parse_size_list(layers_text), parse_double_list(rates_text), mode);
    write_sweep_csv(out_path, rows);
    std::printf("wrote %s (%zu rows)\n", out_path.c_str(), rows.size());
    return 0;
}

int cmd_bench_analytic(const CommonArgs& common, const std::string& out_path) {
    const ModelConfig cfg = load_config(common);
    const CompressionSchedule schedule = parse_schedule(common.schedule_text);
    const CostReport report = analytic_cost(cfg, common.frames, common.tokens_per_frame,
                                            schedule, common.system_tokens,
                                            common.instruction_tokens);
    std::printf("schedule %s: total %.6g MACs, peak kv rows %zu, ssm state %zu bytes\n",
                schedule_to_string(schedule).c_str(), report.total_macs,
                report.peak_kv_rows, report.ssm_state_bytes);
    if (!out_path.empty()) {
        write_cost_csv(out_path, report);
        std::printf("wrote %s\n", out_path.c_str());
    }
    return 0;
}

int cmd_bench_measure(const CommonArgs& common, const std::string& grid_text,
                      std::size_t repeats, const std::string& out_path) {
    const ModelConfig cfg = load_config(common);
    const CompressionSchedule schedule = parse_schedule(common.schedule_text);
    const std::vector<MeasureRow> rows =
        measured_scaling(cfg, parse_size_list(grid_text), common.tokens_per_frame,
                         schedule, repeats);
    if (!out_path.empty()) write_measure_csv(out_path, rows);
    for (const MeasureRow& r : rows) {
        std::printf("%zu frames (%zu tokens) [%s]: prefill %.3f ms, decode %.3f ms/step\n",
                    r.frames, r.total_tokens, r.variant.c_str(), r.median_prefill_ms,
                    r.mean_decode_step_ms);
    }
    if (!out_path.empty()) std::printf("wrote %s\n", out_path.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hybrid SSM/attention sequence model with in-model vision-token "
                 "compression, flow analysis, and cost accounting"};
    app.require_subcommand(1);

    CommonArgs run_args;
    std::size_t run_steps = 4;
    std::string run_capture;
    CLI::App* run = app.add_subcommand("run", "Run prefill + greedy decode");
    add_common(run, run_args);
    run->add_option("--steps", run_steps, "Decode steps")->check(CLI::PositiveNumber);
    run->add_option("--capture", run_capture, "Directory for trace/decode CSVs");

    CLI::App* analyze = app.add_subcommand("analyze", "Information-flow analysis");
    analyze->require_subcommand(1);

    CommonArgs block_args;
    std::string block_mode = "v2i";
    std::size_t block_from = 0;
    std::optional<std::size_t> block_only;
    std::size_t block_response = 4;
    CLI::App* block = analyze->add_subcommand("block", "Blocking-mask sensitivity probe");
    add_common(block, block_args);
    block->add_option("--mode", block_mode, "v2i or v2r")
        ->check(CLI::IsMember({"v2i", "v2r"}));
    block->add_option("--from-layer", block_from, "Mask all attention layers >= this");
    block->add_option("--only-layer", block_only, "Mask exactly this layer");
    block->add_option("--response-tokens", block_response,
                      "Seeded response tokens appended for probing");

    CommonArgs scores_args;
    std::size_t scores_layer = 0, scores_head = 0;
    std::string scores_out = "out";
    CLI::App* scores = analyze->add_subcommand("scores", "Export per-head score heatmap");
    add_common(scores, scores_args);
    scores->add_option("--layer", scores_layer, "Layer index")->required();
    scores->add_option("--head", scores_head, "Head index");
    scores->add_option("--out", scores_out, "Output directory");

    CommonArgs cat_args;
    std::string cat_out = "categories.csv";
    CLI::App* categories = analyze->add_subcommand("categories",
                                                   "Category-level mean scores");
    add_common(categories, cat_args);
    categories->add_option("--out", cat_out, "Output CSV");

    CommonArgs sweep_args;
    std::string sweep_layers = "0", sweep_rates = "0,0.5,1.0", sweep_mode = "uni",
                sweep_out = "sweep.csv";
    CLI::App* sweep = analyze->add_subcommand("sweep", "Drop-rate redundancy sweep");
    add_common(sweep, sweep_args);
    sweep->add_option("--layers", sweep_layers, "Comma-separated layer indices");
    sweep->add_option("--rates", sweep_rates, "Comma-separated drop rates");
    sweep->add_option("--mode", sweep_mode, "uni or attn")
        ->check(CLI::IsMember({"uni", "attn"}));
    sweep->add_option("--out", sweep_out, "Output CSV");

    CLI::App* bench = app.add_subcommand("bench", "Cost accounting and timing");
    bench->require_subcommand(1);

    CommonArgs analytic_args;
    std::string analytic_out;
    CLI::App* analytic = bench->add_subcommand("analytic", "Closed-form MAC/memory report");
    add_common(analytic, analytic_args);
    analytic->add_option("--out", analytic_out, "Output CSV");

    CommonArgs measure_args;
    std::string measure_grid = "64,128,256", measure_out;
    std::size_t measure_repeats = 5;
    CLI::App* measure = bench->add_subcommand("measure", "Wall-clock scaling over a grid");
    add_common(measure, measure_args);
    measure->add_option("--grid", measure_grid, "Comma-separated frame counts");
    measure->add_option("--repeats", measure_repeats, "Timing repeats (>= 3)")
        ->check(CLI::Range(static_cast<std::size_t>(3), static_cast<std::size_t>(1000)));
    measure->add_option("--out", measure_out, "Output CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (run->parsed()) return cmd_run(run_args, run_steps, run_capture);
        if (block->parsed()) {
            return cmd_analyze_block(block_args, block_mode, block_from, block_only,
                                     block_response);
        }
        if (scores->parsed()) {
            return cmd_analyze_scores(scores_args, scores_layer, scores_head, scores_out);
        }
        if (categories->parsed()) return cmd_analyze_categories(cat_args, cat_out);
        if (sweep->parsed()) {
            return cmd_analyze_sweep(sweep_args, sweep_layers, sweep_rates, sweep_mode,
                                     sweep_out);
        }
        if (analytic->parsed()) return cmd_bench_analytic(analytic_args, analytic_out);
        if (measure->parsed()) {
            return cmd_bench_measure(measure_args, measure_grid, measure_repeats,
                                     measure_out);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
