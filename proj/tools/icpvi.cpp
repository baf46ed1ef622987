#include <cstdint>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "icpvi/icpvi.hpp"

namespace {

int cmd_score(const std::string& config_path, const std::optional<std::string>& model_override,
              const std::optional<std::string>& output_override,
              const std::optional<std::string>& cache_override, const std::optional<std::size_t>& head_override,
              const std::vector<std::uint64_t>& seeds_override, const std::vector<std::size_t>& shots_override,
              const std::optional<std::string>& exemplar_override, bool balanced_override) {
    icpvi::ExperimentConfig cfg = icpvi::load_experiment_config(config_path);
    if (model_override) cfg.model_id = *model_override;
    if (output_override) cfg.output_dir = *output_override;
    if (cache_override) cfg.cache_dir = *cache_override;
    if (head_override) cfg.head_limit = *head_override;
    if (!seeds_override.empty()) cfg.seeds = seeds_override;
    if (!shots_override.empty()) cfg.shot_counts = shots_override;
    if (exemplar_override) cfg.exemplar_file = *exemplar_override;
    if (balanced_override) cfg.balanced = true;

    const icpvi::ScoreCommandResult result = icpvi::run_score(cfg);
    for (const auto& cell : result.cells) {
        if (cell.ok) {
            std::cout << "ok      " << cell.run_dir << "\n";
        } else {
            std::cout << "FAILED  " << cell.run_dir << ": " << cell.error << "\n";
        }
    }
    std::cout << "backend calls: " << result.upstream_calls << "\n";
    return result.all_ok() ? 0 : 1;
}

int cmd_analyze(const std::vector<std::string>& run_dirs, const std::string& analyses_csv, std::size_t bins,
                const std::optional<std::string>& dataset_config, const std::string& output_dir,
                bool include_floored) {
    icpvi::AnalyzeRequest req;
    req.run_dirs = run_dirs;
    for (const auto& a : icpvi::detail::split(analyses_csv, ",")) {
        const std::string name(icpvi::detail::trim(a));
        if (!name.empty()) req.analyses.insert(name);
    }
    req.bins = bins;
    if (dataset_config) req.dataset = icpvi::load_dataset_spec(*dataset_config);
    req.output_dir = output_dir;
    req.include_floored = include_floored;

    const icpvi::AnalyzeResult result = icpvi::run_analyze(req);
    for (const auto& file : result.written_files) std::cout << "wrote   " << file << "\n";
    return 0;
}

int cmd_select(const std::string& run_dir, const std::string& dataset_config, std::size_t per_label,
               const std::string& out_path, const std::optional<std::string>& ranking_csv) {
    icpvi::SelectRequest req;
    req.run_dir = run_dir;
    req.dataset = icpvi::load_dataset_spec(dataset_config);
    req.per_label = per_label;
    req.out_path = out_path;
    req.ranking_csv = ranking_csv;
    icpvi::run_select(req);
    std::cout << "wrote   " << out_path << "\n";
    if (ranking_csv) std::cout << "wrote   " << *ranking_csv << "\n";
    return 0;
}

int cmd_cache_inspect(const std::string& cache_dir, bool verbose) {
    icpvi::FileCache cache(cache_dir);
    const auto records = cache.records();
    std::cout << "entries: " << records.size() << "\n";
    if (verbose) {
        for (const auto& rec : records) {
            std::cout << rec.at("key").get<std::string>().substr(0, 12) << "  model="
                      << rec.at("model_id").get<std::string>() << "  token="
                      << rec.at("target_token").get<std::string>() << "  logprob_nat="
                      << rec.at("logprob_nat").get<double>() << "\n";
        }
    }
    return 0;
}

int cmd_cache_clear(const std::string& cache_dir) {
    icpvi::FileCache cache(cache_dir);
    std::cout << "removed " << cache.clear() << " entries\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Instance hardness estimation for labeled classification datasets via "
                 "in-context pointwise V-usable information"};
    app.require_subcommand(1);

    // score
    std::string score_config;
    std::optional<std::string> score_model, score_output, score_cache, score_exemplars;
    std::optional<std::size_t> score_head;
    std::vector<std::uint64_t> score_seeds;
    std::vector<std::size_t> score_shots;
    bool score_balanced = false;
    auto* score = app.add_subcommand("score", "Score a dataset over the (seeds x shots) grid");
    score->add_option("--config", score_config, "Experiment config JSON")->required();
    score->add_option("--model", score_model, "Override model id");
    score->add_option("--output-dir", score_output, "Override output directory");
    score->add_option("--cache-dir", score_cache, "Override cache directory ('' disables caching)");
    score->add_option("--head", score_head, "Truncate the test split to the first N instances");
    score->add_option("--seeds", score_seeds, "Override exemplar seeds")->delimiter(',');
    score->add_option("--shots", score_shots, "Override shot counts")->delimiter(',');
    score->add_option("--exemplar-file", score_exemplars, "Use a fixed exemplar set from this file");
    score->add_flag("--balanced", score_balanced, "Force label-balanced exemplar sampling");

    // analyze
    std::vector<std::string> analyze_dirs;
    std::string analyze_analyses = "strata,histogram";
    std::size_t analyze_bins = 20;
    std::optional<std::string> analyze_dataset;
    std::string analyze_output;
    bool analyze_include_floored = false;
    auto* analyze = app.add_subcommand("analyze", "Produce reports from one or more scoring runs");
    analyze->add_option("--run-dir", analyze_dirs, "Run directory (repeatable)")->required();
    analyze->add_option("--analyses", analyze_analyses,
                        "Comma list of strata,histogram,consistency,anova,agreement");
    analyze->add_option("--bins", analyze_bins, "Histogram bin count");
    analyze->add_option("--dataset-config", analyze_dataset,
                        "Dataset spec JSON (or experiment config); required for agreement");
    analyze->add_option("--output-dir", analyze_output, "Where reports go (default <run>/analysis)");
    analyze->add_flag("--include-floored", analyze_include_floored,
                      "Keep floored records in correlation statistics");

    // select
    std::string select_run, select_dataset, select_out;
    std::size_t select_per_label = 1;
    std::optional<std::string> select_ranking;
    auto* select = app.add_subcommand("select", "Select the hardest training instances as exemplars");
    select->add_option("--run-dir", select_run, "Scoring run over the training split")->required();
    select->add_option("--dataset-config", select_dataset,
                       "Dataset spec JSON whose training split holds the scored instances")
        ->required();
    select->add_option("--per-label", select_per_label, "Exemplars per label");
    select->add_option("--out", select_out, "Output exemplar file")->required();
    select->add_option("--ranking-csv", select_ranking, "Also write the full hardness ranking CSV");

    // cache
    auto* cache = app.add_subcommand("cache", "Inspect or clear the score cache");
    cache->require_subcommand(1);
    std::string cache_dir;
    bool cache_verbose = false;
    auto* cache_inspect = cache->add_subcommand("inspect", "Show cache contents");
    cache_inspect->add_option("--cache-dir", cache_dir, "Cache directory")->required();
    cache_inspect->add_flag("--verbose", cache_verbose, "List every entry");
    auto* cache_clear = cache->add_subcommand("clear", "Remove all cache entries");
    cache_clear->add_option("--cache-dir", cache_dir, "Cache directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (score->parsed()) {
            return cmd_score(score_config, score_model, score_output, score_cache, score_head, score_seeds,
                             score_shots, score_exemplars, score_balanced);
        }
        if (analyze->parsed()) {
            return cmd_analyze(analyze_dirs, analyze_analyses, analyze_bins, analyze_dataset, analyze_output,
                               analyze_include_floored);
        }
        if (select->parsed()) {
            return cmd_select(select_run, select_dataset, select_per_label, select_out, select_ranking);
        }
        if (cache->parsed()) {
            if (cache_inspect->parsed()) return cmd_cache_inspect(cache_dir, cache_verbose);
            if (cache_clear->parsed()) return cmd_cache_clear(cache_dir);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
