#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "icpvi/backend.hpp"
#include "icpvi/dataset.hpp"
#include "icpvi/engine.hpp"
#include "icpvi/errors.hpp"
#include "icpvi/prompting.hpp"
#include "icpvi/run_io.hpp"
#include "icpvi/selection.hpp"
#include "icpvi/stats.hpp"

namespace icpvi {

struct DatasetSpec {
    std::string name;
    FileFormat format = FileFormat::jsonl;
    std::string test_path;
    std::optional<std::string> train_path;
    std::vector<std::string> field_names;
    std::string label_field = "label";
    std::optional<std::string> annotation_field;
    std::string id_field = "id";
    std::optional<std::vector<std::string>> label_order;
    std::string annotation_delimiter = "|";

    LoadOptions load_options() const {
        LoadOptions opts;
        opts.format = format;
        opts.field_names = field_names;
        opts.label_field = label_field;
        opts.annotation_field = annotation_field;
        opts.id_field = id_field;
        opts.label_order = label_order;
        opts.annotation_delimiter = annotation_delimiter;
        opts.dataset_name = name;
        return opts;
    }

    Dataset load() const { return load_dataset(test_path, train_path, load_options()); }
};

struct BackendSpec {
    std::string kind = "mock"; // "mock" | "remote"
    // mock
    std::string mock_mode = "table"; // "table" | "seeded"
    std::string fixture_path;
    std::uint64_t seed = 0;
    // remote
    std::string base_url;
    std::string endpoint_path = "/v1/completions";
    std::string api_key_env = "ICPVI_API_KEY";
    bool echo_scoring = false;
    int max_attempts = 5;
    int initial_backoff_ms = 500;
    int timeout_sec = 60;
    // shared
    int top_k = 5;
    std::size_t max_in_flight = 4;
    FloorPolicy floor_policy{};
};

struct ExperimentConfig {
    DatasetSpec dataset;
    std::string template_path;
    std::string template_id; // defaults to the template file stem
    std::string model_id;
    BackendSpec backend;
    std::optional<std::string> cache_dir; // unset -> <output_dir>/cache; empty -> caching disabled
    std::vector<std::uint64_t> seeds{1};
    std::vector<std::size_t> shot_counts; // empty -> default_shot_counts(...)
    std::size_t min_shots_floor = 0;      // 0 -> number of labels
    bool balanced = false;
    std::optional<std::size_t> head_limit;
    std::optional<std::string> exemplar_file;
    std::string output_dir = "out";
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                       const std::string& context) {
    for (const auto& [key, value] : j.items()) {
        if (!allowed.count(key)) {
            throw ConfigError(context + ": unknown key '" + key + "'");
        }
    }
}

template <typename T>
inline T get_or(const nlohmann::json& j, const std::string& key, T fallback) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    return j.at(key).get<T>();
}

} // namespace detail

inline DatasetSpec dataset_spec_from_json(const nlohmann::json& j) {
    detail::check_keys(j,
                       {"name", "format", "test_path", "train_path", "field_names", "label_field",
                        "annotation_field", "id_field", "label_order", "annotation_delimiter"},
                       "dataset");
    DatasetSpec spec;
    spec.name = detail::get_or<std::string>(j, "name", "dataset");
    spec.format = parse_file_format(detail::get_or<std::string>(j, "format", "jsonl"));
    if (!j.contains("test_path")) throw ConfigError("dataset: missing 'test_path'");
    spec.test_path = j.at("test_path").get<std::string>();
    if (j.contains("train_path") && !j.at("train_path").is_null()) {
        spec.train_path = j.at("train_path").get<std::string>();
    }
    if (!j.contains("field_names")) throw ConfigError("dataset: missing 'field_names'");
    spec.field_names = j.at("field_names").get<std::vector<std::string>>();
    spec.label_field = detail::get_or<std::string>(j, "label_field", "label");
    if (j.contains("annotation_field") && !j.at("annotation_field").is_null()) {
        spec.annotation_field = j.at("annotation_field").get<std::string>();
    }
    spec.id_field = detail::get_or<std::string>(j, "id_field", "id");
    if (j.contains("label_order") && !j.at("label_order").is_null()) {
        spec.label_order = j.at("label_order").get<std::vector<std::string>>();
    }
    spec.annotation_delimiter = detail::get_or<std::string>(j, "annotation_delimiter", "|");
    return spec;
}

inline BackendSpec backend_spec_from_json(const nlohmann::json& j) {
    detail::check_keys(j,
                       {"kind", "mode", "fixture", "seed", "base_url", "path", "api_key_env", "echo_scoring",
                        "max_attempts", "initial_backoff_ms", "timeout_sec", "top_k", "max_in_flight",
                        "floor_policy", "floor_logprob_nat"},
                       "backend");
    BackendSpec spec;
    spec.kind = detail::get_or<std::string>(j, "kind", "mock");
    if (spec.kind != "mock" && spec.kind != "remote") {
        throw ConfigError("backend: unknown kind '" + spec.kind + "' (expected mock or remote)");
    }
    spec.mock_mode = detail::get_or<std::string>(j, "mode", "table");
    if (spec.mock_mode != "table" && spec.mock_mode != "seeded") {
        throw ConfigError("backend: unknown mock mode '" + spec.mock_mode + "' (expected table or seeded)");
    }
    spec.fixture_path = detail::get_or<std::string>(j, "fixture", "");
    spec.seed = detail::get_or<std::uint64_t>(j, "seed", 0);
    spec.base_url = detail::get_or<std::string>(j, "base_url", "");
    spec.endpoint_path = detail::get_or<std::string>(j, "path", "/v1/completions");
    spec.api_key_env = detail::get_or<std::string>(j, "api_key_env", "ICPVI_API_KEY");
    spec.echo_scoring = detail::get_or<bool>(j, "echo_scoring", false);
    spec.max_attempts = detail::get_or<int>(j, "max_attempts", 5);
    spec.initial_backoff_ms = detail::get_or<int>(j, "initial_backoff_ms", 500);
    spec.timeout_sec = detail::get_or<int>(j, "timeout_sec", 60);
    spec.top_k = detail::get_or<int>(j, "top_k", 5);
    spec.max_in_flight = detail::get_or<std::size_t>(j, "max_in_flight", 4);
    const std::string floor_mode = detail::get_or<std::string>(j, "floor_policy", "fail");
    if (floor_mode == "fail") {
        spec.floor_policy.mode = FloorPolicy::Mode::fail;
    } else if (floor_mode == "floor") {
        spec.floor_policy.mode = FloorPolicy::Mode::floor;
    } else {
        throw ConfigError("backend: unknown floor_policy '" + floor_mode + "' (expected fail or floor)");
    }
    spec.floor_policy.floor_logprob_nat =
        detail::get_or<double>(j, "floor_logprob_nat", std::log(1e-10));
    return spec;
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
    detail::check_keys(j,
                       {"dataset", "template", "template_id", "model_id", "backend", "cache_dir", "seeds",
                        "shot_counts", "min_shots_floor", "balanced", "head", "exemplar_file", "output_dir"},
                       "config");
    ExperimentConfig cfg;
    if (!j.contains("dataset")) throw ConfigError("config: missing 'dataset' block");
    cfg.dataset = dataset_spec_from_json(j.at("dataset"));
    if (!j.contains("template")) throw ConfigError("config: missing 'template' path");
    cfg.template_path = j.at("template").get<std::string>();
    cfg.template_id = detail::get_or<std::string>(j, "template_id", "");
    if (!j.contains("model_id")) throw ConfigError("config: missing 'model_id'");
    cfg.model_id = j.at("model_id").get<std::string>();
    cfg.backend = j.contains("backend") ? backend_spec_from_json(j.at("backend")) : BackendSpec{};
    if (j.contains("cache_dir")) {
        cfg.cache_dir = j.at("cache_dir").is_null() ? std::optional<std::string>("")
                                                    : std::optional(j.at("cache_dir").get<std::string>());
    }
    cfg.seeds = detail::get_or<std::vector<std::uint64_t>>(j, "seeds", {1});
    cfg.shot_counts = detail::get_or<std::vector<std::size_t>>(j, "shot_counts", {});
    cfg.min_shots_floor = detail::get_or<std::size_t>(j, "min_shots_floor", 0);
    cfg.balanced = detail::get_or<bool>(j, "balanced", false);
    if (j.contains("head") && !j.at("head").is_null()) cfg.head_limit = j.at("head").get<std::size_t>();
    if (j.contains("exemplar_file") && !j.at("exemplar_file").is_null()) {
        cfg.exemplar_file = j.at("exemplar_file").get<std::string>();
    }
    cfg.output_dir = detail::get_or<std::string>(j, "output_dir", "out");
    if (cfg.seeds.empty()) throw ConfigError("config: 'seeds' must not be empty");
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    return experiment_config_from_json(read_json_file(path));
}

/// Accepts either a full experiment config (its "dataset" block is used) or a
/// bare dataset spec document.
inline DatasetSpec load_dataset_spec(const std::filesystem::path& path) {
    const nlohmann::json j = read_json_file(path);
    if (j.contains("dataset")) return dataset_spec_from_json(j.at("dataset"));
    return dataset_spec_from_json(j);
}

inline std::shared_ptr<Backend> make_backend(const BackendSpec& spec, const LabelSpace& space) {
    if (spec.kind == "remote") {
        RemoteOptions opts;
        opts.base_url = spec.base_url;
        opts.path = spec.endpoint_path;
        opts.api_key_env = spec.api_key_env;
        opts.echo_scoring = spec.echo_scoring;
        opts.max_attempts = spec.max_attempts;
        opts.initial_backoff_ms = spec.initial_backoff_ms;
        opts.timeout_sec = spec.timeout_sec;
        return std::make_shared<RemoteBackend>(opts);
    }
    if (spec.mock_mode == "seeded") {
        return std::make_shared<SeededMockBackend>(spec.seed, label_index_tokens(space));
    }
    if (spec.fixture_path.empty()) throw ConfigError("table mock backend needs a 'fixture' path");
    return std::make_shared<TableMockBackend>(TableMockBackend::parse_fixture(spec.fixture_path));
}

// ---------------------------------------------------------------------------
// Exemplar files (written by the select command, consumed by score)

inline void write_exemplar_file(const std::filesystem::path& path, const ExemplarSet& set) {
    nlohmann::ordered_json doc;
    doc["schema_version"] = 1;
    doc["kind"] = "exemplar_set";
    doc["seed"] = set.seed;
    doc["shots"] = set.shots;
    auto exemplars = nlohmann::ordered_json::array();
    for (const auto& inst : set.exemplars) {
        nlohmann::ordered_json e;
        e["id"] = inst.id;
        e["gold_label"] = inst.gold_label;
        auto fields = nlohmann::ordered_json::array();
        for (const auto& [name, value] : inst.fields) {
            fields.push_back(nlohmann::ordered_json::array({name, value}));
        }
        e["fields"] = std::move(fields);
        exemplars.push_back(std::move(e));
    }
    doc["exemplars"] = std::move(exemplars);
    write_json_file(path, doc);
}

/// Reads an exemplar file and resolves every id against the dataset's training
/// split, which stays authoritative for the instance content.
inline ExemplarSet read_exemplar_file(const std::filesystem::path& path, const Dataset& dataset) {
    const nlohmann::json doc = read_json_file(path);
    if (detail::get_or<std::string>(doc, "kind", "") != "exemplar_set") {
        throw LoadError(path.string() + ": not an exemplar_set document");
    }
    std::map<std::string_view, const Instance*> by_id;
    for (const auto& inst : dataset.train) by_id.emplace(inst.id, &inst);

    ExemplarSet set;
    set.seed = detail::get_or<std::uint64_t>(doc, "seed", 0);
    for (const auto& e : doc.at("exemplars")) {
        const std::string id = e.at("id").get<std::string>();
        const auto it = by_id.find(id);
        if (it == by_id.end()) {
            throw ValidationError(path.string() + ": exemplar '" + id + "' is not in the training split");
        }
        const std::string gold = e.at("gold_label").get<std::string>();
        if (gold != it->second->gold_label) {
            throw ValidationError(path.string() + ": exemplar '" + id + "' gold label '" + gold +
                                  "' disagrees with the training split ('" + it->second->gold_label + "')");
        }
        set.exemplars.push_back(*it->second);
    }
    set.shots = set.exemplars.size();
    if (set.exemplars.empty()) throw ValidationError(path.string() + ": exemplar file is empty");
    return set;
}

// ---------------------------------------------------------------------------
// score command

struct CellOutcome {
    std::size_t shots = 0;
    std::uint64_t seed = 0;
    bool fixed_exemplars = false;
    std::string run_dir;
    bool ok = false;
    std::string error;
};

struct ScoreCommandResult {
    std::vector<CellOutcome> cells;
    std::uint64_t upstream_calls = 0;

    bool all_ok() const {
        return std::all_of(cells.begin(), cells.end(), [](const CellOutcome& c) { return c.ok; });
    }
};

namespace detail {

inline std::string cell_dir_name(std::size_t shots, std::uint64_t seed, bool fixed) {
    return std::to_string(shots) + (fixed ? "shot_fixed" : "shot_seed" + std::to_string(seed));
}

inline nlohmann::ordered_json floor_policy_to_json(const FloorPolicy& p) {
    nlohmann::ordered_json j;
    j["mode"] = p.mode == FloorPolicy::Mode::floor ? "floor" : "fail";
    j["floor_logprob_nat"] = p.floor_logprob_nat;
    return j;
}

inline nlohmann::ordered_json backend_echo_json(const BackendSpec& spec) {
    nlohmann::ordered_json j;
    j["kind"] = spec.kind;
    if (spec.kind == "mock") {
        j["mode"] = spec.mock_mode;
        if (spec.mock_mode == "table") j["fixture"] = spec.fixture_path;
        if (spec.mock_mode == "seeded") j["seed"] = spec.seed;
    } else {
        j["base_url"] = spec.base_url;
        j["path"] = spec.endpoint_path;
        j["echo_scoring"] = spec.echo_scoring;
    }
    return j;
}

} // namespace detail

/// Runs the (seed x shots) grid: samples exemplars, scores every test
/// instance, and writes scores.jsonl + scores.csv + manifest.json per cell.
/// Cell failures are recorded and the remaining cells proceed.
inline ScoreCommandResult run_score(const ExperimentConfig& cfg) {
    Dataset dataset = cfg.dataset.load();
    if (cfg.head_limit) dataset = head(dataset, *cfg.head_limit);
    if (dataset.test.empty()) throw ValidationError("dataset '" + dataset.name + "' has no test instances");

    PromptTemplate tmpl = parse_template_file(cfg.template_path);
    if (!cfg.template_id.empty()) tmpl.id = cfg.template_id;
    tmpl.validate_against(dataset.label_space);

    const auto inner = make_backend(cfg.backend, dataset.label_space);
    std::shared_ptr<Backend> backend = inner;
    const std::string cache_dir = cfg.cache_dir ? *cfg.cache_dir : cfg.output_dir + "/cache";
    if (!cache_dir.empty()) {
        backend = std::make_shared<CachingBackend>(inner, std::make_shared<FileCache>(cache_dir));
    }
    const std::uint64_t calls_before = inner->upstream_calls();

    struct Cell {
        std::size_t shots;
        std::uint64_t seed;
        bool fixed;
    };
    std::vector<Cell> cells;
    if (cfg.exemplar_file) {
        const ExemplarSet set = read_exemplar_file(*cfg.exemplar_file, dataset);
        cells.push_back({set.shots, set.seed, true});
    } else {
        std::vector<std::size_t> shot_counts = cfg.shot_counts;
        if (shot_counts.empty()) shot_counts = default_shot_counts(dataset.label_space, cfg.min_shots_floor);
        for (const std::size_t shots : shot_counts) {
            for (const std::uint64_t seed : cfg.seeds) cells.push_back({shots, seed, false});
        }
    }

    const std::filesystem::path base = std::filesystem::path(cfg.output_dir) /
                                       detail::sanitize_path_component(dataset.name) /
                                       detail::sanitize_path_component(cfg.model_id);

    ScoreCommandResult result;
    for (const Cell& cell : cells) {
        CellOutcome outcome;
        outcome.shots = cell.shots;
        outcome.seed = cell.seed;
        outcome.fixed_exemplars = cell.fixed;
        const std::filesystem::path run_dir = base / detail::cell_dir_name(cell.shots, cell.seed, cell.fixed);
        outcome.run_dir = run_dir.string();
        try {
            const ExemplarSet exemplars = cell.fixed
                                              ? read_exemplar_file(*cfg.exemplar_file, dataset)
                                              : sample_exemplars(dataset, cell.shots, cell.seed, cfg.balanced);
            RunConfig run_cfg;
            run_cfg.dataset_name = dataset.name;
            run_cfg.model_id = cfg.model_id;
            run_cfg.shots = cell.shots;
            run_cfg.seed = cell.seed;
            run_cfg.template_id = tmpl.id;
            run_cfg.top_k = cfg.backend.top_k;
            run_cfg.floor_policy = cfg.backend.floor_policy;
            run_cfg.max_in_flight = cfg.backend.max_in_flight;

            const std::vector<ScoredInstance> scored = score_run(dataset, exemplars, tmpl, *backend, run_cfg);

            std::filesystem::create_directories(run_dir);
            const std::string jsonl = scores_to_jsonl(scored);
            detail::write_file_atomic(run_dir / "scores.jsonl", jsonl);
            write_scores_csv(run_dir / "scores.csv", scored);

            nlohmann::ordered_json manifest;
            manifest["schema_version"] = 1;
            nlohmann::ordered_json run;
            run["dataset"] = dataset.name;
            run["model_id"] = cfg.model_id;
            run["shots"] = cell.shots;
            run["seed"] = cell.seed;
            run["template_id"] = tmpl.id;
            run["balanced"] = cfg.balanced;
            run["head"] = cfg.head_limit ? nlohmann::ordered_json(*cfg.head_limit)
                                         : nlohmann::ordered_json(nullptr);
            run["exemplar_source"] = cell.fixed ? "file" : "sampled";
            run["top_k"] = cfg.backend.top_k;
            run["max_in_flight"] = cfg.backend.max_in_flight;
            run["floor_policy"] = detail::floor_policy_to_json(cfg.backend.floor_policy);
            run["backend"] = detail::backend_echo_json(cfg.backend);
            manifest["run"] = std::move(run);
            manifest["label_space"] = dataset.label_space.labels();
            auto exemplar_ids = nlohmann::ordered_json::array();
            for (const auto& ex : exemplars.exemplars) exemplar_ids.push_back(ex.id);
            manifest["exemplar_ids"] = std::move(exemplar_ids);
            nlohmann::ordered_json counts;
            counts["test"] = scored.size();
            counts["floored"] = std::count_if(scored.begin(), scored.end(),
                                              [](const ScoredInstance& s) { return s.floored; });
            manifest["counts"] = std::move(counts);
            manifest["scores_sha256"] = detail::sha256_hex(jsonl);
            write_json_file(run_dir / "manifest.json", manifest);

            outcome.ok = true;
        } catch (const std::exception& e) {
            outcome.ok = false;
            outcome.error = e.what();
        }
        result.cells.push_back(std::move(outcome));
    }
    result.upstream_calls = inner->upstream_calls() - calls_before;
    return result;
}

// ---------------------------------------------------------------------------
// analyze command

struct AnalyzeRequest {
    std::vector<std::string> run_dirs;
    std::set<std::string> analyses; // strata, histogram, consistency, anova, agreement
    std::size_t bins = 20;
    std::optional<DatasetSpec> dataset; // required for agreement
    std::string output_dir;             // empty -> <first run dir>/analysis
    bool include_floored = false;
};

struct AnalyzeResult {
    std::vector<std::string> written_files;
};

namespace detail {

struct LoadedRun {
    std::string label;
    std::string dir;
    std::string dataset;
    std::string model_id;
    std::vector<ScoredInstance> scored;
};

inline std::vector<LoadedRun> load_runs(const std::vector<std::string>& run_dirs) {
    if (run_dirs.empty()) throw ValidationError("analyze: no run directories given");
    std::vector<LoadedRun> runs;
    std::set<std::string> used_labels;
    for (const auto& dir : run_dirs) {
        LoadedRun run;
        run.dir = dir;
        run.scored = read_scores_jsonl(std::filesystem::path(dir) / "scores.jsonl");
        if (run.scored.empty()) throw ValidationError("analyze: run '" + dir + "' has no score records");
        const auto manifest_path = std::filesystem::path(dir) / "manifest.json";
        if (std::filesystem::exists(manifest_path)) {
            const auto manifest = read_json_file(manifest_path);
            const auto& r = manifest.at("run");
            run.label = cell_dir_name(r.at("shots").get<std::size_t>(), r.at("seed").get<std::uint64_t>(),
                                      r.at("exemplar_source").get<std::string>() == "file");
            run.dataset = r.at("dataset").get<std::string>();
            run.model_id = r.at("model_id").get<std::string>();
        } else {
            run.label = std::filesystem::path(dir).filename().string();
        }
        while (!used_labels.insert(run.label).second) run.label += "+";
        runs.push_back(std::move(run));
    }
    return runs;
}

/// Common instance order across runs: the first run's id order, with ids that
/// were floored in any run dropped (unless include_floored). Mismatched id
/// sets are an error naming the offenders.
inline std::vector<std::string> aligned_ids(const std::vector<LoadedRun>& runs, bool include_floored,
                                            std::size_t* excluded_floored) {
    std::set<std::string> floored_anywhere;
    std::vector<std::set<std::string>> id_sets(runs.size());
    for (std::size_t r = 0; r < runs.size(); ++r) {
        for (const auto& s : runs[r].scored) {
            if (!id_sets[r].insert(s.instance_id).second) {
                throw ValidationError("analyze: run '" + runs[r].label + "' repeats instance id '" +
                                      s.instance_id + "'");
            }
            if (s.floored) floored_anywhere.insert(s.instance_id);
        }
    }
    for (std::size_t r = 1; r < runs.size(); ++r) {
        if (id_sets[r] == id_sets[0]) continue;
        std::vector<std::string> offenders;
        std::set_symmetric_difference(id_sets[0].begin(), id_sets[0].end(), id_sets[r].begin(),
                                      id_sets[r].end(), std::back_inserter(offenders));
        std::string msg = "analyze: runs '" + runs[0].label + "' and '" + runs[r].label +
                          "' cover different instances:";
        for (std::size_t i = 0; i < offenders.size() && i < 10; ++i) msg += " '" + offenders[i] + "'";
        if (offenders.size() > 10) msg += " (+" + std::to_string(offenders.size() - 10) + " more)";
        throw ValidationError(msg);
    }

    std::vector<std::string> ids;
    std::size_t excluded = 0;
    for (const auto& s : runs[0].scored) {
        if (!include_floored && floored_anywhere.count(s.instance_id)) {
            ++excluded;
            continue;
        }
        ids.push_back(s.instance_id);
    }
    if (excluded_floored) *excluded_floored = excluded;
    if (ids.empty()) throw ValidationError("analyze: no instances left after excluding floored records");
    return ids;
}

inline std::vector<double> pvi_vector(const LoadedRun& run, const std::vector<std::string>& ids) {
    std::map<std::string_view, double> by_id;
    for (const auto& s : run.scored) by_id.emplace(s.instance_id, s.pvi_bits);
    std::vector<double> out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back(by_id.at(id));
    return out;
}

inline nlohmann::ordered_json correlation_to_json(const CorrelationResult& c) {
    nlohmann::ordered_json j;
    j["r"] = c.r;
    j["p_value"] = c.p_value ? nlohmann::ordered_json(*c.p_value) : nlohmann::ordered_json(nullptr);
    j["n"] = c.n;
    return j;
}

inline std::string optional_cell(const std::optional<double>& v) {
    return v ? format_double(*v) : "";
}

} // namespace detail

inline AnalyzeResult run_analyze(const AnalyzeRequest& req) {
    static const std::set<std::string> known{"strata", "histogram", "consistency", "anova", "agreement"};
    for (const auto& a : req.analyses) {
        if (!known.count(a)) throw ConfigError("analyze: unknown analysis '" + a + "'");
    }
    if (req.analyses.empty()) throw ConfigError("analyze: no analyses requested");

    const auto runs = detail::load_runs(req.run_dirs);
    const std::filesystem::path out_dir =
        req.output_dir.empty() ? std::filesystem::path(runs.front().dir) / "analysis"
                               : std::filesystem::path(req.output_dir);
    std::filesystem::create_directories(out_dir);

    AnalyzeResult result;
    auto emit = [&](const std::filesystem::path& path) { result.written_files.push_back(path.string()); };

    if (req.analyses.count("strata")) {
        for (const auto& run : runs) {
            const StrataReport report = strata_report(run.scored);
            nlohmann::ordered_json j;
            j["run"] = run.label;
            j["records"] = run.scored.size();
            j["accuracy"] = report.accuracy;
            j["mean_pvi_true"] = report.mean_pvi_true ? nlohmann::ordered_json(*report.mean_pvi_true)
                                                      : nlohmann::ordered_json(nullptr);
            j["mean_pvi_false"] = report.mean_pvi_false ? nlohmann::ordered_json(*report.mean_pvi_false)
                                                        : nlohmann::ordered_json(nullptr);
            auto strata = nlohmann::ordered_json::array();
            for (const auto& s : report.strata) {
                nlohmann::ordered_json e;
                e["q"] = s.q;
                e["size"] = s.size;
                e["acc_bottom"] = s.acc_bottom;
                e["acc_top"] = s.acc_top;
                e["gap"] = s.gap;
                strata.push_back(std::move(e));
            }
            j["strata"] = std::move(strata);
            const auto json_path = out_dir / ("strata_" + run.label + ".json");
            write_json_file(json_path, j);
            emit(json_path);

            const QuantileStratum* s20 = report.stratum(0.2);
            const QuantileStratum* s50 = report.stratum(0.5);
            std::string csv = "accuracy,acc_low_pvi,acc_high_pvi,mean_pvi_true,mean_pvi_false,gap_20,gap_50\n";
            csv += detail::format_double(report.accuracy) + "," +
                   (s20 ? detail::format_double(s20->acc_bottom) : "") + "," +
                   (s20 ? detail::format_double(s20->acc_top) : "") + "," +
                   detail::optional_cell(report.mean_pvi_true) + "," +
                   detail::optional_cell(report.mean_pvi_false) + "," +
                   (s20 ? detail::format_double(s20->gap) : "") + "," +
                   (s50 ? detail::format_double(s50->gap) : "") + "\n";
            const auto csv_path = out_dir / ("strata_" + run.label + ".csv");
            detail::write_file_atomic(csv_path, csv);
            emit(csv_path);
        }
    }

    if (req.analyses.count("histogram")) {
        for (const auto& run : runs) {
            const auto bins = histogram(run.scored, req.bins);
            std::string csv = "bin_left,bin_right,count_correct,count_incorrect\n";
            for (const auto& b : bins) {
                csv += detail::format_double(b.left) + "," + detail::format_double(b.right) + "," +
                       std::to_string(b.count_correct) + "," + std::to_string(b.count_incorrect) + "\n";
            }
            const auto path = out_dir / ("histogram_" + run.label + ".csv");
            detail::write_file_atomic(path, csv);
            emit(path);
        }
    }

    const bool cross_run = req.analyses.count("consistency") || req.analyses.count("anova");
    if (cross_run) {
        if (runs.size() < 2) throw ValidationError("analyze: consistency/anova need at least 2 runs");
        std::size_t excluded = 0;
        const auto ids = detail::aligned_ids(runs, req.include_floored, &excluded);

        std::vector<NamedPviRun> vectors;
        for (const auto& run : runs) vectors.push_back({run.label, detail::pvi_vector(run, ids)});

        if (req.analyses.count("consistency")) {
            const ConsistencyMatrix matrix = consistency_matrix(vectors);
            nlohmann::ordered_json j;
            j["runs"] = matrix.labels;
            j["aligned_instances"] = ids.size();
            j["excluded_floored"] = excluded;
            auto cells = nlohmann::ordered_json::array();
            for (const auto& row : matrix.cells) {
                auto jrow = nlohmann::ordered_json::array();
                for (const auto& cell : row) jrow.push_back(detail::correlation_to_json(cell));
                cells.push_back(std::move(jrow));
            }
            j["matrix"] = std::move(cells);
            nlohmann::ordered_json summary;
            summary["mean_r"] = matrix.summary.mean_r;
            summary["median_r"] = matrix.summary.median_r;
            summary["frac_r_above_0.6"] = matrix.summary.frac_above_0_6;
            summary["frac_r_below_0.3"] = matrix.summary.frac_below_0_3;
            summary["pairs"] = matrix.summary.pairs;
            j["summary"] = std::move(summary);
            const auto json_path = out_dir / "consistency.json";
            write_json_file(json_path, j);
            emit(json_path);

            std::string csv = "run";
            for (const auto& label : matrix.labels) csv += "," + detail::csv_escape(label);
            csv += "\n";
            for (std::size_t i = 0; i < matrix.labels.size(); ++i) {
                csv += detail::csv_escape(matrix.labels[i]);
                for (std::size_t k = 0; k < matrix.labels.size(); ++k) {
                    csv += "," + detail::format_double(matrix.cells[i][k].r);
                }
                csv += "\n";
            }
            const auto csv_path = out_dir / "consistency.csv";
            detail::write_file_atomic(csv_path, csv);
            emit(csv_path);
        }

        if (req.analyses.count("anova")) {
            std::vector<std::vector<double>> groups;
            for (const auto& v : vectors) groups.push_back(v.pvi);
            const AnovaResult anova = anova_oneway(groups);
            nlohmann::ordered_json j;
            auto labels = nlohmann::ordered_json::array();
            for (const auto& v : vectors) labels.push_back(v.label);
            j["runs"] = std::move(labels);
            j["aligned_instances"] = ids.size();
            j["excluded_floored"] = excluded;
            j["f_statistic"] = anova.f_statistic;
            j["p_value"] = anova.p_value;
            j["df_between"] = anova.df_between;
            j["df_within"] = anova.df_within;
            const auto json_path = out_dir / "anova.json";
            write_json_file(json_path, j);
            emit(json_path);

            std::string csv = "dataset,model,f_statistic,p_value,df_between,df_within\n";
            csv += detail::csv_escape(runs.front().dataset) + "," +
                   detail::csv_escape(runs.front().model_id) + "," +
                   detail::format_double(anova.f_statistic) + "," + detail::format_double(anova.p_value) +
                   "," + std::to_string(anova.df_between) + "," + std::to_string(anova.df_within) + "\n";
            const auto csv_path = out_dir / "anova.csv";
            detail::write_file_atomic(csv_path, csv);
            emit(csv_path);
        }
    }

    if (req.analyses.count("agreement")) {
        if (!req.dataset) throw ConfigError("analyze: agreement needs a dataset spec (--dataset-config)");
        if (!req.dataset->annotation_field) {
            throw ValidationError("analyze: dataset '" + req.dataset->name +
                                  "' declares no annotation field; agreement is unavailable");
        }
        const Dataset dataset = req.dataset->load();
        std::map<std::string_view, const Instance*> by_id;
        for (const auto& inst : dataset.test) by_id.emplace(inst.id, &inst);

        for (const auto& run : runs) {
            std::vector<double> pvi, agreement;
            std::size_t skipped_unannotated = 0, excluded_floored = 0;
            for (const auto& s : run.scored) {
                if (!req.include_floored && s.floored) {
                    ++excluded_floored;
                    continue;
                }
                const auto it = by_id.find(s.instance_id);
                if (it == by_id.end()) {
                    throw ValidationError("analyze: instance '" + s.instance_id +
                                          "' is not in the test split of '" + dataset.name + "'");
                }
                if (!it->second->annotations) {
                    ++skipped_unannotated;
                    continue;
                }
                pvi.push_back(s.pvi_bits);
                agreement.push_back(variation_ratio_agreement(*it->second->annotations));
            }
            if (pvi.empty()) {
                throw ValidationError("analyze: dataset '" + dataset.name +
                                      "' has no annotated instances overlapping run '" + run.label + "'");
            }
            const CorrelationResult corr = pearson(pvi, agreement);
            nlohmann::ordered_json j;
            j["run"] = run.label;
            j["n"] = corr.n;
            j["skipped_unannotated"] = skipped_unannotated;
            j["excluded_floored"] = excluded_floored;
            j["r"] = corr.r;
            j["p_value"] = corr.p_value ? nlohmann::ordered_json(*corr.p_value)
                                        : nlohmann::ordered_json(nullptr);
            const auto path = out_dir / ("agreement_" + run.label + ".json");
            write_json_file(path, j);
            emit(path);
        }
    }

    return result;
}

// ---------------------------------------------------------------------------
// select command

struct SelectRequest {
    std::string run_dir;
    DatasetSpec dataset; // its training split must contain the scored ids
    std::size_t per_label = 1;
    std::string out_path;
    std::optional<std::string> ranking_csv;
};

inline void run_select(const SelectRequest& req) {
    const auto scored = read_scores_jsonl(std::filesystem::path(req.run_dir) / "scores.jsonl");
    if (scored.empty()) throw ValidationError("select: run '" + req.run_dir + "' has no score records");
    const Dataset dataset = req.dataset.load();
    const HardnessRanking ranking = rank_hardness(scored, dataset);
    if (req.ranking_csv) write_ranking_csv(*req.ranking_csv, ranking);
    const ExemplarSet set = select_hardest_exemplars(ranking, req.per_label);
    write_exemplar_file(req.out_path, set);
}

} // namespace icpvi
