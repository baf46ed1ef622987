#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
#include <json.hpp>

#include "icpvi/detail/io.hpp"
#include "icpvi/detail/sha256.hpp"
#include "icpvi/detail/text.hpp"
#include "icpvi/errors.hpp"

namespace icpvi {

struct ScoreRequest {
    std::string model_id;
    std::string prompt;
    std::string target_token;
    int top_k = 5;
};

struct TokenLogprob {
    std::string token;
    double logprob_nat = 0.0;
};

struct ScoreResult {
    double logprob_nat = 0.0; // natural log of p(target | prompt), always <= 0
    std::vector<TokenLogprob> top_alternatives; // descending logprob
    bool from_cache = false;
};

/// What to do when a target's log-probability cannot be obtained: abort the
/// run, or substitute a configured floor and flag the record.
struct FloorPolicy {
    enum class Mode { fail, floor };
    Mode mode = Mode::fail;
    double floor_logprob_nat = std::log(1e-10);
};

/// A conditional single-token scorer. score_candidates returns one entry per
/// token; nullopt marks a token whose log-probability the backend could not
/// report (score() turns that into MissingTargetLogprob).
class Backend {
public:
    virtual ~Backend() = default;

    virtual std::vector<std::optional<ScoreResult>> score_candidates(const std::string& model_id,
                                                                     const std::string& prompt,
                                                                     const std::vector<std::string>& tokens,
                                                                     int top_k) = 0;

    /// Calls that reached past any cache (mock lookups or HTTP requests).
    virtual std::uint64_t upstream_calls() const = 0;

    ScoreResult score(const ScoreRequest& request) {
        if (request.target_token.empty()) throw ValidationError("score: empty target token");
        if (request.top_k < 1) throw ValidationError("score: top_k must be >= 1");
        auto results = score_candidates(request.model_id, request.prompt, {request.target_token}, request.top_k);
        if (!results.at(0)) {
            throw MissingTargetLogprob("no log-probability for target token '" + request.target_token +
                                       "' (model " + request.model_id + ")");
        }
        return *results.at(0);
    }
};

namespace detail {

inline std::vector<TokenLogprob> sorted_alternatives(std::vector<TokenLogprob> alts, int top_k) {
    std::sort(alts.begin(), alts.end(), [](const TokenLogprob& a, const TokenLogprob& b) {
        if (a.logprob_nat != b.logprob_nat) return a.logprob_nat > b.logprob_nat;
        return a.token < b.token;
    });
    if (alts.size() > static_cast<std::size_t>(top_k)) alts.resize(static_cast<std::size_t>(top_k));
    return alts;
}

} // namespace detail

/// Deterministic mock driven by an explicit (prompt, token) -> probability
/// table, loadable from a JSONL fixture of {"prompt","token","prob"} records.
class TableMockBackend : public Backend {
public:
    using Table = std::map<std::string, std::map<std::string, double>>;

    TableMockBackend() = default;
    explicit TableMockBackend(Table table) : table_(std::move(table)) {}

    static Table parse_fixture(const std::filesystem::path& path) {
        Table table;
        const std::string text = detail::read_file(path);
        std::size_t line_no = 0;
        for (const auto& line : detail::split(text, "\n")) {
            ++line_no;
            if (detail::trim(line).empty()) continue;
            nlohmann::json rec;
            try {
                rec = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                throw LoadError(path.string() + ":" + std::to_string(line_no) + ": invalid JSON: " + e.what());
            }
            if (!rec.contains("prompt") || !rec.contains("token") || !rec.contains("prob")) {
                throw LoadError(path.string() + ":" + std::to_string(line_no) +
                                ": fixture records need prompt, token and prob");
            }
            const double prob = rec.at("prob").get<double>();
            if (!(prob > 0.0) || prob > 1.0) {
                throw LoadError(path.string() + ":" + std::to_string(line_no) +
                                ": probability must lie in (0, 1]");
            }
            table[rec.at("prompt").get<std::string>()][rec.at("token").get<std::string>()] = prob;
        }
        return table;
    }

    static TableMockBackend from_jsonl(const std::filesystem::path& path) {
        return TableMockBackend(parse_fixture(path));
    }

    void set(std::string prompt, std::string token, double prob) {
        if (!(prob > 0.0) || prob > 1.0) {
            throw ValidationError("mock probability must lie in (0, 1], got " + detail::format_double(prob));
        }
        table_[std::move(prompt)][std::move(token)] = prob;
    }

    std::vector<std::optional<ScoreResult>> score_candidates(const std::string&, const std::string& prompt,
                                                             const std::vector<std::string>& tokens,
                                                             int top_k) override {
        calls_.fetch_add(1);
        const auto row = table_.find(prompt);
        std::vector<std::optional<ScoreResult>> out(tokens.size());
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            if (row == table_.end()) continue;
            const auto hit = row->second.find(tokens[i]);
            if (hit == row->second.end()) continue;
            ScoreResult r;
            r.logprob_nat = std::log(hit->second);
            std::vector<TokenLogprob> alts;
            for (const auto& [tok, prob] : row->second) alts.push_back({tok, std::log(prob)});
            r.top_alternatives = detail::sorted_alternatives(std::move(alts), top_k);
            out[i] = std::move(r);
        }
        return out;
    }

    std::uint64_t upstream_calls() const override { return calls_.load(); }

private:
    Table table_;
    std::atomic<std::uint64_t> calls_{0};
};

/// Deterministic mock for large synthetic runs: hash(seed, prompt, token) is
/// mapped uniformly into [ln 1e-6, ln 0.99] and renormalized over the declared
/// candidate tokens. Identical (seed, prompt, token) triples score identically
/// on every platform.
class SeededMockBackend : public Backend {
public:
    SeededMockBackend(std::uint64_t seed, std::vector<std::string> candidate_tokens)
        : seed_(seed), candidates_(std::move(candidate_tokens)) {
        if (candidates_.empty()) throw ValidationError("seeded mock needs at least one candidate token");
    }

    std::vector<std::optional<ScoreResult>> score_candidates(const std::string&, const std::string& prompt,
                                                             const std::vector<std::string>& tokens,
                                                             int top_k) override {
        calls_.fetch_add(1);
        std::vector<double> raw(candidates_.size());
        double max_raw = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < candidates_.size(); ++i) {
            raw[i] = raw_logprob(prompt, candidates_[i]);
            max_raw = std::max(max_raw, raw[i]);
        }
        double z = 0.0;
        for (const double r : raw) z += std::exp(r - max_raw);
        const double log_z = max_raw + std::log(z);

        std::vector<TokenLogprob> alts;
        alts.reserve(candidates_.size());
        for (std::size_t i = 0; i < candidates_.size(); ++i) {
            alts.push_back({candidates_[i], raw[i] - log_z});
        }

        std::vector<std::optional<ScoreResult>> out(tokens.size());
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            for (std::size_t c = 0; c < candidates_.size(); ++c) {
                if (candidates_[c] == tokens[i]) {
                    ScoreResult r;
                    r.logprob_nat = raw[c] - log_z;
                    r.top_alternatives = detail::sorted_alternatives(alts, top_k);
                    out[i] = std::move(r);
                    break;
                }
            }
        }
        return out;
    }

    std::uint64_t upstream_calls() const override { return calls_.load(); }

private:
    double raw_logprob(const std::string& prompt, const std::string& token) const {
        static const double lo = std::log(1e-6);
        static const double hi = std::log(0.99);
        const std::string key = std::to_string(seed_) + '\0' + prompt + '\0' + token;
        const double u = static_cast<double>(detail::sha256_prefix_u64(key)) / 18446744073709551616.0;
        return lo + u * (hi - lo);
    }

    std::uint64_t seed_;
    std::vector<std::string> candidates_;
    std::atomic<std::uint64_t> calls_{0};
};

/// Content-addressed store of score results, one JSON file per key. The key
/// is the SHA-256 of "model_id\0prompt\0target_token"; top_k is deliberately
/// excluded since the target's log-probability does not depend on it.
class FileCache {
public:
    explicit FileCache(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    static std::string key_for(const std::string& model_id, const std::string& prompt,
                               const std::string& target_token) {
        std::string buf;
        buf.reserve(model_id.size() + prompt.size() + target_token.size() + 2);
        buf += model_id;
        buf += '\0';
        buf += prompt;
        buf += '\0';
        buf += target_token;
        return detail::sha256_hex(buf);
    }

    std::optional<ScoreResult> get(const std::string& key) const {
        const auto path = entry_path(key);
        if (!std::filesystem::exists(path)) return std::nullopt;
        try {
            const nlohmann::json rec = nlohmann::json::parse(detail::read_file(path));
            ScoreResult r;
            r.logprob_nat = rec.at("logprob_nat").get<double>();
            for (const auto& alt : rec.at("top_alternatives")) {
                r.top_alternatives.push_back({alt.at(0).get<std::string>(), alt.at(1).get<double>()});
            }
            r.from_cache = true;
            return r;
        } catch (const std::exception& e) {
            std::cerr << "warning: ignoring unreadable cache entry " << path.string() << ": " << e.what()
                      << "\n";
            return std::nullopt;
        }
    }

    void put(const std::string& key, const std::string& model_id, const std::string& prompt,
             const std::string& target_token, const ScoreResult& result) {
        nlohmann::ordered_json rec;
        rec["model_id"] = model_id;
        rec["prompt"] = prompt;
        rec["target_token"] = target_token;
        rec["logprob_nat"] = result.logprob_nat;
        auto alts = nlohmann::json::array();
        for (const auto& alt : result.top_alternatives) {
            alts.push_back(nlohmann::json::array({alt.token, alt.logprob_nat}));
        }
        rec["top_alternatives"] = std::move(alts);
        const std::lock_guard<std::mutex> lock(write_mutex_);
        detail::write_file_atomic(entry_path(key), rec.dump());
    }

    std::size_t size() const {
        std::size_t n = 0;
        for (const auto& e : std::filesystem::directory_iterator(dir_)) {
            if (e.path().extension() == ".json") ++n;
        }
        return n;
    }

    std::size_t clear() {
        std::size_t n = 0;
        for (const auto& e : std::filesystem::directory_iterator(dir_)) {
            if (e.path().extension() == ".json") {
                std::filesystem::remove(e.path());
                ++n;
            }
        }
        return n;
    }

    std::vector<nlohmann::json> records() const {
        std::vector<std::filesystem::path> paths;
        for (const auto& e : std::filesystem::directory_iterator(dir_)) {
            if (e.path().extension() == ".json") paths.push_back(e.path());
        }
        std::sort(paths.begin(), paths.end());
        std::vector<nlohmann::json> out;
        out.reserve(paths.size());
        for (const auto& p : paths) {
            try {
                auto rec = nlohmann::json::parse(detail::read_file(p));
                rec["key"] = p.stem().string();
                out.push_back(std::move(rec));
            } catch (const std::exception&) {
                // unreadable entries are reported by get(); skip here
            }
        }
        return out;
    }

    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path entry_path(const std::string& key) const { return dir_ / (key + ".json"); }

    std::filesystem::path dir_;
    mutable std::mutex write_mutex_;
};

/// Wraps a backend with a FileCache. Hits never reach the inner backend;
/// misses are fetched in one batched call and persisted immediately, so an
/// interrupted run resumes from where it stopped.
class CachingBackend : public Backend {
public:
    CachingBackend(std::shared_ptr<Backend> inner, std::shared_ptr<FileCache> cache)
        : inner_(std::move(inner)), cache_(std::move(cache)) {}

    std::vector<std::optional<ScoreResult>> score_candidates(const std::string& model_id,
                                                             const std::string& prompt,
                                                             const std::vector<std::string>& tokens,
                                                             int top_k) override {
        std::vector<std::optional<ScoreResult>> out(tokens.size());
        std::vector<std::size_t> misses;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            if (auto hit = cache_->get(FileCache::key_for(model_id, prompt, tokens[i]))) {
                out[i] = std::move(hit);
            } else {
                misses.push_back(i);
            }
        }
        if (misses.empty()) return out;

        std::vector<std::string> miss_tokens;
        miss_tokens.reserve(misses.size());
        for (const std::size_t i : misses) miss_tokens.push_back(tokens[i]);
        auto fetched = inner_->score_candidates(model_id, prompt, miss_tokens, top_k);
        for (std::size_t j = 0; j < misses.size(); ++j) {
            const std::size_t i = misses[j];
            if (fetched[j]) {
                cache_->put(FileCache::key_for(model_id, prompt, tokens[i]), model_id, prompt, tokens[i],
                            *fetched[j]);
                out[i] = std::move(fetched[j]);
            }
            // unavailable targets are not cached; a rerun retries them
        }
        return out;
    }

    std::uint64_t upstream_calls() const override { return inner_->upstream_calls(); }

private:
    std::shared_ptr<Backend> inner_;
    std::shared_ptr<FileCache> cache_;
};

struct RemoteOptions {
    std::string base_url;                    // e.g. "https://api.example.com"
    std::string path = "/v1/completions";
    std::string api_key_env = "ICPVI_API_KEY";
    bool echo_scoring = false;               // score prompt+target with echo instead of top-k readout
    int max_attempts = 5;
    int initial_backoff_ms = 500;
    int timeout_sec = 60;
};

/// Completions-style HTTP backend. In top-k mode a 1-token completion is
/// requested and the target read from the returned alternatives; in echo mode
/// the prompt+target is scored and the final position's logprob used.
class RemoteBackend : public Backend {
public:
    explicit RemoteBackend(RemoteOptions options) : options_(std::move(options)) {
        if (options_.base_url.empty()) throw ConfigError("remote backend needs a base_url");
        if (const char* key = std::getenv(options_.api_key_env.c_str())) api_key_ = key;
    }

    std::vector<std::optional<ScoreResult>> score_candidates(const std::string& model_id,
                                                             const std::string& prompt,
                                                             const std::vector<std::string>& tokens,
                                                             int top_k) override {
        if (options_.echo_scoring) {
            std::vector<std::optional<ScoreResult>> out;
            out.reserve(tokens.size());
            for (const auto& token : tokens) out.push_back(score_echo(model_id, prompt, token, top_k));
            return out;
        }
        return score_topk(model_id, prompt, tokens, top_k);
    }

    std::uint64_t upstream_calls() const override { return calls_.load(); }

private:
    std::optional<ScoreResult> score_echo(const std::string& model_id, const std::string& prompt,
                                          const std::string& token, int top_k) {
        nlohmann::json body{{"model", model_id},
                            {"prompt", prompt + token},
                            {"max_tokens", 0},
                            {"logprobs", top_k},
                            {"echo", true}};
        const nlohmann::json logprobs = request_logprobs(body);
        const auto& toks = logprobs.at("tokens");
        const auto& lps = logprobs.at("token_logprobs");
        if (toks.empty() || lps.empty()) return std::nullopt;
        if (toks.back().get<std::string>() != token) return std::nullopt; // tokenizer merged the target
        if (lps.back().is_null()) return std::nullopt;

        ScoreResult r;
        r.logprob_nat = std::min(lps.back().get<double>(), 0.0);
        if (logprobs.contains("top_logprobs") && logprobs.at("top_logprobs").is_array() &&
            !logprobs.at("top_logprobs").empty() && logprobs.at("top_logprobs").back().is_object()) {
            std::vector<TokenLogprob> alts;
            for (const auto& [tok, lp] : logprobs.at("top_logprobs").back().items()) {
                alts.push_back({tok, std::min(lp.get<double>(), 0.0)});
            }
            r.top_alternatives = detail::sorted_alternatives(std::move(alts), top_k);
        }
        return r;
    }

    std::vector<std::optional<ScoreResult>> score_topk(const std::string& model_id, const std::string& prompt,
                                                       const std::vector<std::string>& tokens, int top_k) {
        nlohmann::json body{{"model", model_id},
                            {"prompt", prompt},
                            {"max_tokens", 1},
                            {"logprobs", top_k}};
        const nlohmann::json logprobs = request_logprobs(body);
        std::vector<TokenLogprob> alts;
        if (logprobs.contains("top_logprobs") && logprobs.at("top_logprobs").is_array() &&
            !logprobs.at("top_logprobs").empty() && logprobs.at("top_logprobs").front().is_object()) {
            for (const auto& [tok, lp] : logprobs.at("top_logprobs").front().items()) {
                alts.push_back({tok, std::min(lp.get<double>(), 0.0)});
            }
        }
        alts = detail::sorted_alternatives(std::move(alts), top_k);

        std::vector<std::optional<ScoreResult>> out(tokens.size());
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            for (const auto& alt : alts) {
                if (alt.token == tokens[i]) {
                    out[i] = ScoreResult{alt.logprob_nat, alts, false};
                    break;
                }
            }
        }
        return out;
    }

    nlohmann::json request_logprobs(const nlohmann::json& body) {
        const nlohmann::json response = post_with_retries(body);
        try {
            const auto& choice = response.at("choices").at(0);
            if (!choice.contains("logprobs") || choice.at("logprobs").is_null()) {
                throw BackendUnavailable("completion response carries no logprobs block");
            }
            return choice.at("logprobs");
        } catch (const nlohmann::json::exception& e) {
            throw BackendUnavailable(std::string("malformed completion response: ") + e.what());
        }
    }

    nlohmann::json post_with_retries(const nlohmann::json& body) {
        httplib::Client client(options_.base_url);
        client.set_connection_timeout(options_.timeout_sec, 0);
        client.set_read_timeout(options_.timeout_sec, 0);
        client.set_write_timeout(options_.timeout_sec, 0);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

        std::string last_error;
        for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
            calls_.fetch_add(1);
            auto res = client.Post(options_.path, headers, body.dump(), "application/json");
            if (res && res->status == 200) {
                try {
                    return nlohmann::json::parse(res->body);
                } catch (const nlohmann::json::exception& e) {
                    throw BackendUnavailable(std::string("backend returned invalid JSON: ") + e.what());
                }
            }
            long backoff_ms = static_cast<long>(options_.initial_backoff_ms) << (attempt - 1);
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
            } else {
                last_error = "HTTP " + std::to_string(res->status);
                if (res->status != 429 && res->status < 500) {
                    throw BackendUnavailable("backend rejected request (" + last_error + "): " + res->body);
                }
                if (res->has_header("Retry-After")) {
                    try {
                        backoff_ms = std::stol(res->get_header_value("Retry-After")) * 1000;
                    } catch (const std::exception&) {
                        // unparsable header, keep exponential backoff
                    }
                }
            }
            std::cerr << "backend attempt " << attempt << "/" << options_.max_attempts << " failed ("
                      << last_error << ")";
            if (attempt < options_.max_attempts) {
                std::cerr << ", retrying in " << backoff_ms << " ms";
                std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
            }
            std::cerr << "\n";
        }
        throw BackendUnavailable("backend unreachable after " + std::to_string(options_.max_attempts) +
                                 " attempts: " + last_error);
    }

    RemoteOptions options_;
    std::string api_key_;
    std::atomic<std::uint64_t> calls_{0};
};

struct Prediction {
    std::string token;
    std::size_t index = 0; // position in the candidate list
    std::vector<double> logprobs_nat;
    bool any_floored = false;
};

/// Scores every candidate at the answer position and returns the argmax;
/// ties go to the lowest candidate index.
inline Prediction predict_token(Backend& backend, const std::string& model_id, const std::string& prompt,
                                const std::vector<std::string>& candidates, int top_k = 5,
                                const FloorPolicy& policy = {}) {
    if (candidates.empty()) throw ValidationError("predict_token: no candidate tokens");
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        for (std::size_t j = i + 1; j < candidates.size(); ++j) {
            if (candidates[i] == candidates[j]) {
                throw ValidationError("predict_token: duplicate candidate token '" + candidates[i] + "'");
            }
        }
    }

    const auto results = backend.score_candidates(model_id, prompt, candidates, top_k);
    Prediction pred;
    pred.logprobs_nat.resize(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (results[i]) {
            pred.logprobs_nat[i] = results[i]->logprob_nat;
        } else if (policy.mode == FloorPolicy::Mode::floor) {
            pred.logprobs_nat[i] = policy.floor_logprob_nat;
            pred.any_floored = true;
        } else {
            throw MissingTargetLogprob("no log-probability for candidate token '" + candidates[i] +
                                       "' (model " + model_id + ")");
        }
    }

    std::size_t best = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        if (pred.logprobs_nat[i] > pred.logprobs_nat[best]) best = i;
    }
    pred.index = best;
    pred.token = candidates[best];
    return pred;
}

} // namespace icpvi
