#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <thread>

#include "icpvi/backend.hpp"
#include "test_util.hpp"

using namespace icpvi;

TEST_CASE("sha256 hex matches the standard test vector") {
    REQUIRE(icpvi::detail::sha256_hex("abc") ==
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    REQUIRE(FileCache::key_for("m", "p", "t").size() == 64);
    REQUIRE(FileCache::key_for("m", "p", "t") != FileCache::key_for("m", "p", "u"));
    // the key separates fields; concatenation tricks must not collide
    REQUIRE(FileCache::key_for("ab", "c", "t") != FileCache::key_for("a", "bc", "t"));
}

TEST_CASE("table mock returns the fixture probability") {
    auto backend = TableMockBackend::from_jsonl(testutil::data_dir() / "mock_table.jsonl");
    const ScoreResult r = backend.score({"any-model", "Answer:", " 1", 5});
    REQUIRE(r.logprob_nat == std::log(0.5));
    REQUIRE_FALSE(r.from_cache);
    REQUIRE(r.top_alternatives.size() == 2);
    REQUIRE(r.top_alternatives[0].token == " 1"); // sorted by descending logprob
    REQUIRE(r.top_alternatives[1].token == " 0");

    REQUIRE_THROWS_AS(backend.score({"m", "Answer:", " 9", 5}), MissingTargetLogprob);
    REQUIRE_THROWS_AS(backend.score({"m", "unknown prompt", " 1", 5}), MissingTargetLogprob);
    const auto batch = backend.score_candidates("m", "Answer:", {" 1", " 9"}, 5);
    REQUIRE(batch[0].has_value());
    REQUIRE_FALSE(batch[1].has_value());
}

TEST_CASE("file cache round-trips score results and stops upstream calls") {
    testutil::TempDir tmp("icpvi_cache");
    auto inner = std::make_shared<TableMockBackend>();
    inner->set("Answer:", " 1", 0.5);
    auto cache = std::make_shared<FileCache>(tmp.path / "cache");
    CachingBackend backend(inner, cache);

    const ScoreRequest req{"model-x", "Answer:", " 1", 5};
    const ScoreResult first = backend.score(req);
    REQUIRE_FALSE(first.from_cache);
    REQUIRE(inner->upstream_calls() == 1);

    const ScoreResult second = backend.score(req);
    REQUIRE(second.from_cache);
    REQUIRE(second.logprob_nat == first.logprob_nat);
    REQUIRE(second.top_alternatives.size() == first.top_alternatives.size());
    REQUIRE(inner->upstream_calls() == 1); // no new upstream traffic

    REQUIRE(cache->size() == 1);
    const auto records = cache->records();
    REQUIRE(records.size() == 1);
    REQUIRE(records[0].at("model_id") == "model-x");
    REQUIRE(records[0].at("target_token") == " 1");
    REQUIRE(cache->clear() == 1);
    REQUIRE(cache->size() == 0);
}

TEST_CASE("cache differentiates models and prompts") {
    testutil::TempDir tmp("icpvi_cache");
    auto inner = std::make_shared<TableMockBackend>();
    inner->set("p", " 0", 0.25);
    auto cache = std::make_shared<FileCache>(tmp.path / "cache");
    CachingBackend backend(inner, cache);
    backend.score({"m1", "p", " 0", 5});
    backend.score({"m2", "p", " 0", 5});
    REQUIRE(inner->upstream_calls() == 2);
    REQUIRE(cache->size() == 2);
}

TEST_CASE("missing targets are not cached and are retried") {
    testutil::TempDir tmp("icpvi_cache");
    auto inner = std::make_shared<TableMockBackend>();
    inner->set("p", " 0", 0.25);
    auto cache = std::make_shared<FileCache>(tmp.path / "cache");
    CachingBackend backend(inner, cache);
    REQUIRE_FALSE(backend.score_candidates("m", "p", {" 7"}, 5)[0].has_value());
    REQUIRE_FALSE(backend.score_candidates("m", "p", {" 7"}, 5)[0].has_value());
    REQUIRE(inner->upstream_calls() == 2); // still consulted, nothing cached
    REQUIRE(cache->size() == 0);
}

TEST_CASE("predict_token picks the argmax with lowest-index ties") {
    TableMockBackend backend;
    backend.set("p", " 0", 0.2);
    backend.set("p", " 1", 0.6);
    backend.set("q", " 0", 0.4);
    backend.set("q", " 1", 0.4);
    backend.set("r", " 0", 0.1);
    backend.set("r", " 1", 0.2);
    backend.set("r", " 2", 0.3);

    REQUIRE(predict_token(backend, "m", "p", {" 0", " 1"}).token == " 1");
    REQUIRE(predict_token(backend, "m", "q", {" 0", " 1"}).token == " 0"); // tie -> lowest index
    const Prediction third = predict_token(backend, "m", "r", {" 0", " 1", " 2"});
    REQUIRE(third.token == " 2");
    REQUIRE(third.index == 2);
    REQUIRE(third.logprobs_nat.size() == 3);

    REQUIRE_THROWS_AS(predict_token(backend, "m", "p", {" 0", " 0"}), ValidationError);
    REQUIRE_THROWS_AS(predict_token(backend, "m", "p", {}), ValidationError);
}

TEST_CASE("predict_token floor policy substitutes missing candidates") {
    TableMockBackend backend;
    backend.set("p", " 0", 0.001);
    // " 1" absent from the table
    REQUIRE_THROWS_AS(predict_token(backend, "m", "p", {" 0", " 1"}), MissingTargetLogprob);

    FloorPolicy policy;
    policy.mode = FloorPolicy::Mode::floor;
    const Prediction pred = predict_token(backend, "m", "p", {" 0", " 1"}, 5, policy);
    REQUIRE(pred.any_floored);
    REQUIRE(pred.logprobs_nat[1] == policy.floor_logprob_nat);
    REQUIRE(pred.token == " 0"); // ln(0.001) > ln(1e-10)
}

TEST_CASE("seeded mock is deterministic and renormalized") {
    SeededMockBackend a(42, {" 0", " 1", " 2"});
    SeededMockBackend b(42, {" 0", " 1", " 2"});
    SeededMockBackend other(43, {" 0", " 1", " 2"});

    const ScoreResult ra = a.score({"m", "some prompt", " 1", 5});
    const ScoreResult rb = b.score({"m", "some prompt", " 1", 5});
    REQUIRE(ra.logprob_nat == rb.logprob_nat);
    REQUIRE(ra.logprob_nat <= 0.0);
    REQUIRE(other.score({"m", "some prompt", " 1", 5}).logprob_nat != ra.logprob_nat);

    // probabilities over the declared candidates sum to one
    double total = 0.0;
    for (const auto& alt : ra.top_alternatives) total += std::exp(alt.logprob_nat);
    REQUIRE_THAT(total, Catch::Matchers::WithinAbs(1.0, 1e-12));

    REQUIRE_THROWS_AS(a.score({"m", "some prompt", " 9", 5}), MissingTargetLogprob);

    // frozen value pinning cross-process/platform stability of the hash path
    SeededMockBackend pinned(42, {" 0", " 1"});
    REQUIRE(pinned.score({"m", "probe prompt", " 0", 5}).logprob_nat == -1.1010340029650192);
}

namespace {

/// Minimal completions endpoint used to exercise the HTTP client offline.
struct LocalServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;

    explicit LocalServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
        server.Post("/v1/completions", std::move(handler));
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~LocalServer() {
        server.stop();
        thread.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

RemoteOptions fast_options(const std::string& url) {
    RemoteOptions opts;
    opts.base_url = url;
    opts.max_attempts = 3;
    opts.initial_backoff_ms = 1;
    opts.timeout_sec = 5;
    return opts;
}

} // namespace

TEST_CASE("remote backend reads target logprobs from top-k completions") {
    LocalServer server([](const httplib::Request& req, httplib::Response& res) {
        const auto body = nlohmann::json::parse(req.body);
        REQUIRE(body.at("max_tokens") == 1);
        REQUIRE(body.at("logprobs") == 5);
        res.set_content(nlohmann::json{
            {"choices",
             {{{"text", " 1"},
               {"logprobs",
                {{"tokens", {" 1"}},
                 {"token_logprobs", {-0.4}},
                 {"top_logprobs", {{{" 1", -0.4}, {" 0", -1.6}}}}}}}}}}
                            .dump(),
                        "application/json");
    });

    RemoteBackend backend(fast_options(server.url()));
    const ScoreResult r = backend.score({"m", "prompt text", " 1", 5});
    REQUIRE(r.logprob_nat == -0.4);
    REQUIRE(r.top_alternatives.size() == 2);
    REQUIRE(r.top_alternatives[0].token == " 1");

    // a batched request resolves every candidate from one completion
    const auto batch = backend.score_candidates("m", "prompt text", {" 0", " 1", " 7"}, 5);
    REQUIRE(batch[0]->logprob_nat == -1.6);
    REQUIRE(batch[1]->logprob_nat == -0.4);
    REQUIRE_FALSE(batch[2].has_value());
    REQUIRE(backend.upstream_calls() == 2);
}

TEST_CASE("remote backend echo mode scores the target position") {
    LocalServer server([](const httplib::Request& req, httplib::Response& res) {
        const auto body = nlohmann::json::parse(req.body);
        REQUIRE(body.at("echo") == true);
        REQUIRE(body.at("max_tokens") == 0);
        REQUIRE(body.at("prompt").get<std::string>() == "Answer: 1");
        res.set_content(nlohmann::json{
            {"choices",
             {{{"logprobs",
                {{"tokens", {"Answer", ":", " 1"}},
                 {"token_logprobs", {nullptr, -2.0, -0.35}},
                 {"top_logprobs", {nullptr, nullptr, {{" 1", -0.35}, {" 0", -1.8}}}}}}}}}}
                            .dump(),
                        "application/json");
    });

    auto opts = fast_options(server.url());
    opts.echo_scoring = true;
    RemoteBackend backend(opts);
    const ScoreResult r = backend.score({"m", "Answer:", " 1", 5});
    REQUIRE(r.logprob_nat == -0.35);
    REQUIRE(r.top_alternatives.front().token == " 1");
}

TEST_CASE("remote backend retries transient failures and honors Retry-After") {
    std::atomic<int> hits{0};
    LocalServer server([&](const httplib::Request&, httplib::Response& res) {
        if (hits.fetch_add(1) == 0) {
            res.status = 429;
            res.set_header("Retry-After", "0");
            return;
        }
        res.set_content(nlohmann::json{
            {"choices",
             {{{"logprobs",
                {{"tokens", {" 1"}}, {"token_logprobs", {-0.5}}, {"top_logprobs", {{{" 1", -0.5}}}}}}}}}}
                            .dump(),
                        "application/json");
    });

    RemoteBackend backend(fast_options(server.url()));
    const ScoreResult r = backend.score({"m", "p", " 1", 5});
    REQUIRE(r.logprob_nat == -0.5);
    REQUIRE(backend.upstream_calls() == 2);
}

TEST_CASE("remote backend gives up after max_attempts") {
    LocalServer server([](const httplib::Request&, httplib::Response& res) { res.status = 503; });
    RemoteBackend backend(fast_options(server.url()));
    REQUIRE_THROWS_AS(backend.score({"m", "p", " 1", 5}), BackendUnavailable);
    REQUIRE(backend.upstream_calls() == 3);
}

TEST_CASE("remote backend treats auth errors as fatal immediately") {
    LocalServer server([](const httplib::Request&, httplib::Response& res) {
        res.status = 401;
        res.set_content("{\"error\": \"bad key\"}", "application/json");
    });
    RemoteBackend backend(fast_options(server.url()));
    REQUIRE_THROWS_AS(backend.score({"m", "p", " 1", 5}), BackendUnavailable);
    REQUIRE(backend.upstream_calls() == 1);
}
