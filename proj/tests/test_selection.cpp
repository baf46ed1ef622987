#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "icpvi/selection.hpp"
#include "test_util.hpp"

using namespace icpvi;

namespace {

Dataset make_train(const std::vector<std::string>& labels,
                   const std::vector<std::pair<std::string, std::string>>& id_label) {
    Dataset ds;
    ds.name = "sel";
    ds.label_space = LabelSpace(labels);
    for (const auto& [id, label] : id_label) {
        ds.train.push_back({id, {{"sentence", "text of " + id}}, label, std::nullopt});
    }
    return ds;
}

ScoredInstance scored(const std::string& id, double pvi) {
    ScoredInstance s;
    s.instance_id = id;
    s.pvi_bits = pvi;
    return s;
}

} // namespace

TEST_CASE("rank_hardness groups by gold label and sorts ascending") {
    const Dataset ds = make_train({"a", "b"}, {{"x1", "a"}, {"x2", "a"}, {"x3", "b"}});
    const std::vector<ScoredInstance> run{scored("x1", 1.0), scored("x2", -2.0), scored("x3", 0.0)};
    const HardnessRanking ranking = rank_hardness(run, ds);
    REQUIRE(ranking.labels == std::vector<std::string>{"a", "b"});
    REQUIRE(ranking.per_label.at("a").size() == 2);
    REQUIRE(ranking.per_label.at("a")[0].instance.id == "x2"); // -2 first
    REQUIRE(ranking.per_label.at("a")[1].instance.id == "x1");
    REQUIRE(ranking.per_label.at("b")[0].pvi_bits == 0.0);
}

TEST_CASE("equal PVI falls back to id order") {
    const Dataset ds = make_train({"a"}, {{"n2", "a"}, {"n1", "a"}, {"n3", "a"}});
    const std::vector<ScoredInstance> run{scored("n2", 0.5), scored("n1", 0.5), scored("n3", 0.5)};
    const HardnessRanking ranking = rank_hardness(run, ds);
    REQUIRE(ranking.per_label.at("a")[0].instance.id == "n1");
    REQUIRE(ranking.per_label.at("a")[1].instance.id == "n2");
    REQUIRE(ranking.per_label.at("a")[2].instance.id == "n3");
}

TEST_CASE("unknown scored ids are rejected") {
    const Dataset ds = make_train({"a"}, {{"x1", "a"}});
    REQUIRE_THROWS_MATCHES(rank_hardness(std::vector<ScoredInstance>{scored("nope", 1.0)}, ds),
                           ValidationError,
                           Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("nope")));
}

TEST_CASE("select_hardest_exemplars takes the per-label minimum") {
    const Dataset ds = make_train(
        {"neg", "pos"},
        {{"p1", "pos"}, {"p2", "pos"}, {"p3", "pos"}, {"g1", "neg"}, {"g2", "neg"}});
    const std::vector<ScoredInstance> run{scored("p1", -1.0), scored("p2", -4.0), scored("p3", 2.0),
                                          scored("g1", 0.5), scored("g2", -0.25)};
    const HardnessRanking ranking = rank_hardness(run, ds);

    const ExemplarSet one = select_hardest_exemplars(ranking, 1);
    REQUIRE(one.shots == 2);
    REQUIRE(one.exemplars[0].id == "g2"); // label-space order: neg first
    REQUIRE(one.exemplars[1].id == "p2");

    const ExemplarSet two = select_hardest_exemplars(ranking, 2);
    REQUIRE(two.shots == 4);
    REQUIRE(two.exemplars[0].id == "g2"); // hardest first within label
    REQUIRE(two.exemplars[1].id == "g1");
    REQUIRE(two.exemplars[2].id == "p2");
    REQUIRE(two.exemplars[3].id == "p1");

    REQUIRE_THROWS_MATCHES(select_hardest_exemplars(ranking, 3), ValidationError,
                           Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("neg")));
}

TEST_CASE("three-label ranking yields a 3-shot set for per_label=1") {
    const Dataset ds = make_train({"a", "b", "c"}, {{"x1", "a"}, {"x2", "b"}, {"x3", "c"}});
    const std::vector<ScoredInstance> run{scored("x1", 1.0), scored("x2", 2.0), scored("x3", 3.0)};
    const ExemplarSet set = select_hardest_exemplars(rank_hardness(run, ds), 1);
    REQUIRE(set.shots == 3);
}

TEST_CASE("selection matches brute force on random fixtures") {
    std::mt19937_64 rng(61);
    const std::vector<std::string> labels{"l0", "l1", "l2"};
    for (int round = 0; round < 20; ++round) {
        std::vector<std::pair<std::string, std::string>> id_label;
        std::vector<ScoredInstance> run;
        std::map<std::string, std::pair<std::string, double>> best; // label -> (id, pvi)
        const std::size_t n = 3 + rng() % 15;
        for (std::size_t i = 0; i < n; ++i) {
            const std::string id = "r" + std::to_string(i);
            const std::string label = labels[i < 3 ? i : rng() % labels.size()];
            const double pvi = static_cast<double>(static_cast<int>(rng() % 2000)) / 100.0 - 10.0;
            id_label.push_back({id, label});
            run.push_back(scored(id, pvi));
            const auto it = best.find(label);
            if (it == best.end() || pvi < it->second.second ||
                (pvi == it->second.second && id < it->second.first)) {
                best[label] = {id, pvi};
            }
        }
        const Dataset ds = make_train(labels, id_label);
        const ExemplarSet set = select_hardest_exemplars(rank_hardness(run, ds), 1);
        REQUIRE(set.exemplars.size() == labels.size());
        for (std::size_t l = 0; l < labels.size(); ++l) {
            REQUIRE(set.exemplars[l].gold_label == labels[l]);
            REQUIRE(set.exemplars[l].id == best.at(labels[l]).first);
        }
    }
}

TEST_CASE("ranking csv lists label, rank, id and pvi") {
    testutil::TempDir tmp("icpvi_sel");
    const Dataset ds = make_train({"a"}, {{"x1", "a"}, {"x2", "a"}});
    const HardnessRanking ranking =
        rank_hardness(std::vector<ScoredInstance>{scored("x1", 0.5), scored("x2", -1.5)}, ds);
    const auto path = tmp.path / "ranking.csv";
    write_ranking_csv(path, ranking);
    const std::string csv = testutil::read_file(path);
    REQUIRE(csv == "label,rank,id,pvi_bits\na,1,x2,-1.5\na,2,x1,0.5\n");
}
