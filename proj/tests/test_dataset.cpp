#include <catch2/catch_amalgamated.hpp>

#include "icpvi/dataset.hpp"
#include "test_util.hpp"

using namespace icpvi;

namespace {

LoadOptions jsonl_options(std::vector<std::string> fields = {"sentence"}) {
    LoadOptions opts;
    opts.format = FileFormat::jsonl;
    opts.field_names = std::move(fields);
    opts.label_field = "label";
    opts.dataset_name = "t";
    return opts;
}

} // namespace

TEST_CASE("jsonl load maps fields and sorts the label space") {
    testutil::TempDir tmp("icpvi_dataset");
    const auto path = tmp.path / "d.jsonl";
    testutil::write_file(path, R"({"id":"1","sentence":"a","label":"acceptable"}
{"id":"2","sentence":"b","label":"unacceptable"}
)");
    const Dataset ds = load_dataset(path.string(), jsonl_options());
    REQUIRE(ds.test.size() == 2);
    REQUIRE(ds.train.empty());
    REQUIRE(ds.label_space.labels() == std::vector<std::string>{"acceptable", "unacceptable"});
    REQUIRE(ds.label_space.index_of("acceptable") == 0);
    REQUIRE(ds.label_space.index_of("unacceptable") == 1);
    REQUIRE(ds.test[0].id == "1");
    REQUIRE(*ds.test[0].field("sentence") == "a");
    REQUIRE(ds.test[1].gold_label == "unacceptable");
}

TEST_CASE("missing declared field is a load error naming the record") {
    testutil::TempDir tmp("icpvi_dataset");
    const auto path = tmp.path / "d.jsonl";
    testutil::write_file(path, R"({"id":"x1","sentence":"a","label":"y"}
{"id":"x2","sentence":"b"}
)");
    REQUIRE_THROWS_MATCHES(load_dataset(path.string(), jsonl_options()), LoadError,
                           Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("x2") &&
                                                           Catch::Matchers::ContainsSubstring("label")));
}

TEST_CASE("csv annotation cells split on the configured delimiter") {
    testutil::TempDir tmp("icpvi_dataset");
    const auto path = tmp.path / "d.csv";
    testutil::write_file(path, "id,premise,hypothesis,label,annotations\n"
                               "1,p1,h1,e,e|e|e|n|c\n"
                               "2,p2,h2,n,\n");
    LoadOptions opts;
    opts.format = FileFormat::csv;
    opts.field_names = {"premise", "hypothesis"};
    opts.annotation_field = "annotations";
    opts.label_order = std::vector<std::string>{"c", "e", "n"};
    const Dataset ds = load_dataset(path.string(), opts);
    REQUIRE(ds.test.size() == 2);
    REQUIRE(ds.test[0].annotations.has_value());
    REQUIRE(*ds.test[0].annotations == std::vector<std::string>{"e", "e", "e", "n", "c"});
    REQUIRE_FALSE(ds.test[1].annotations.has_value()); // empty cell means no annotations
    REQUIRE(ds.test[0].fields[0].first == "premise");
    REQUIRE(ds.test[0].fields[1].first == "hypothesis");
}

TEST_CASE("unknown annotation label is a validation error") {
    testutil::TempDir tmp("icpvi_dataset");
    const auto path = tmp.path / "d.csv";
    testutil::write_file(path, "id,sentence,label,annotations\n1,a,e,e|zzz\n");
    LoadOptions opts;
    opts.format = FileFormat::csv;
    opts.field_names = {"sentence"};
    opts.annotation_field = "annotations";
    REQUIRE_THROWS_MATCHES(load_dataset(path.string(), opts), ValidationError,
                           Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("zzz")));
}

TEST_CASE("duplicate instance ids are rejected") {
    testutil::TempDir tmp("icpvi_dataset");
    const auto path = tmp.path / "d.jsonl";
    testutil::write_file(path, R"({"id":"1","sentence":"a","label":"x"}
{"id":"1","sentence":"b","label":"x"}
)");
    REQUIRE_THROWS_AS(load_dataset(path.string(), jsonl_options()), ValidationError);
}

TEST_CASE("train and test ids must be disjoint") {
    testutil::TempDir tmp("icpvi_dataset");
    const auto test_path = tmp.path / "test.jsonl";
    const auto train_path = tmp.path / "train.jsonl";
    testutil::write_file(test_path, R"({"id":"1","sentence":"a","label":"x"})");
    testutil::write_file(train_path, R"({"id":"1","sentence":"b","label":"x"})");
    REQUIRE_THROWS_AS(load_dataset(test_path.string(), train_path.string(), jsonl_options()),
                      ValidationError);
}

TEST_CASE("explicit label order overrides the sorted default") {
    testutil::TempDir tmp("icpvi_dataset");
    const auto path = tmp.path / "d.jsonl";
    testutil::write_file(path, R"({"id":"1","sentence":"a","label":"acceptable"})");
    auto opts = jsonl_options();
    opts.label_order = std::vector<std::string>{"unacceptable", "acceptable"};
    const Dataset ds = load_dataset(path.string(), opts);
    REQUIRE(ds.label_space.index_of("unacceptable") == 0);
    REQUIRE(ds.label_space.index_of("acceptable") == 1);

    opts.label_order = std::vector<std::string>{"unacceptable"};
    REQUIRE_THROWS_AS(load_dataset(path.string(), opts), ValidationError); // gold label not covered
}

TEST_CASE("integer labels and missing id fields are tolerated") {
    testutil::TempDir tmp("icpvi_dataset");
    const auto path = tmp.path / "d.jsonl";
    testutil::write_file(path, R"({"sentence":"a","label":1}
{"sentence":"b","label":0}
)");
    const Dataset ds = load_dataset(path.string(), jsonl_options());
    REQUIRE(ds.test[0].id == "1"); // record ordinal
    REQUIRE(ds.test[0].gold_label == "1");
    REQUIRE(ds.label_space.labels() == std::vector<std::string>{"0", "1"});
}

TEST_CASE("head truncates only the test split") {
    Dataset ds;
    ds.name = "t";
    ds.label_space = LabelSpace({"x"});
    for (int i = 0; i < 10; ++i) ds.test.push_back({std::to_string(i), {{"f", "v"}}, "x", std::nullopt});
    ds.train.push_back({"t0", {{"f", "v"}}, "x", std::nullopt});

    const Dataset h3 = head(ds, 3);
    REQUIRE(h3.test.size() == 3);
    REQUIRE(h3.test[2].id == "2");
    REQUIRE(h3.train.size() == 1);

    REQUIRE(head(ds, 0).test.empty());
    REQUIRE(head(ds, 500).test.size() == 10); // clamp to available
}

TEST_CASE("loading the same file twice yields identical datasets") {
    const auto path = testutil::data_dir() / "cola_train.jsonl";
    const Dataset a = load_dataset(path.string(), jsonl_options());
    const Dataset b = load_dataset(path.string(), jsonl_options());
    REQUIRE(a.label_space.labels() == b.label_space.labels());
    REQUIRE(a.test.size() == b.test.size());
    for (std::size_t i = 0; i < a.test.size(); ++i) {
        REQUIRE(a.test[i].id == b.test[i].id);
        REQUIRE(a.test[i].fields == b.test[i].fields);
        REQUIRE(a.test[i].gold_label == b.test[i].gold_label);
    }
    // every gold label maps to a defined index
    for (const auto& inst : a.test) REQUIRE_NOTHROW(a.label_space.index_of(inst.gold_label));
}

TEST_CASE("csv parser handles quoted cells with commas and newlines") {
    const auto rows = icpvi::detail::parse_csv("a,b\n\"x,1\",\"line1\nline2\"\n\"he said \"\"hi\"\"\",z\n", "t");
    REQUIRE(rows.size() == 3);
    REQUIRE(rows[1].cells == std::vector<std::string>{"x,1", "line1\nline2"});
    REQUIRE(rows[2].cells == std::vector<std::string>{"he said \"hi\"", "z"});
}
