#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "icpvi/detail/csv.hpp"
#include "icpvi/detail/io.hpp"
#include "icpvi/detail/text.hpp"
#include "icpvi/errors.hpp"

namespace icpvi {

/// One labeled datum. `fields` keeps the declared order (e.g. premise before
/// hypothesis) because prompt layout depends on it.
struct Instance {
    std::string id;
    std::vector<std::pair<std::string, std::string>> fields; // (name, text)
    std::string gold_label;
    std::optional<std::vector<std::string>> annotations;

    const std::string* field(std::string_view name) const {
        for (const auto& [key, value] : fields) {
            if (key == name) return &value;
        }
        return nullptr;
    }
};

/// Ordered distinct labels; a label's index is its position in the declared
/// order and is stable across runs.
class LabelSpace {
public:
    LabelSpace() = default;

    explicit LabelSpace(std::vector<std::string> labels) : labels_(std::move(labels)) {
        if (labels_.empty()) throw ValidationError("label space must not be empty");
        for (std::size_t i = 0; i < labels_.size(); ++i) {
            if (!index_.emplace(labels_[i], static_cast<int>(i)).second) {
                throw ValidationError("duplicate label in label space: '" + labels_[i] + "'");
            }
        }
    }

    const std::vector<std::string>& labels() const { return labels_; }
    std::size_t size() const { return labels_.size(); }
    const std::string& label_at(std::size_t index) const { return labels_.at(index); }

    std::optional<int> find(std::string_view label) const {
        const auto it = index_.find(label);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    int index_of(std::string_view label) const {
        const auto idx = find(label);
        if (!idx) throw ValidationError("label '" + std::string(label) + "' is not in the label space");
        return *idx;
    }

private:
    std::vector<std::string> labels_;
    std::map<std::string, int, std::less<>> index_;
};

struct Dataset {
    std::string name;
    LabelSpace label_space;
    std::vector<Instance> train;
    std::vector<Instance> test;
};

enum class FileFormat { jsonl, csv };

inline FileFormat parse_file_format(std::string_view s) {
    if (s == "jsonl") return FileFormat::jsonl;
    if (s == "csv") return FileFormat::csv;
    throw ConfigError("unknown file format '" + std::string(s) + "' (expected jsonl or csv)");
}

struct LoadOptions {
    FileFormat format = FileFormat::jsonl;
    std::vector<std::string> field_names;      // text fields, in prompt order
    std::string label_field = "label";
    std::optional<std::string> annotation_field;
    std::string id_field = "id";               // falls back to the record ordinal
    std::optional<std::vector<std::string>> label_order; // explicit index order
    std::string annotation_delimiter = "|";
    std::string dataset_name = "dataset";
};

namespace detail {

inline std::string json_scalar_to_string(const nlohmann::json& v, const std::string& where) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
    if (v.is_number_float()) return format_double(v.get<double>());
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    throw LoadError(where + ": expected a scalar value, got " + std::string(v.type_name()));
}

inline std::vector<std::string> parse_annotation_cell(const std::string& cell, const std::string& delimiter) {
    std::vector<std::string> out;
    for (auto& part : split(cell, delimiter)) {
        std::string t(trim(part));
        if (!t.empty()) out.push_back(std::move(t));
    }
    return out;
}

inline std::vector<Instance> load_instances_jsonl(const std::string& path, const LoadOptions& opts) {
    const std::string text = read_file(path);
    std::vector<Instance> instances;
    std::size_t line_no = 0;
    std::size_t ordinal = 0;
    for (const auto& line : split(text, "\n")) {
        ++line_no;
        if (trim(line).empty()) continue;
        ++ordinal;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw LoadError(path + ":" + std::to_string(line_no) + ": invalid JSON: " + e.what());
        }
        if (!rec.is_object()) {
            throw LoadError(path + ":" + std::to_string(line_no) + ": record is not a JSON object");
        }

        Instance inst;
        if (rec.contains(opts.id_field)) {
            inst.id = json_scalar_to_string(rec.at(opts.id_field), path + ":" + std::to_string(line_no) +
                                                                       " field '" + opts.id_field + "'");
        } else {
            inst.id = std::to_string(ordinal);
        }
        const std::string where = path + ":" + std::to_string(line_no) + " (record '" + inst.id + "')";

        for (const auto& name : opts.field_names) {
            if (!rec.contains(name)) throw LoadError(where + ": missing field '" + name + "'");
            inst.fields.emplace_back(name, json_scalar_to_string(rec.at(name), where + " field '" + name + "'"));
        }
        if (!rec.contains(opts.label_field)) {
            throw LoadError(where + ": missing field '" + opts.label_field + "'");
        }
        inst.gold_label = json_scalar_to_string(rec.at(opts.label_field), where + " label");

        if (opts.annotation_field) {
            if (!rec.contains(*opts.annotation_field)) {
                throw LoadError(where + ": missing field '" + *opts.annotation_field + "'");
            }
            const auto& v = rec.at(*opts.annotation_field);
            std::vector<std::string> ann;
            if (v.is_array()) {
                for (const auto& e : v) ann.push_back(json_scalar_to_string(e, where + " annotation"));
            } else if (!v.is_null()) {
                ann = parse_annotation_cell(json_scalar_to_string(v, where + " annotations"),
                                            opts.annotation_delimiter);
            }
            if (!ann.empty()) inst.annotations = std::move(ann);
        }
        instances.push_back(std::move(inst));
    }
    return instances;
}

inline std::vector<Instance> load_instances_csv(const std::string& path, const LoadOptions& opts) {
    const std::string text = read_file(path);
    const auto rows = parse_csv(text, path);
    if (rows.empty()) throw LoadError(path + ": missing CSV header row");

    const auto& header = rows.front().cells;
    auto column = [&](const std::string& name) -> std::optional<std::size_t> {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) return std::nullopt;
        return static_cast<std::size_t>(it - header.begin());
    };
    auto required_column = [&](const std::string& name) {
        const auto col = column(name);
        if (!col) throw LoadError(path + ": CSV header has no column '" + name + "'");
        return *col;
    };

    std::vector<std::size_t> field_cols;
    field_cols.reserve(opts.field_names.size());
    for (const auto& name : opts.field_names) field_cols.push_back(required_column(name));
    const std::size_t label_col = required_column(opts.label_field);
    const std::optional<std::size_t> ann_col =
        opts.annotation_field ? std::optional(required_column(*opts.annotation_field)) : std::nullopt;
    const std::optional<std::size_t> id_col = column(opts.id_field);

    std::vector<Instance> instances;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.cells.size() == 1 && row.cells[0].empty()) continue; // trailing blank line
        if (row.cells.size() != header.size()) {
            throw LoadError(path + ":" + std::to_string(row.line) + ": expected " +
                            std::to_string(header.size()) + " cells, got " + std::to_string(row.cells.size()));
        }
        Instance inst;
        inst.id = id_col ? row.cells[*id_col] : std::to_string(r);
        if (inst.id.empty()) {
            throw LoadError(path + ":" + std::to_string(row.line) + ": empty value in id column '" +
                            opts.id_field + "'");
        }
        for (std::size_t f = 0; f < field_cols.size(); ++f) {
            inst.fields.emplace_back(opts.field_names[f], row.cells[field_cols[f]]);
        }
        inst.gold_label = row.cells[label_col];
        if (ann_col) {
            auto ann = parse_annotation_cell(row.cells[*ann_col], opts.annotation_delimiter);
            if (!ann.empty()) inst.annotations = std::move(ann);
        }
        instances.push_back(std::move(inst));
    }
    return instances;
}

inline std::vector<Instance> load_instances(const std::string& path, const LoadOptions& opts) {
    return opts.format == FileFormat::jsonl ? load_instances_jsonl(path, opts)
                                            : load_instances_csv(path, opts);
}

inline LabelSpace build_label_space(const std::vector<Instance>& train, const std::vector<Instance>& test,
                                    const LoadOptions& opts) {
    if (opts.label_order) return LabelSpace(*opts.label_order);
    std::set<std::string> distinct;
    for (const auto* split : {&train, &test}) {
        for (const auto& inst : *split) distinct.insert(inst.gold_label);
    }
    return LabelSpace(std::vector<std::string>(distinct.begin(), distinct.end()));
}

inline void validate_dataset(const Dataset& ds) {
    std::set<std::string_view> seen;
    for (const auto* split : {&ds.train, &ds.test}) {
        for (const auto& inst : *split) {
            if (!seen.insert(inst.id).second) {
                throw ValidationError(ds.name + ": duplicate instance id '" + inst.id + "'");
            }
            if (!ds.label_space.find(inst.gold_label)) {
                throw ValidationError(ds.name + ": instance '" + inst.id + "' has label '" + inst.gold_label +
                                      "' outside the label space");
            }
            if (inst.annotations) {
                for (const auto& a : *inst.annotations) {
                    if (!ds.label_space.find(a)) {
                        throw ValidationError(ds.name + ": instance '" + inst.id +
                                              "' has unknown label '" + a + "' in annotations");
                    }
                }
            }
        }
    }
}

} // namespace detail

/// Loads a test split, and optionally a training split, into a validated
/// Dataset. The label space is the sorted set of distinct gold labels unless
/// an explicit order is configured. Instance order is preserved from file.
inline Dataset load_dataset(const std::string& test_path, const std::optional<std::string>& train_path,
                            const LoadOptions& opts) {
    Dataset ds;
    ds.name = opts.dataset_name;
    ds.test = detail::load_instances(test_path, opts);
    if (train_path) ds.train = detail::load_instances(*train_path, opts);
    ds.label_space = detail::build_label_space(ds.train, ds.test, opts);
    detail::validate_dataset(ds);
    return ds;
}

inline Dataset load_dataset(const std::string& test_path, const LoadOptions& opts) {
    return load_dataset(test_path, std::nullopt, opts);
}

/// First n test instances in file order; the training split is untouched.
inline Dataset head(const Dataset& ds, std::size_t n) {
    Dataset out = ds;
    if (out.test.size() > n) out.test.resize(n);
    return out;
}

} // namespace icpvi
