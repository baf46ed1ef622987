#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "icpvi/dataset.hpp"
#include "icpvi/detail/rng.hpp"
#include "icpvi/detail/text.hpp"
#include "icpvi/errors.hpp"

namespace icpvi {

/// The numeric-index answer token for a label index. The leading space is part
/// of the token: a digit preceded by a space is a single token in common BPE
/// vocabularies, and the rendered prompt ends with a bare answer prefix.
inline std::string index_token(int index) {
    return " " + std::to_string(index);
}

inline std::vector<std::string> label_index_tokens(const LabelSpace& space) {
    std::vector<std::string> tokens;
    tokens.reserve(space.size());
    for (std::size_t i = 0; i < space.size(); ++i) tokens.push_back(index_token(static_cast<int>(i)));
    return tokens;
}

/// Layout of one demonstration block: field lines, the question line with the
/// enumerated label menu, and the answer line. Rendering is deterministic;
/// identical inputs produce byte-identical prompts.
struct PromptTemplate {
    std::string id = "template";
    std::vector<std::pair<std::string, std::string>> field_labels; // field name -> display label
    std::string question_text;                                     // full line, includes the label menu
    std::string answer_prefix = "Answer:";
    std::string separator = "\n\n";

    /// Checks that the question enumerates every label exactly once as
    /// "(<index>) <label>" and that at least one field is declared.
    void validate_against(const LabelSpace& space) const {
        if (field_labels.empty()) throw ValidationError("template '" + id + "' declares no fields");
        if (question_text.empty()) throw ValidationError("template '" + id + "' has an empty question");
        for (std::size_t i = 0; i < space.size(); ++i) {
            const std::string menu_entry = "(" + std::to_string(i) + ") " + space.label_at(i);
            const std::size_t n = detail::count_occurrences(question_text, menu_entry);
            if (n != 1) {
                throw ValidationError("template '" + id + "': question must mention \"" + menu_entry +
                                      "\" exactly once (found " + std::to_string(n) + ")");
            }
        }
    }
};

/// Key/value template file:
///   field.<name> = <display label>     (one per field, order preserved)
///   question     = <full question line>
///   answer_prefix = Answer:            (optional)
///   separator    = \n\n                (optional, backslash escapes apply)
///   id           = <template id>       (optional, defaults to the file stem)
inline PromptTemplate parse_template_file(const std::filesystem::path& path) {
    const std::string text = detail::read_file(path);
    PromptTemplate tmpl;
    tmpl.id = path.stem().string();

    auto unescape = [](std::string_view s) {
        std::string out;
        out.reserve(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] == '\\' && i + 1 < s.size()) {
                ++i;
                switch (s[i]) {
                case 'n': out.push_back('\n'); break;
                case 't': out.push_back('\t'); break;
                case '\\': out.push_back('\\'); break;
                default: out.push_back('\\'); out.push_back(s[i]); break;
                }
            } else {
                out.push_back(s[i]);
            }
        }
        return out;
    };

    std::size_t line_no = 0;
    bool saw_question = false;
    for (const auto& raw : detail::split(text, "\n")) {
        ++line_no;
        const std::string_view line = detail::trim(raw);
        if (line.empty() || line.front() == '#') continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        const std::string key(detail::trim(line.substr(0, eq)));
        const std::string value(detail::trim(line.substr(eq + 1)));
        if (key.rfind("field.", 0) == 0) {
            const std::string name = key.substr(6);
            if (name.empty()) throw ConfigError(path.string() + ": empty field name in '" + key + "'");
            tmpl.field_labels.emplace_back(name, value);
        } else if (key == "question") {
            tmpl.question_text = value;
            saw_question = true;
        } else if (key == "answer_prefix") {
            tmpl.answer_prefix = value;
        } else if (key == "separator") {
            tmpl.separator = unescape(value);
        } else if (key == "id") {
            tmpl.id = value;
        } else {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
        }
    }
    if (tmpl.field_labels.empty()) throw ConfigError(path.string() + ": template declares no 'field.*' entries");
    if (!saw_question) throw ConfigError(path.string() + ": template declares no 'question'");
    return tmpl;
}

/// A fixed sample of demonstrations, reused for every query of a run.
struct ExemplarSet {
    std::uint64_t seed = 0;
    std::size_t shots = 0;
    std::vector<Instance> exemplars;
};

/// Uniform sample without replacement from the training split, deterministic
/// given (dataset, shots, seed). Balanced mode draws shots/|labels| per label;
/// presentation order is the shuffled order under the seed either way.
inline ExemplarSet sample_exemplars(const Dataset& dataset, std::size_t shots, std::uint64_t seed,
                                    bool balanced = false) {
    if (shots > dataset.train.size()) {
        throw ValidationError(dataset.name + ": requested " + std::to_string(shots) +
                              " exemplars but the training split has only " +
                              std::to_string(dataset.train.size()));
    }
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> chosen;

    if (balanced) {
        const std::size_t n_labels = dataset.label_space.size();
        if (shots % n_labels != 0) {
            throw ValidationError("balanced sampling needs shots divisible by the number of labels (" +
                                  std::to_string(shots) + " % " + std::to_string(n_labels) + " != 0)");
        }
        const std::size_t per_label = shots / n_labels;
        std::vector<std::vector<std::size_t>> buckets(n_labels);
        for (std::size_t i = 0; i < dataset.train.size(); ++i) {
            buckets[static_cast<std::size_t>(dataset.label_space.index_of(dataset.train[i].gold_label))]
                .push_back(i);
        }
        for (std::size_t l = 0; l < n_labels; ++l) {
            if (buckets[l].size() < per_label) {
                throw ValidationError(dataset.name + ": label '" + dataset.label_space.label_at(l) +
                                      "' has only " + std::to_string(buckets[l].size()) +
                                      " training instances, need " + std::to_string(per_label));
            }
            detail::shuffle(buckets[l], rng);
            chosen.insert(chosen.end(), buckets[l].begin(), buckets[l].begin() + static_cast<long>(per_label));
        }
        detail::shuffle(chosen, rng); // presentation order
    } else {
        std::vector<std::size_t> indices(dataset.train.size());
        std::iota(indices.begin(), indices.end(), 0);
        detail::shuffle(indices, rng);
        chosen.assign(indices.begin(), indices.begin() + static_cast<long>(shots));
    }

    ExemplarSet set;
    set.seed = seed;
    set.shots = shots;
    set.exemplars.reserve(shots);
    for (const std::size_t i : chosen) set.exemplars.push_back(dataset.train[i]);
    return set;
}

/// Shot counts to sweep: [k, 2k] with k = max(|labels|, min_shots_floor).
/// A floor of 0 means "use the number of labels".
inline std::vector<std::size_t> default_shot_counts(const LabelSpace& space, std::size_t min_shots_floor = 0) {
    const std::size_t k = std::max(space.size(), min_shots_floor);
    return {k, 2 * k};
}

/// The two prompts scored for one query: the input-target prompt carries the
/// rendered demonstrations and the query's fields; the null-target prompt
/// carries only the answer lines.
struct PromptPair {
    std::string input_target;
    std::string null_target;
    std::string target_token;
};

namespace detail {

inline void append_block(std::string& out, const PromptTemplate& tmpl, const Instance& inst,
                         const std::string* answer_value) {
    for (const auto& [name, display] : tmpl.field_labels) {
        const std::string* value = inst.field(name);
        if (!value) {
            throw ValidationError("instance '" + inst.id + "' has no field '" + name +
                                  "' required by template '" + tmpl.id + "'");
        }
        out += display;
        out += ": ";
        out += *value;
        out += "\n";
    }
    out += tmpl.question_text;
    out += "\n";
    out += tmpl.answer_prefix;
    if (answer_value) {
        out += " ";
        out += *answer_value;
    }
}

} // namespace detail

inline PromptPair build_prompt_pair(const PromptTemplate& tmpl, const ExemplarSet& exemplars,
                                    const Instance& query, const LabelSpace& space) {
    for (const auto& ex : exemplars.exemplars) {
        if (ex.id == query.id) {
            throw ValidationError("query instance '" + query.id + "' is also an exemplar");
        }
    }
    PromptPair pair;
    for (const auto& ex : exemplars.exemplars) {
        const std::string answer = std::to_string(space.index_of(ex.gold_label));
        detail::append_block(pair.input_target, tmpl, ex, &answer);
        pair.input_target += tmpl.separator;
        pair.null_target += tmpl.answer_prefix;
        pair.null_target += " ";
        pair.null_target += answer;
        pair.null_target += tmpl.separator;
    }
    detail::append_block(pair.input_target, tmpl, query, nullptr);
    pair.null_target += tmpl.answer_prefix;
    pair.target_token = index_token(space.index_of(query.gold_label));
    return pair;
}

} // namespace icpvi
