#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "icpvi/detail/csv.hpp"
#include "icpvi/detail/io.hpp"
#include "icpvi/detail/sha256.hpp"
#include "icpvi/detail/text.hpp"
#include "icpvi/errors.hpp"
#include "icpvi/pvi.hpp"

namespace icpvi {

inline nlohmann::ordered_json scored_to_json(const ScoredInstance& s) {
    nlohmann::ordered_json j;
    j["instance_id"] = s.instance_id;
    j["logp_null_bits"] = s.logp_null_bits;
    j["logp_input_bits"] = s.logp_input_bits;
    j["pvi_bits"] = s.pvi_bits;
    j["predicted_label"] = s.predicted_label;
    j["correct"] = s.correct;
    j["floored"] = s.floored;
    return j;
}

inline ScoredInstance scored_from_json(const nlohmann::json& j) {
    ScoredInstance s;
    s.instance_id = j.at("instance_id").get<std::string>();
    s.logp_null_bits = j.at("logp_null_bits").get<double>();
    s.logp_input_bits = j.at("logp_input_bits").get<double>();
    s.pvi_bits = j.at("pvi_bits").get<double>();
    s.predicted_label = j.at("predicted_label").get<std::string>();
    s.correct = j.at("correct").get<bool>();
    s.floored = j.at("floored").get<bool>();
    return s;
}

inline std::string scores_to_jsonl(const std::vector<ScoredInstance>& scored) {
    std::string out;
    for (const auto& s : scored) {
        out += scored_to_json(s).dump();
        out += "\n";
    }
    return out;
}

inline void write_scores_jsonl(const std::filesystem::path& path, const std::vector<ScoredInstance>& scored) {
    detail::write_file_atomic(path, scores_to_jsonl(scored));
}

inline std::vector<ScoredInstance> read_scores_jsonl(const std::filesystem::path& path) {
    const std::string text = detail::read_file(path);
    std::vector<ScoredInstance> out;
    std::size_t line_no = 0;
    for (const auto& line : detail::split(text, "\n")) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        try {
            out.push_back(scored_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw LoadError(path.string() + ":" + std::to_string(line_no) + ": bad score record: " + e.what());
        }
    }
    return out;
}

inline void write_scores_csv(const std::filesystem::path& path, const std::vector<ScoredInstance>& scored) {
    std::string out = "instance_id,logp_null_bits,logp_input_bits,pvi_bits,predicted_label,correct,floored\n";
    for (const auto& s : scored) {
        out += detail::csv_escape(s.instance_id);
        out += ",";
        out += detail::format_double(s.logp_null_bits);
        out += ",";
        out += detail::format_double(s.logp_input_bits);
        out += ",";
        out += detail::format_double(s.pvi_bits);
        out += ",";
        out += detail::csv_escape(s.predicted_label);
        out += ",";
        out += s.correct ? "true" : "false";
        out += ",";
        out += s.floored ? "true" : "false";
        out += "\n";
    }
    detail::write_file_atomic(path, out);
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::ordered_json& doc) {
    detail::write_file_atomic(path, doc.dump(2) + "\n");
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    try {
        return nlohmann::json::parse(detail::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(path.string() + ": invalid JSON: " + e.what());
    }
}

} // namespace icpvi
