#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "icpvi/dataset.hpp"
#include "icpvi/detail/csv.hpp"
#include "icpvi/detail/io.hpp"
#include "icpvi/detail/text.hpp"
#include "icpvi/errors.hpp"
#include "icpvi/prompting.hpp"
#include "icpvi/pvi.hpp"

namespace icpvi {

struct RankedInstance {
    Instance instance;
    double pvi_bits = 0.0;
};

/// Training instances grouped by gold label and sorted ascending by PVI
/// (hardest first), ties broken by instance id.
struct HardnessRanking {
    std::vector<std::string> labels; // label-space order
    std::map<std::string, std::vector<RankedInstance>> per_label;
};

inline HardnessRanking rank_hardness(std::span<const ScoredInstance> scored_train, const Dataset& dataset) {
    std::map<std::string_view, const Instance*> by_id;
    for (const auto& inst : dataset.train) by_id.emplace(inst.id, &inst);

    HardnessRanking ranking;
    ranking.labels = dataset.label_space.labels();
    for (const auto& label : ranking.labels) ranking.per_label[label]; // keep empty groups visible

    for (const auto& s : scored_train) {
        const auto it = by_id.find(s.instance_id);
        if (it == by_id.end()) {
            throw ValidationError("scored instance '" + s.instance_id + "' is not in the training split of '" +
                                  dataset.name + "'");
        }
        ranking.per_label[it->second->gold_label].push_back({*it->second, s.pvi_bits});
    }
    for (auto& [label, group] : ranking.per_label) {
        std::sort(group.begin(), group.end(), [](const RankedInstance& a, const RankedInstance& b) {
            if (a.pvi_bits != b.pvi_bits) return a.pvi_bits < b.pvi_bits;
            return a.instance.id < b.instance.id;
        });
    }
    return ranking;
}

/// Takes the per_label hardest instances of every label. Presentation order is
/// label-space order, hardest first within a label.
inline ExemplarSet select_hardest_exemplars(const HardnessRanking& ranking, std::size_t per_label) {
    if (per_label == 0) throw ValidationError("select_hardest_exemplars: per_label must be >= 1");
    ExemplarSet set;
    set.seed = 0;
    for (const auto& label : ranking.labels) {
        const auto it = ranking.per_label.find(label);
        const std::size_t available = (it == ranking.per_label.end()) ? 0 : it->second.size();
        if (available < per_label) {
            throw ValidationError("label '" + label + "' has only " + std::to_string(available) +
                                  " ranked instances, need " + std::to_string(per_label));
        }
        for (std::size_t i = 0; i < per_label; ++i) set.exemplars.push_back(it->second[i].instance);
    }
    set.shots = set.exemplars.size();
    return set;
}

inline void write_ranking_csv(const std::filesystem::path& path, const HardnessRanking& ranking) {
    std::string out = "label,rank,id,pvi_bits\n";
    for (const auto& label : ranking.labels) {
        const auto it = ranking.per_label.find(label);
        if (it == ranking.per_label.end()) continue;
        for (std::size_t i = 0; i < it->second.size(); ++i) {
            out += detail::csv_escape(label);
            out += ",";
            out += std::to_string(i + 1);
            out += ",";
            out += detail::csv_escape(it->second[i].instance.id);
            out += ",";
            out += detail::format_double(it->second[i].pvi_bits);
            out += "\n";
        }
    }
    detail::write_file_atomic(path, out);
}

} // namespace icpvi
