#include "dlot/analytics.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

#include "dlot/error.hpp"
#include "dlot/export.hpp"

namespace dlot {

namespace {

using ItemKey = std::pair<std::uint64_t, std::string>;

void require_raters(const std::vector<std::string>& raters) {
    if (raters.size() < 2) throw Error(ErrorCode::kInvalidArgument, "agreement needs at least two raters");
    if (std::set<std::string>(raters.begin(), raters.end()).size() != raters.size()) {
        throw Error(ErrorCode::kInvalidArgument, "rater list contains duplicates");
    }
}

void require_shape(const RatingsTable& table, std::size_t raters, const char* statistic) {
    if (raters != 0 && table.raters.size() != raters) {
        throw Error(ErrorCode::kInvalidArgument,
                    std::string(statistic) + " needs exactly " + std::to_string(raters) + " raters");
    }
    if (table.raters.size() < 2) throw Error(ErrorCode::kInvalidArgument, "agreement needs at least two raters");
    if (table.cells.empty()) throw Error(ErrorCode::kInvalidArgument, "ratings table has no complete items");
}

std::vector<std::string> categories_of(const RatingsTable& table) {
    std::set<std::string> seen;
    for (const auto& row : table.cells) seen.insert(row.begin(), row.end());
    return {seen.begin(), seen.end()};
}

}  // namespace

RatingsTable align(std::span<const Observation> observations, const CategoryGroup& group,
                   const std::vector<std::string>& raters) {
    if (group.selection != Selection::kSingle) {
        throw Error(ErrorCode::kInvalidArgument,
                    "group '" + group.name + "' is multiple-selection; agreement needs one label per item");
    }
    require_raters(raters);
    std::map<std::string, std::size_t> rater_pos;
    for (std::size_t i = 0; i < raters.size(); ++i) rater_pos[raters[i]] = i;

    std::map<ItemKey, std::vector<std::optional<std::string>>> items;
    for (const auto& obs : observations) {
        const auto r = rater_pos.find(obs.observer_id);
        if (r == rater_pos.end()) continue;
        auto& slots = items[{obs.prompt_index, obs.subject_id}];
        slots.resize(raters.size());
        if (obs.status != ObservationStatus::kLogged || slots[r->second]) continue;
        const auto sel = obs.selections.find(group.name);
        if (sel == obs.selections.end() || sel->second.size() != 1) continue;
        slots[r->second] = *sel->second.begin();
    }

    RatingsTable table;
    table.raters = raters;
    for (auto& [key, slots] : items) {
        if (!std::all_of(slots.begin(), slots.end(), [](const auto& s) { return s.has_value(); })) {
            ++table.dropped;
            continue;
        }
        table.items.push_back({key.first, key.second});
        std::vector<std::string> row;
        row.reserve(slots.size());
        for (auto& s : slots) row.push_back(std::move(*s));
        table.cells.push_back(std::move(row));
    }
    return table;
}

RatingsTable align_csv(const std::vector<std::vector<std::string>>& csv, const std::string& group,
                       const std::vector<std::string>& raters) {
    if (csv.empty()) throw Error(ErrorCode::kInvalidArgument, "CSV has no header row");
    const auto& header = csv.front();
    auto column = [&](const std::string& name, std::size_t from) {
        const auto it = std::find(header.begin() + static_cast<std::ptrdiff_t>(from), header.end(), name);
        if (it == header.end()) throw Error(ErrorCode::kInvalidArgument, "CSV has no column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t subject_col = column("subject_id", 0);
    const std::size_t observer_col = column("observer_id", 0);
    const std::size_t index_col = column("prompt_index", 0);
    const std::size_t status_col = column("status", 0);
    // Category columns follow the fixed columns, so a group may reuse a fixed name.
    const std::size_t group_col = column(group, std::min(kFixedColumns, header.size()));

    CategoryGroup single{group, {}, Selection::kSingle};
    std::set<std::string> labels;
    std::vector<Observation> observations;
    for (std::size_t r = 1; r < csv.size(); ++r) {
        const auto& row = csv[r];
        if (row.size() != header.size()) {
            throw Error(ErrorCode::kInvalidArgument, "CSV row " + std::to_string(r + 1) + " has " +
                                                         std::to_string(row.size()) + " fields, expected " +
                                                         std::to_string(header.size()));
        }
        Observation obs;
        obs.observer_id = row[observer_col];
        obs.subject_id = row[subject_col];
        try {
            std::size_t used = 0;
            obs.prompt_index = std::stoull(row[index_col], &used);
            if (used != row[index_col].size()) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            throw Error(ErrorCode::kInvalidArgument, "CSV row " + std::to_string(r + 1) + ": bad prompt_index");
        }
        const auto status = observation_status_from_string(row[status_col]);
        if (!status) throw Error(ErrorCode::kInvalidArgument, "CSV row " + std::to_string(r + 1) + ": bad status");
        obs.status = *status;
        if (obs.status == ObservationStatus::kLogged) {
            const std::string& cell = row[group_col];
            if (cell.empty() || cell.find(kMultiSelectJoiner) != std::string::npos) {
                throw Error(ErrorCode::kInvalidArgument,
                            "column '" + group + "' is not a single-selection group (row " + std::to_string(r + 1) + ")");
            }
            obs.selections[group] = {cell};
            labels.insert(cell);
        }
        observations.push_back(std::move(obs));
    }
    single.labels.assign(labels.begin(), labels.end());
    return align(observations, single, raters);
}

AgreementResult percent_agreement(const RatingsTable& table) {
    require_shape(table, 2, "percent agreement");
    std::size_t agree = 0;
    for (const auto& row : table.cells) agree += row[0] == row[1] ? 1 : 0;
    AgreementResult result;
    result.statistic = AgreementStatistic::kPercent;
    result.n_items = table.cells.size();
    result.observed = static_cast<double>(agree) / static_cast<double>(result.n_items);
    result.chance = 0.0;
    result.value = result.observed;
    return result;
}

AgreementResult cohen_kappa(const RatingsTable& table) {
    require_shape(table, 2, "Cohen's kappa");
    AgreementResult result;
    result.statistic = AgreementStatistic::kCohenKappa;
    result.categories = categories_of(table);
    const std::size_t k = result.categories.size();
    auto index_of = [&](const std::string& label) {
        return static_cast<std::size_t>(
            std::lower_bound(result.categories.begin(), result.categories.end(), label) - result.categories.begin());
    };
    result.confusion.assign(k, std::vector<std::size_t>(k, 0));
    for (const auto& row : table.cells) ++result.confusion[index_of(row[0])][index_of(row[1])];

    const std::size_t n = table.cells.size();
    result.n_items = n;
    std::size_t diagonal = 0;
    std::size_t marginal_products = 0;
    for (std::size_t c = 0; c < k; ++c) {
        diagonal += result.confusion[c][c];
        std::size_t row_total = 0;
        std::size_t col_total = 0;
        for (std::size_t j = 0; j < k; ++j) {
            row_total += result.confusion[c][j];
            col_total += result.confusion[j][c];
        }
        marginal_products += row_total * col_total;
    }
    const double nn = static_cast<double>(n);
    result.observed = static_cast<double>(diagonal) / nn;
    result.chance = static_cast<double>(marginal_products) / (nn * nn);
    if (k < 2) throw Error(ErrorCode::kUndefined, "kappa undefined: no chance variation");
    result.value = (result.observed - result.chance) / (1.0 - result.chance);
    return result;
}

AgreementResult fleiss_kappa(const RatingsTable& table) {
    require_shape(table, 0, "Fleiss' kappa");
    AgreementResult result;
    result.statistic = AgreementStatistic::kFleissKappa;
    result.categories = categories_of(table);
    const std::size_t k = result.categories.size();
    const std::size_t n = table.raters.size();
    const std::size_t items = table.cells.size();
    result.n_items = items;

    std::vector<std::size_t> totals(k, 0);
    double sum_pi = 0.0;
    std::vector<std::size_t> counts(k);
    for (const auto& row : table.cells) {
        std::fill(counts.begin(), counts.end(), 0);
        for (const auto& label : row) {
            const auto c = static_cast<std::size_t>(
                std::lower_bound(result.categories.begin(), result.categories.end(), label) -
                result.categories.begin());
            ++counts[c];
            ++totals[c];
        }
        std::size_t squares = 0;
        for (std::size_t c = 0; c < k; ++c) squares += counts[c] * counts[c];
        sum_pi += static_cast<double>(squares - n) / static_cast<double>(n * (n - 1));
    }
    result.observed = sum_pi / static_cast<double>(items);
    const double ratings = static_cast<double>(items * n);
    double chance = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        const double p = static_cast<double>(totals[c]) / ratings;
        chance += p * p;
    }
    result.chance = chance;
    if (k < 2) throw Error(ErrorCode::kUndefined, "kappa undefined: no chance variation");
    result.value = (result.observed - result.chance) / (1.0 - result.chance);
    return result;
}

const char* to_string(AgreementStatistic statistic) {
    switch (statistic) {
        case AgreementStatistic::kPercent: return "percent";
        case AgreementStatistic::kCohenKappa: return "cohen";
        case AgreementStatistic::kFleissKappa: return "fleiss";
    }
    return "percent";
}

SusResponse make_sus_response(std::span<const int> answers) {
    if (answers.size() != 10) {
        throw Error(ErrorCode::kInvalidArgument,
                    "SUS response needs exactly 10 answers, got " + std::to_string(answers.size()));
    }
    SusResponse response{};
    for (std::size_t i = 0; i < 10; ++i) {
        if (answers[i] < 1 || answers[i] > 5) {
            throw Error(ErrorCode::kInvalidArgument,
                        "SUS answer " + std::to_string(i + 1) + " is " + std::to_string(answers[i]) + ", expected 1..5");
        }
        response[i] = answers[i];
    }
    return response;
}

double sus_score(const SusResponse& response) {
    make_sus_response(response);
    int points = 0;
    for (std::size_t i = 0; i < response.size(); ++i) {
        // Item 1 sits at index 0: even indices are the positively worded items.
        points += i % 2 == 0 ? response[i] - 1 : 5 - response[i];
    }
    return 2.5 * points;
}

double sus_mean(std::span<const SusResponse> responses) {
    if (responses.empty()) throw Error(ErrorCode::kInvalidArgument, "SUS mean needs at least one response");
    double total = 0.0;
    for (const auto& r : responses) total += sus_score(r);
    return total / static_cast<double>(responses.size());
}

}  // namespace dlot
