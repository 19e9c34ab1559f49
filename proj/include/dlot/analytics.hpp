#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dlot/config.hpp"
#include "dlot/session.hpp"

namespace dlot {

/// Complete-case items × raters matrix of categorical labels.
struct RatingsTable {
    struct Item {
        std::uint64_t prompt_index = 0;
        std::string subject_id;

        bool operator==(const Item&) const = default;
    };

    std::vector<Item> items;
    std::vector<std::string> raters;
    /// cells[item][rater]
    std::vector<std::vector<std::string>> cells;

    std::size_t dropped = 0;  // items lacking a logged rating from some rater
};

/// Builds the complete-case table for one single-selection group. Items are
/// (prompt_index, subject_id) pairs in ascending order; an item is kept only
/// when every rater has a logged observation for it. Throws kInvalidArgument
/// for a multiple-selection group or fewer than two raters.
RatingsTable align(std::span<const Observation> observations, const CategoryGroup& group,
                   const std::vector<std::string>& raters);

/// Same, from the rows of an exported CSV (header included).
RatingsTable align_csv(const std::vector<std::vector<std::string>>& csv, const std::string& group,
                       const std::vector<std::string>& raters);

enum class AgreementStatistic { kPercent, kCohenKappa, kFleissKappa };

struct AgreementResult {
    AgreementStatistic statistic = AgreementStatistic::kPercent;
    double value = 0.0;
    double observed = 0.0;  // p_o, or mean per-item agreement for Fleiss
    double chance = 0.0;    // p_e
    std::size_t n_items = 0;
    /// Two-rater confusion counts, rows = first rater, columns = second rater.
    std::vector<std::string> categories;
    std::vector<std::vector<std::size_t>> confusion;
};

/// Fraction of items on which both raters chose the same label; chance is 0.
AgreementResult percent_agreement(const RatingsTable& table);

/// Throws kUndefined when chance agreement is 1 (no variation to correct for).
AgreementResult cohen_kappa(const RatingsTable& table);

AgreementResult fleiss_kappa(const RatingsTable& table);

const char* to_string(AgreementStatistic statistic);

/// Ten Likert answers in standard SUS item order, each 1..5.
using SusResponse = std::array<int, 10>;

/// Validates raw answers (length and range); throws kInvalidArgument.
SusResponse make_sus_response(std::span<const int> answers);

/// 2.5 × Σ(odd items: answer − 1; even items: 5 − answer), in [0, 100].
double sus_score(const SusResponse& response);

double sus_mean(std::span<const SusResponse> responses);

}  // namespace dlot
