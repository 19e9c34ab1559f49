#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <tuple>

#include "dlot/export.hpp"
#include "dlot/journal.hpp"
#include "generators.hpp"
#include "oracles.hpp"

using namespace dlot;
namespace dt = dlot::testing;

namespace {

Timestamp t0() { return *parse_iso8601("2024-01-15T09:00:00.000Z"); }

SessionConfig two_subject_config() {
    SessionConfig c = example_config();
    c.roster.subjects = {{"s1", "Ana", std::nullopt}, {"s2", "Ben, \"B\"", std::nullopt}};
    return c;
}

Observation logged(const std::string& observer, const std::string& subject, std::uint64_t prompt, Timestamp at,
                   Selections sel) {
    return {observer, subject, prompt, at, std::move(sel), ObservationStatus::kLogged};
}

std::vector<std::vector<std::string>> expected_matrix(const SessionState& s) {
    std::vector<std::vector<std::string>> m = {export_header(s.config().scheme)};
    for (const auto& r : to_rows(s)) m.push_back(row_cells(r));
    return m;
}

}  // namespace

TEST(Export, EmptySession) {
    const auto s = start_session(example_config(), t0());
    EXPECT_TRUE(to_rows(s).empty());
    const std::string csv = write_csv(s.config().scheme, {});
    EXPECT_EQ(csv, "session_id,subject_id,subject_name,observer_id,prompt_index,timestamp,status,affect,behavior\r\n");
    const auto sheet = dt::read_xlsx(write_xlsx(s.config().scheme, {}));
    ASSERT_EQ(sheet.cells.size(), 1u);
    EXPECT_EQ(sheet.cells[0], export_header(s.config().scheme));
}

TEST(Export, SubjectIsPrimarySortKey) {
    auto s = start_session(two_subject_config(), t0());
    s = apply_observation(std::move(s), logged("r1", "s2", 0, t0() + Millis{1000}, {{"affect", {"engaged"}}}));
    s = apply_observation(std::move(s), logged("r1", "s1", 1, t0() + Millis{2000}, {{"affect", {"boredom"}}}));
    const auto rows = to_rows(s);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].subject_id, "s1");
    EXPECT_EQ(rows[0].timestamp, "2024-01-15T09:00:02.000Z");
    EXPECT_EQ(rows[1].subject_id, "s2");
    EXPECT_EQ(rows[1].subject_name, "Ben, \"B\"");
}

TEST(Export, ObserverBreaksTimestampTies) {
    auto s = start_session(two_subject_config(), t0());
    const auto at = t0() + Millis{500};
    s = apply_observation(std::move(s), logged("r3", "s1", 0, at, {{"affect", {"engaged"}}}));
    s = apply_observation(std::move(s), logged("r1", "s1", 0, at, {{"affect", {"neutral"}}}));
    s = apply_observation(std::move(s), logged("r2", "s1", 0, at, {{"affect", {"boredom"}}}));
    const auto rows = to_rows(s);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0].observer_id, "r1");
    EXPECT_EQ(rows[1].observer_id, "r2");
    EXPECT_EQ(rows[2].observer_id, "r3");
}

TEST(Export, CellsFollowSchemeOrder) {
    auto s = start_session(example_config(), t0());
    s = apply_observation(std::move(s), logged("r1", "s01", 0, t0(), {{"affect", {"confusion"}},
                                                                       {"behavior", {"on-task-conversation", "on-task"}}}));
    Observation missed{"r2", "s01", 0, t0() + Millis{5000}, {}, ObservationStatus::kMissed};
    s = apply_observation(std::move(s), missed);
    const auto rows = to_rows(s);
    EXPECT_EQ(rows[0].cells, (std::vector<std::string>{"confusion", "on-task;on-task-conversation"}));
    EXPECT_EQ(rows[0].status, "logged");
    EXPECT_EQ(rows[1].cells, (std::vector<std::string>{"", ""}));
    EXPECT_EQ(rows[1].status, "missed");
}

TEST(Export, CsvQuoting) {
    EXPECT_EQ(write_csv_matrix({{"on;task, sort-of", "plain", "say \"hi\"", "two\nlines"}}),
              "\"on;task, sort-of\",plain,\"say \"\"hi\"\"\",\"two\nlines\"\r\n");
    const std::string csv = write_csv(example_config().scheme, {});
    EXPECT_NE(csv.substr(0, 3), "\xEF\xBB\xBF");
}

TEST(Export, ProductionParserAcceptsLfAndCrlf) {
    const auto crlf = parse_csv("a,\"b,c\"\r\n\"x\"\"y\",\r\n");
    const auto lf = parse_csv("a,\"b,c\"\n\"x\"\"y\",\n");
    const std::vector<std::vector<std::string>> want = {{"a", "b,c"}, {"x\"y", ""}};
    EXPECT_EQ(crlf, want);
    EXPECT_EQ(lf, want);
    EXPECT_THROW(parse_csv("\"open"), std::exception);
}

TEST(Export, XlsxStructure) {
    auto s = start_session(example_config(), t0());
    s = apply_observation(std::move(s), logged("r1", "s01", 0, t0(), {{"affect", {"engaged"}}}));
    const std::string xlsx = write_xlsx(s.config().scheme, to_rows(s));
    const auto sheet = dt::read_xlsx(xlsx);
    EXPECT_EQ(sheet.sheet_name, "observations");
    EXPECT_EQ(std::set<std::string>(sheet.part_names.begin(), sheet.part_names.end()),
              (std::set<std::string>{"[Content_Types].xml", "_rels/.rels", "xl/workbook.xml",
                                     "xl/_rels/workbook.xml.rels", "xl/worksheets/sheet1.xml"}));
    EXPECT_EQ(sheet.part_names.size(), 5u);
    for (const auto& part : dt::read_zip(xlsx)) {
        EXPECT_EQ(part.name.find("sharedStrings"), std::string::npos);
        EXPECT_EQ(part.method, 0);
    }
    EXPECT_EQ(sheet.cells, expected_matrix(s));
}

TEST(Export, XlsxEscapesAwkwardText) {
    LabelScheme scheme{{{"g", {"x"}, Selection::kSingle}}};
    ExportRow row{"sid", "<s&1>", "tab\there", "ctl\x01\x1f", 3, "2024-01-15T09:00:00.000Z", "logged",
                  {"_x0041_ \"q\" 'a' \r\n end"}};
    const std::vector<ExportRow> rows{row};
    const auto sheet = dt::read_xlsx(write_xlsx(scheme, rows));
    const std::vector<std::vector<std::string>> want = {export_header(scheme), row_cells(row)};
    EXPECT_EQ(sheet.cells, want);
}

TEST(Export, DeterministicBytes) {
    dt::TempDir dir;
    dt::Rng rng(5);
    for (int i = 0; i < 10; ++i) {
        const auto g = dt::generate_session(rng, dir.path());
        const auto rows = to_rows(g.live);
        EXPECT_EQ(write_csv(g.config.scheme, rows), write_csv(g.config.scheme, to_rows(*replay(g.journal).state)));
        EXPECT_EQ(write_xlsx(g.config.scheme, rows), write_xlsx(g.config.scheme, to_rows(*replay(g.journal).state)));
    }
}

TEST(Export, RoundTripAndAgreementOnGeneratedSessions) {
    dt::TempDir dir;
    dt::Rng rng(11);
    for (int i = 0; i < 30; ++i) {
        const auto g = dt::generate_session(rng, dir.path());
        const auto rows = to_rows(g.live);
        const auto matrix = expected_matrix(g.live);
        const auto csv = dt::strict_csv_parse(write_csv(g.config.scheme, rows));
        ASSERT_EQ(csv, matrix);
        ASSERT_EQ(parse_csv(write_csv(g.config.scheme, rows)), matrix);
        ASSERT_EQ(dt::read_xlsx(write_xlsx(g.config.scheme, rows)).cells, csv);

        std::multiset<std::tuple<std::string, std::string, std::uint64_t>> in_session;
        std::multiset<std::tuple<std::string, std::string, std::uint64_t>> in_export;
        for (const auto& o : g.live.observations()) in_session.insert({o.subject_id, o.observer_id, o.prompt_index});
        for (const auto& r : rows) in_export.insert({r.subject_id, r.observer_id, r.prompt_index});
        ASSERT_EQ(in_session, in_export);
    }
}

// Writes a class-sized fixture (30 subjects x 120 prompts) for opening in a spreadsheet application.
TEST(Export, ClassSizedFixture) {
    auto s = start_session(example_config(), t0());
    const auto& labels = s.config().scheme.groups[0].labels;
    for (std::uint64_t k = 0; k < 120; ++k) {
        const auto& subject = s.config().roster.subjects[k % 30].id;
        for (int r = 1; r <= 3; ++r) {
            s = apply_observation(std::move(s), logged("r" + std::to_string(r), subject, k,
                                                       t0() + Millis{5000 * k + 100 * r},
                                                       {{"affect", {labels[(k + r) % labels.size()]}}, {"behavior", {"on-task"}}}));
        }
    }
    const auto rows = to_rows(s);
    ASSERT_EQ(rows.size(), 360u);
    const std::string xlsx = write_xlsx(s.config().scheme, rows);
    std::ofstream(DLOT_FIXTURE_DIR "/class_fixture.xlsx", std::ios::binary) << xlsx;
    std::ofstream(DLOT_FIXTURE_DIR "/class_fixture.csv", std::ios::binary) << write_csv(s.config().scheme, rows);
    EXPECT_EQ(dt::read_xlsx(xlsx).cells, expected_matrix(s));
}
