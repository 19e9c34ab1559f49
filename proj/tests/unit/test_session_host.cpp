#include <gtest/gtest.h>

#include "dlot/error.hpp"
#include "dlot/export.hpp"
#include "dlot/service/session_host.hpp"
#include "generators.hpp"

using namespace dlot;
using namespace dlot::service;
namespace dt = dlot::testing;

namespace {

SessionConfig study_config() {
    SessionConfig c = example_config();
    c.roster.subjects.resize(4);
    c.observer_ids = {"r1", "r2"};
    return c;
}

SubmissionRequest request(std::uint64_t prompt, const std::string& label) {
    SubmissionRequest r;
    r.prompt_index = prompt;
    r.selections = {{"affect", {label}}};
    return r;
}

struct Fixture {
    dt::TempDir dir;
    dt::VirtualClock clock;
    std::shared_ptr<SessionHost> host;
    std::string r1;
    std::string r2;

    explicit Fixture(SessionConfig config = study_config()) {
        host = SessionHost::create(std::move(config), dir.path(), clock.clock(), Durability::kDeferred);
        r1 = host->register_observer("r1");
        r2 = host->register_observer("r2");
    }

    std::string journal() const { return read_file(host->journal_path()); }
    std::size_t journal_records() const { return dt::record_ends(journal()).size(); }
};

std::vector<Json> parse_all(const std::vector<StreamEvent>& events) {
    std::vector<Json> out;
    for (const auto& e : events) out.push_back(Json::parse(e.json));
    return out;
}

}  // namespace

TEST(Host, CreateJournalsSnapshot) {
    Fixture f;
    const auto r = replay(f.journal());
    ASSERT_EQ(r.entries.size(), 1u);
    EXPECT_EQ(r.entries[0].kind, EntryKind::kConfigSnapshot);
    EXPECT_EQ(f.host->journal_path().filename(), "class-a-affect.dlotj");
    EXPECT_EQ(f.r1.size(), 32u);
    EXPECT_NE(f.r1, f.r2);
}

TEST(Host, RegistrationRules) {
    Fixture f;
    try {
        f.host->register_observer("stranger");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kUnknownObserver);
    }
    try {
        f.host->register_observer("r1");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kConflict);
    }
}

TEST(Host, AcceptThenIdempotentRetransmission) {
    Fixture f;
    f.host->start();
    f.clock.advance(Millis{1200});
    const auto before = f.journal_records();
    const auto first = f.host->submit(f.r1, request(0, "engaged"));
    ASSERT_TRUE(first.accepted);
    EXPECT_FALSE(first.duplicate);
    EXPECT_EQ(f.journal_records(), before + 1);
    EXPECT_EQ(first.logged_at, f.clock.now());

    f.clock.advance(Millis{300});
    const auto again = f.host->submit(f.r1, request(0, "engaged"));
    EXPECT_TRUE(again.accepted);
    EXPECT_TRUE(again.duplicate);
    EXPECT_EQ(again.seq, first.seq);
    EXPECT_EQ(again.logged_at, first.logged_at);
    EXPECT_EQ(f.journal_records(), before + 1);

    const auto changed = f.host->submit(f.r1, request(0, "boredom"));
    EXPECT_FALSE(changed.accepted);
    EXPECT_EQ(changed.reason, RejectReason::kKeyConflict);
    EXPECT_EQ(f.journal_records(), before + 1);
}

TEST(Host, LateByOneMillisecond) {
    Fixture f;
    const Timestamp start = f.host->start();
    f.clock.set(start + Millis{5000 + 1});
    const auto r = f.host->submit(f.r1, request(0, "engaged"));
    EXPECT_FALSE(r.accepted);
    EXPECT_EQ(r.reason, RejectReason::kLate);
    const auto obs = f.host->snapshot().observations();
    ASSERT_EQ(obs.size(), 2u);
    for (const auto& o : obs) {
        EXPECT_EQ(o.prompt_index, 0u);
        EXPECT_EQ(o.status, ObservationStatus::kMissed);
        EXPECT_EQ(o.logged_at, start + Millis{5000});
    }
}

TEST(Host, ClientTimestampIgnored) {
    Fixture f;
    f.host->start();
    auto req = request(0, "engaged");
    req.client_sent_at = "1999-01-01T00:00:00.000Z";
    f.clock.advance(Millis{4999});
    const auto r = f.host->submit(f.r1, req);
    ASSERT_TRUE(r.accepted);
    EXPECT_EQ(r.logged_at, f.clock.now());
}

TEST(Host, OtherRejections) {
    Fixture f;
    EXPECT_EQ(f.host->submit("nope", request(0, "engaged")).reason, RejectReason::kBadToken);
    EXPECT_EQ(f.host->submit(f.r1, request(0, "engaged")).reason, RejectReason::kNotRunning);
    f.host->start();
    EXPECT_EQ(f.host->submit(f.r1, request(1, "engaged")).reason, RejectReason::kUnknownPrompt);
    auto wrong_subject = request(0, "engaged");
    wrong_subject.subject_id = "s02";
    EXPECT_EQ(f.host->submit(f.r1, wrong_subject).reason, RejectReason::kSubjectMismatch);
    EXPECT_EQ(f.host->submit(f.r1, request(0, "sleepy")).reason, RejectReason::kInvalidSelection);
    auto two = request(0, "engaged");
    two.selections["affect"].insert("boredom");
    EXPECT_EQ(f.host->submit(f.r1, two).reason, RejectReason::kInvalidSelection);
    auto missed = request(0, "engaged");
    missed.status = ObservationStatus::kMissed;
    EXPECT_EQ(f.host->submit(f.r1, missed).reason, RejectReason::kInvalidSelection);
    EXPECT_EQ(f.journal_records(), 3u);
}

TEST(Host, RepeatedLifecycleCallsLeaveHostUsable) {
    Fixture f;
    EXPECT_THROW(f.host->end(), Error);
    f.host->start();
    EXPECT_THROW(f.host->start(), Error);
    const auto r = f.host->submit(f.r1, request(0, "engaged"));
    EXPECT_TRUE(r.accepted);
    f.host->end();
    EXPECT_THROW(f.host->end(), Error);
    EXPECT_THROW(f.host->start(), Error);
    EXPECT_EQ(f.host->snapshot().observations().size(), 1u);
    EXPECT_TRUE(verify(f.journal()).clean());
}

TEST(Host, PromptClosesWhenEveryObserverAnswers) {
    Fixture f;
    f.host->start();
    ASSERT_TRUE(f.host->submit(f.r1, request(0, "engaged")).accepted);
    SubmissionRequest skip;
    skip.prompt_index = 0;
    skip.status = ObservationStatus::kSkipped;
    ASSERT_TRUE(f.host->submit(f.r2, skip).accepted);
    EXPECT_FALSE(f.host->scheduler().open_prompt);
    f.clock.advance(Millis{5000});
    f.host->tick();
    const auto r = replay(f.journal());
    std::size_t expirations = 0;
    for (const auto& e : r.entries) expirations += e.kind == EntryKind::kPromptExpired ? 1 : 0;
    EXPECT_EQ(expirations, 0u);
    const auto obs = f.host->snapshot().observations();
    ASSERT_EQ(obs.size(), 2u);
    EXPECT_EQ(obs[1].status, ObservationStatus::kSkipped);
    EXPECT_EQ(f.host->scheduler().open_prompt->prompt_index, 1u);
}

TEST(Host, SubscribeReplaysOpenPrompt) {
    Fixture f;
    f.host->start();
    f.clock.advance(Millis{5000 * 7 + 100});
    f.host->tick();
    std::vector<StreamEvent> got;
    f.host->subscribe(f.r1, [&](const StreamEvent& e) { got.push_back(e); });
    ASSERT_EQ(got.size(), 1u);
    const Json first = Json::parse(got[0].json);
    EXPECT_EQ(first["type"], "prompt_opened");
    EXPECT_EQ(first["replay"], true);
    EXPECT_EQ(first["prompt"]["prompt_index"], 7);
    EXPECT_EQ(first["next_index"], 8);
    EXPECT_THROW(f.host->subscribe("bogus", [](const StreamEvent&) {}), Error);
}

TEST(Host, TwoSubscribersSeeIdenticalSequences) {
    Fixture f;
    std::vector<StreamEvent> a;
    std::vector<StreamEvent> b;
    f.host->subscribe(f.r1, [&](const StreamEvent& e) { a.push_back(e); });
    f.host->start();
    f.clock.advance(Millis{2500});
    f.host->tick();
    f.host->subscribe(f.r2, [&](const StreamEvent& e) { b.push_back(e); });
    for (int i = 0; i < 6; ++i) {
        f.clock.advance(Millis{2500});
        f.host->tick();
    }
    f.host->end();
    ASSERT_FALSE(a.empty());
    EXPECT_TRUE(a.back().terminal);
    EXPECT_TRUE(b.back().terminal);
    const auto ja = parse_all(a);
    const auto jb = parse_all(b);
    EXPECT_EQ(ja[0]["type"], "heartbeat");
    EXPECT_EQ(jb[0]["replay"], true);
    // After b's replay message both transcripts carry the same live events.
    const std::vector<Json> tail_a(ja.end() - static_cast<std::ptrdiff_t>(jb.size() - 1), ja.end());
    const std::vector<Json> tail_b(jb.begin() + 1, jb.end());
    EXPECT_EQ(tail_a, tail_b);
    EXPECT_EQ(jb.back()["type"], "session_ended");

    std::vector<StreamEvent> late;
    f.host->subscribe(f.r1, [&](const StreamEvent& e) { late.push_back(e); });
    ASSERT_EQ(late.size(), 1u);
    EXPECT_TRUE(late[0].terminal);
}

TEST(Host, FreeSelectRecordsNoMissed) {
    SessionConfig c = study_config();
    c.scheduling_mode = SchedulingMode::kFreeSelect;
    Fixture f(c);
    f.host->start();
    auto req = request(0, "engaged");
    req.subject_id = "s03";
    ASSERT_TRUE(f.host->submit(f.r1, req).accepted);
    req.subject_id = "s04";
    ASSERT_TRUE(f.host->submit(f.r1, req).accepted);
    f.clock.advance(Millis{12000});
    f.host->tick();
    EXPECT_EQ(f.host->snapshot().observations().size(), 2u);
}

TEST(Host, CrashRestartPreservesExportsAndAcks) {
    Fixture f;
    f.host->start();
    for (int k = 0; k < 6; ++k) {
        f.clock.advance(Millis{900});
        f.host->submit(k % 2 ? f.r1 : f.r2, request(static_cast<std::uint64_t>(k / 3), "neutral"));
        f.clock.advance(Millis{1700});
        f.host->tick();
    }
    const SessionState before = f.host->snapshot();
    const SchedulerState sched_before = f.host->scheduler();
    const auto path = f.host->journal_path();
    f.host.reset();

    auto recovered = SessionHost::recover(path, f.clock.clock(), Durability::kDeferred);
    EXPECT_EQ(recovered->snapshot(), before);
    EXPECT_EQ(recovered->scheduler().open_prompt, sched_before.open_prompt);
    EXPECT_EQ(recovered->scheduler().next_index, sched_before.next_index);
    const auto& scheme = before.config().scheme;
    EXPECT_EQ(write_csv(scheme, to_rows(recovered->snapshot())), write_csv(scheme, to_rows(before)));
    EXPECT_EQ(write_xlsx(scheme, to_rows(recovered->snapshot())), write_xlsx(scheme, to_rows(before)));

    const std::string token = recovered->register_observer("r1");
    const auto open = *recovered->scheduler().open_prompt;
    const auto first = recovered->submit(token, request(open.prompt_index, "engaged"));
    ASSERT_TRUE(first.accepted);
    const auto retry = recovered->submit(token, request(open.prompt_index, "engaged"));
    EXPECT_TRUE(retry.duplicate);
    EXPECT_EQ(retry.seq, first.seq);
    EXPECT_TRUE(verify(read_file(path)).clean());
}

TEST(Host, RecoverAfterTornWrite) {
    Fixture f;
    f.host->start();
    f.clock.advance(Millis{1000});
    ASSERT_TRUE(f.host->submit(f.r1, request(0, "engaged")).accepted);
    const auto path = f.host->journal_path();
    f.host.reset();
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 5);

    auto recovered = SessionHost::recover(path, f.clock.clock(), Durability::kDeferred);
    EXPECT_TRUE(recovered->snapshot().observations().empty());
    const std::string token = recovered->register_observer("r1");
    EXPECT_TRUE(recovered->submit(token, request(0, "engaged")).accepted);
    EXPECT_TRUE(verify(read_file(path)).clean());
}

TEST(Registry, CreateValidatesRejectsDuplicatesAndRecovers) {
    dt::TempDir dir;
    dt::VirtualClock clock;
    const Json doc = config_to_json(study_config());
    {
        SessionRegistry registry(dir.path(), clock.clock(), Durability::kDeferred);
        const auto created = registry.create(doc);
        ASSERT_TRUE(created.host);
        EXPECT_EQ(registry.find("class-a-affect"), created.host);
        try {
            registry.create(doc);
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::kConflict);
        }
        Json bad = doc;
        bad["session_id"] = "other";
        bad["roster"] = Json::array();
        const auto rejected = registry.create(bad);
        EXPECT_FALSE(rejected.host);
        EXPECT_FALSE(rejected.violations.empty());
        created.host->start();
    }
    SessionRegistry restarted(dir.path(), clock.clock(), Durability::kDeferred);
    std::vector<std::string> errors;
    EXPECT_EQ(restarted.recover_all(&errors), 1u);
    EXPECT_TRUE(errors.empty());
    ASSERT_TRUE(restarted.find("class-a-affect"));
    EXPECT_EQ(restarted.find("class-a-affect")->snapshot().phase(), Phase::kRunning);
    EXPECT_THROW(restarted.create(doc), Error);
}
