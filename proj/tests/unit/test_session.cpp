#include <gtest/gtest.h>

#include <random>

#include "dlot/error.hpp"
#include "dlot/session.hpp"

using namespace dlot;

namespace {

Timestamp t0() { return *parse_iso8601("2024-01-15T09:00:00.000Z"); }

SessionConfig affect_config() {
    SessionConfig c = example_config();
    c.scheme.groups.resize(1);
    return c;
}

Observation logged(std::string observer, std::string subject, std::uint64_t prompt, Selections sel) {
    return {std::move(observer), std::move(subject), prompt, t0() + Millis{prompt * 5000}, std::move(sel),
            ObservationStatus::kLogged};
}

template <class F>
ErrorCode code_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected dlot::Error";
    return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST(Session, StartProducesRunningEmptyState) {
    const SessionState s = start_session(affect_config(), t0());
    EXPECT_EQ(s.phase(), Phase::kRunning);
    EXPECT_TRUE(s.observations().empty());
    EXPECT_EQ(s.started_at(), t0());
}

TEST(Session, PhaseMachine) {
    const SessionState running = start_session(affect_config(), t0());
    try {
        start_session(running, t0());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kAlreadyRunning);
        EXPECT_STREQ(e.what(), "already running");
    }
    const SessionState ended = end_session(running, t0() + Millis{1});
    try {
        start_session(ended, t0());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kSessionEnded);
        EXPECT_STREQ(e.what(), "session ended");
    }
    EXPECT_EQ(code_of([&] { end_session(ended, t0()); }), ErrorCode::kSessionEnded);
    EXPECT_EQ(code_of([&] { end_session(create_session(affect_config()), t0()); }), ErrorCode::kNotRunning);
}

TEST(Session, ApplyExamples) {
    const SessionState s = start_session(affect_config(), t0());
    const auto ok = apply_observation(s, logged("r1", "s01", 0, {{"affect", {"engaged"}}}));
    EXPECT_EQ(ok.observations().size(), 1u);

    EXPECT_EQ(code_of([&] { apply_observation(s, logged("r1", "s01", 0, {{"affect", {"engaged", "boredom"}}})); }),
              ErrorCode::kSelectionCardinality);

    Observation missed = logged("r1", "s01", 0, {});
    missed.status = ObservationStatus::kMissed;
    const auto m = apply_observation(s, missed);
    ASSERT_EQ(m.observations().size(), 1u);
    EXPECT_EQ(m.observations()[0].status, ObservationStatus::kMissed);
}

TEST(Session, RejectionsLeaveStateUnchanged) {
    const SessionState s = start_session(affect_config(), t0());
    const SessionState before = s;
    EXPECT_EQ(code_of([&] { apply_observation(s, logged("r1", "nobody", 0, {{"affect", {"engaged"}}})); }),
              ErrorCode::kUnknownSubject);
    EXPECT_EQ(code_of([&] { apply_observation(s, logged("rx", "s01", 0, {{"affect", {"engaged"}}})); }),
              ErrorCode::kUnknownObserver);
    EXPECT_EQ(code_of([&] { apply_observation(s, logged("r1", "s01", 0, {{"affect", {"sleepy"}}})); }),
              ErrorCode::kLabelNotInGroup);
    EXPECT_EQ(code_of([&] { apply_observation(s, logged("r1", "s01", 0, {{"mood", {"engaged"}}})); }),
              ErrorCode::kUnknownGroup);
    EXPECT_EQ(code_of([&] { apply_observation(s, logged("r1", "s01", 0, {})); }), ErrorCode::kSelectionCardinality);
    EXPECT_EQ(code_of([&] { apply_observation(create_session(affect_config()), logged("r1", "s01", 0, {{"affect", {"engaged"}}})); }),
              ErrorCode::kNotRunning);
    EXPECT_EQ(s, before);
}

TEST(Session, MultipleSelectionMayBeEmpty) {
    const SessionState s = start_session(example_config(), t0());
    const auto a = apply_observation(s, logged("r1", "s01", 0, {{"affect", {"neutral"}}}));
    const auto b = apply_observation(a, logged("r2", "s01", 0, {{"affect", {"neutral"}}, {"behavior", {}}}));
    EXPECT_EQ(b.observations().size(), 2u);
}

TEST(Session, ConfigFrozenOnceRunning) {
    const SessionState running = start_session(affect_config(), t0());
    const SessionConfig at_start = running.config();
    SessionConfig other = affect_config();
    other.timer.interval = Millis{9000};
    EXPECT_EQ(code_of([&] { replace_config(running, other); }), ErrorCode::kConfigFrozen);
    EXPECT_EQ(running.config(), at_start);
    EXPECT_EQ(config_to_json(running.config()).dump(), config_to_json(at_start).dump());

    const SessionState created = replace_config(create_session(affect_config()), other);
    EXPECT_EQ(created.config().timer.interval, Millis{9000});
}

TEST(Session, ReducerPurityAndOrder) {
    std::mt19937_64 rng(7);
    const auto labels = affect_config().scheme.groups[0].labels;
    SessionState a = start_session(affect_config(), t0());
    SessionState b = a;
    std::vector<Observation> accepted;
    for (int i = 0; i < 200; ++i) {
        Observation o = logged("r" + std::to_string(1 + rng() % 3), "s" + std::string(rng() % 2 ? "0" : "1") + std::to_string(1 + rng() % 9),
                               static_cast<std::uint64_t>(i), {{"affect", {labels[rng() % labels.size()]}}});
        if (rng() % 5 == 0) o.selections["affect"].insert("bogus");
        try {
            a = apply_observation(a, o);
            accepted.push_back(o);
        } catch (const Error&) {
        }
        try {
            b = apply_observation(b, o);
        } catch (const Error&) {
        }
        ASSERT_EQ(a, b);
    }
    EXPECT_EQ(a.observations(), accepted);
    for (const auto& o : a.observations()) EXPECT_NO_THROW(check_observation(a.config(), o));
}

TEST(Session, ObservationJsonRoundTrip) {
    const SessionConfig c = example_config();
    Observation o = logged("r2", "s07", 12, {{"behavior", {"off-task", "on-task"}}, {"affect", {"boredom"}}});
    const Json doc = observation_to_json(o, c.scheme);
    EXPECT_EQ(observation_from_json(doc), o);
    EXPECT_EQ(doc.dump(), observation_to_json(observation_from_json(doc), c.scheme).dump());
    EXPECT_THROW(observation_from_json(Json{{"observer_id", 3}}), Error);
}

TEST(Session, SnapshotCarriesFormatVersion) {
    const Json snap = config_snapshot(example_config());
    EXPECT_EQ(snap.at("format_version"), kFormatVersion);
    EXPECT_EQ(snap.at("session_id"), "class-a-affect");
}
