#include "doctest.h"

#include "dtb/errors.hpp"
#include "dtb/evaluation.hpp"
#include "dtb/rng.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace dtb;

TEST_CASE("classify_frame covers the full truth table") {
    const NoteCombination ab({60, 64});
    const NoteCombination a({60});
    const NoteCombination ac({60, 67});
    const NoteCombination none;

    auto cls = classify_frame(ab, ab);
    CHECK(cls.exact);
    CHECK_FALSE(cls.has_additions);
    CHECK_FALSE(cls.has_omissions);

    cls = classify_frame(ab, a); // predicted one pitch too many
    CHECK_FALSE(cls.exact);
    CHECK(cls.has_additions);
    CHECK_FALSE(cls.has_omissions);

    cls = classify_frame(a, ab); // missed one pitch
    CHECK_FALSE(cls.exact);
    CHECK_FALSE(cls.has_additions);
    CHECK(cls.has_omissions);

    cls = classify_frame(ac, ab); // one wrong, one missing: both at once
    CHECK_FALSE(cls.exact);
    CHECK(cls.has_additions);
    CHECK(cls.has_omissions);

    cls = classify_frame(none, none); // silence matching silence is exact
    CHECK(cls.exact);

    cls = classify_frame(a, none);
    CHECK(cls.has_additions);
    CHECK_FALSE(cls.has_omissions);

    cls = classify_frame(none, a);
    CHECK(cls.has_omissions);
    CHECK_FALSE(cls.has_additions);
}

TEST_CASE("prf_from_counts applies the 0/0 -> 0 convention") {
    PrfSummary s = prf_from_counts(0, 0, 0);
    CHECK(s.precision == 0.0);
    CHECK(s.recall == 0.0);
    CHECK(s.f_measure == 0.0);

    s = prf_from_counts(3, 1, 2);
    CHECK(s.precision == doctest::Approx(0.75));
    CHECK(s.recall == doctest::Approx(0.6));
    CHECK(s.f_measure == doctest::Approx(2 * 0.75 * 0.6 / (0.75 + 0.6)));

    s = prf_from_counts(0, 5, 0); // no positives in truth
    CHECK(s.precision == 0.0);
    CHECK(s.recall == 0.0);
    CHECK(s.f_measure == 0.0);
}

TEST_CASE("framewise_prf counts cells and validates shapes") {
    PianoRoll pred(100.0, Pitch{60}, 3, 4);
    PianoRoll truth(100.0, Pitch{60}, 3, 4);
    // truth: frame 0 {60}, frame 1 {60,62}, frames 2..3 silent
    truth.set(0, 0, true);
    truth.set(1, 0, true);
    truth.set(1, 2, true);
    // pred: frame 0 {61} (one fp + one fn), frame 1 {60,62} (two tp),
    // frame 2 {62} (fp), frame 3 silent
    pred.set(0, 1, true);
    pred.set(1, 0, true);
    pred.set(1, 2, true);
    pred.set(2, 2, true);

    PrfSummary s = framewise_prf(pred, truth);
    CHECK(s.tp == 2);
    CHECK(s.fp == 2);
    CHECK(s.fn == 1);
    CHECK(s.precision == doctest::Approx(0.5));
    CHECK(s.recall == doctest::Approx(2.0 / 3.0));

    PianoRoll wrong_rate(50.0, Pitch{60}, 3, 4);
    CHECK_THROWS_AS(framewise_prf(pred, wrong_rate), ConfigError);
    PianoRoll wrong_lo(100.0, Pitch{61}, 3, 4);
    CHECK_THROWS_AS(framewise_prf(pred, wrong_lo), ConfigError);
    PianoRoll wrong_frames(100.0, Pitch{60}, 3, 5);
    CHECK_THROWS_AS(framewise_prf(pred, wrong_frames), ConfigError);
}

TEST_CASE("accumulator groups frames by ground-truth combination") {
    // 10 frames of {60,64}: 6 exact, 3 with an addition, 1 with an omission.
    // 5 frames of {62}: all exact. 2 frames of silence: never grouped.
    PianoRoll truth(100.0, Pitch{60}, 8, 17);
    PianoRoll pred(100.0, Pitch{60}, 8, 17);
    for (int t = 0; t < 10; ++t) {
        truth.set(t, 0, true); // 60
        truth.set(t, 4, true); // 64
    }
    for (int t = 10; t < 15; ++t) truth.set(t, 2, true); // 62

    for (int t = 0; t < 6; ++t) { // exact
        pred.set(t, 0, true);
        pred.set(t, 4, true);
    }
    for (int t = 6; t < 9; ++t) { // additions only
        pred.set(t, 0, true);
        pred.set(t, 4, true);
        pred.set(t, 7, true); // spurious 67
    }
    pred.set(9, 0, true); // omission only (64 missing)
    for (int t = 10; t < 15; ++t) pred.set(t, 2, true);
    pred.set(16, 5, true); // prediction during silence: not a group

    CombinationAccumulator acc;
    acc.add(pred, truth);

    const auto all = acc.stats(/*top_k=*/-1, /*min_frames=*/1);
    REQUIRE(all.size() == 2);
    CHECK(all[0].combination == NoteCombination({60, 64}));
    CHECK(all[0].n_frames == 10);
    CHECK(all[0].p_exact == doctest::Approx(0.6));
    CHECK(all[0].p_additions == doctest::Approx(0.3));
    CHECK(all[0].p_omissions == doctest::Approx(0.1));
    CHECK(all[1].combination == NoteCombination({62}));
    CHECK(all[1].n_frames == 5);
    CHECK(all[1].p_exact == doctest::Approx(1.0));

    // min_frames filters the small group; top_k truncates.
    CHECK(acc.stats(-1, 6).size() == 1);
    CHECK(acc.stats(1, 1).size() == 1);
    CHECK(acc.stats(0, 1).empty());

    const auto combos = acc.combinations();
    CHECK(combos.size() == 2);
    CHECK(combos.count(NoteCombination({60, 64})) == 1);
    CHECK(combos.count(NoteCombination({62})) == 1);

    // Adding a second pair accumulates into the same groups.
    acc.add(pred, truth);
    CHECK(acc.stats(-1, 1)[0].n_frames == 20);
}

TEST_CASE("stats ordering is count-descending with combination tie-break") {
    PianoRoll truth(100.0, Pitch{60}, 5, 9);
    PianoRoll pred(100.0, Pitch{60}, 5, 9);
    // Three frames each of {61} and {60,62}; three frames of {64}... make
    // {64} appear 3 times too so the tie-break matters across all three.
    for (int t = 0; t < 3; ++t) truth.set(t, 1, true);
    for (int t = 3; t < 6; ++t) {
        truth.set(t, 0, true);
        truth.set(t, 2, true);
    }
    for (int t = 6; t < 9; ++t) truth.set(t, 4, true);

    const auto stats = combination_stats(pred, truth, -1, 1);
    REQUIRE(stats.size() == 3);
    // All counts equal -> ascending combination order: {60,62} < {61} < {64}.
    CHECK(stats[0].combination == NoteCombination({60, 62}));
    CHECK(stats[1].combination == NoteCombination({61}));
    CHECK(stats[2].combination == NoteCombination({64}));
    for (const auto& s : stats) CHECK(s.p_omissions == doctest::Approx(1.0));
}

TEST_CASE("partition_shared matches independent set algebra") {
    std::set<NoteCombination> ref{NoteCombination({60, 64}), NoteCombination({60}),
                                  NoteCombination({65, 69})};
    std::set<NoteCombination> eval{NoteCombination({60}), NoteCombination({61}),
                                   NoteCombination({65, 69})};
    SharedPartition part = partition_shared(ref, eval);
    const std::set<NoteCombination> want_shared{NoteCombination({60}),
                                                NoteCombination({65, 69})};
    const std::set<NoteCombination> want_unshared{NoteCombination({61})};
    CHECK(part.shared == want_shared);
    CHECK(part.unshared == want_unshared);

    // Randomized cross-check against std::set_intersection / set_difference.
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        std::set<NoteCombination> a, b;
        for (int i = 0; i < 30; ++i) {
            const int lo = 60 + static_cast<int>(rng.below(12));
            const int hi = lo + 1 + static_cast<int>(rng.below(12));
            if (rng.below(2)) a.insert(NoteCombination({lo, hi}));
            if (rng.below(2)) b.insert(NoteCombination({lo, hi}));
        }
        SharedPartition p = partition_shared(a, b);
        std::set<NoteCombination> exp_shared, exp_unshared;
        std::set_intersection(b.begin(), b.end(), a.begin(), a.end(),
                              std::inserter(exp_shared, exp_shared.begin()));
        std::set_difference(b.begin(), b.end(), a.begin(), a.end(),
                            std::inserter(exp_unshared, exp_unshared.begin()));
        CHECK(p.shared == exp_shared);
        CHECK(p.unshared == exp_unshared);
    }
}

TEST_CASE("combination csv format") {
    CombinationStats s1;
    s1.combination = NoteCombination({60, 64});
    s1.n_frames = 42;
    s1.p_exact = 0.5;
    s1.p_additions = 1.0 / 3.0;
    s1.p_omissions = 0.25;
    CombinationStats s2;
    s2.combination = NoteCombination({61});
    s2.n_frames = 7;
    s2.p_exact = 1.0;

    std::set<NoteCombination> shared{NoteCombination({61})};
    const auto path = std::filesystem::temp_directory_path() / "dtb_test_combos.csv";
    write_combination_csv({s1, s2}, shared, path);

    std::ifstream in(path);
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "combination,n_frames,p_exact,p_additions,p_omissions,shared");
    REQUIRE(std::getline(in, line));
    CHECK(line == "\"60 64\",42,0.500000,0.333333,0.250000,0");
    REQUIRE(std::getline(in, line));
    CHECK(line == "\"61\",7,1.000000,0.000000,0.000000,1");
    CHECK_FALSE(std::getline(in, line));
    std::filesystem::remove(path);
}

TEST_CASE("summary json carries scores and raw counts") {
    PrfSummary s = prf_from_counts(3, 1, 2);
    nlohmann::json j = summary_json(s);
    CHECK(j.at("tp") == 3);
    CHECK(j.at("fp") == 1);
    CHECK(j.at("fn") == 2);
    CHECK(j.at("precision").get<double>() == doctest::Approx(0.75));
    CHECK(j.at("recall").get<double>() == doctest::Approx(0.6));
    CHECK(j.at("f_measure").get<double>() > 0.0);
}
