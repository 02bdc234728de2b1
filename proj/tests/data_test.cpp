#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "deeplob/data.hpp"
#include "deeplob/fi2010.hpp"
#include "deeplob/lobfile.hpp"
#include "deeplob/synth.hpp"
#include "oracles.hpp"

namespace deeplob {
namespace {

SeriesDay flat_day(std::string id, std::size_t n, double fill = 1.0) {
    SeriesDay d;
    d.day_id = std::move(id);
    d.features.assign(n * kFeatures, fill);
    for (std::size_t i = 0; i < n; ++i) {
        d.features[i * kFeatures + 0] = 100.0 + 0.01 * static_cast<double>(i);
        d.features[i * kFeatures + 2] = 99.98 + 0.01 * static_cast<double>(i);
    }
    d.recompute_mids();
    return d;
}

std::vector<double> random_walk(Rng& rng, std::size_t n) {
    std::vector<double> p(n);
    double x = rng.uniform(10.0, 200.0);
    for (auto& v : p) {
        const double u = rng.uniform();
        x += u < 0.3 ? -0.01 : (u < 0.6 ? 0.01 : 0.0);
        v = x;
    }
    return p;
}

std::vector<std::optional<int>> as_int(const LabelSeq& s) {
    std::vector<std::optional<int>> out;
    for (const auto& l : s) out.push_back(l ? std::optional<int>(*l) : std::nullopt);
    return out;
}

TEST(Labels, ConstantMidsAllStationary) {
    const std::vector<double> mids(300, 50.0);
    for (auto m : {LabelMethod::FutureMean, LabelMethod::BilateralMean}) {
        for (const auto& l : smooth_labels(mids, 10, 0.0, m)) {
            if (l) {
                EXPECT_EQ(*l, 0);
            }
        }
    }
}

TEST(Labels, IncreasingMidsAllUp) {
    std::vector<double> mids(200);
    for (std::size_t i = 0; i < mids.size(); ++i) mids[i] = 10.0 + 0.01 * static_cast<double>(i);
    const auto labels = smooth_labels(mids, 20, 1e-6, LabelMethod::FutureMean);
    const auto ref = oracle::labels(mids, 20, 1e-6, false);
    EXPECT_EQ(as_int(labels), ref);
    for (std::size_t t = 0; t + 20 < mids.size(); ++t) EXPECT_EQ(labels[t], Label{1});
}

TEST(Labels, BoundaryIsStationary) {
    // future-mean with k=1: l = (p1 - p0)/p0 = 0.5 exactly.
    const std::vector<double> mids{2.0, 3.0};
    EXPECT_EQ(smooth_labels(mids, 1, 0.5, LabelMethod::FutureMean)[0], Label{0});
    EXPECT_EQ(smooth_labels(mids, 1, 0.25, LabelMethod::FutureMean)[0], Label{1});
}

TEST(Labels, UnlabelledTail) {
    std::vector<double> mids(30, 1.0);
    const auto f = smooth_labels(mids, 10, 0.0, LabelMethod::FutureMean);
    EXPECT_TRUE(f[19].has_value());
    EXPECT_FALSE(f[20].has_value());
    const auto b = smooth_labels(mids, 10, 0.0, LabelMethod::BilateralMean);
    EXPECT_FALSE(b[9].has_value());
    EXPECT_TRUE(b[10].has_value());
}

TEST(Labels, ArgumentErrors) {
    const std::vector<double> mids(10, 1.0);
    EXPECT_THROW(smooth_labels(mids, 0, 0.1, LabelMethod::FutureMean), ArgumentError);
    EXPECT_THROW(smooth_labels(mids, 2, -0.1, LabelMethod::FutureMean), ArgumentError);
    EXPECT_THROW(parse_label_method("mean"), ArgumentError);
}

TEST(Labels, PrintedAndSymmetricPastWindows) {
    // p = 1,2,3 with k=1 at t=1: printed m- = (1+2)/2, symmetric m- = 1.
    const std::vector<double> mids{1.0, 2.0, 3.0};
    const auto printed = smooth_labels(mids, 1, 1.5, LabelMethod::BilateralMean, PastWindow::Printed);
    const auto symmetric = smooth_labels(mids, 1, 1.5, LabelMethod::BilateralMean, PastWindow::Symmetric);
    EXPECT_EQ(printed[1], Label{0});    // (3 - 1.5)/1.5 = 1
    EXPECT_EQ(symmetric[1], Label{1});  // (3 - 1)/1 = 2
}

TEST(Labels, MatchesOracleOnRandomSeries) {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const auto mids = random_walk(rng, 400);
        const double alpha = rng.uniform(0.0, 3e-4);
        for (int k : {10, 20, 50, 100}) {
            EXPECT_EQ(as_int(smooth_labels(mids, k, alpha, LabelMethod::FutureMean)), oracle::labels(mids, k, alpha, false));
            EXPECT_EQ(as_int(smooth_labels(mids, k, alpha, LabelMethod::BilateralMean)), oracle::labels(mids, k, alpha, true));
            EXPECT_EQ(as_int(smooth_labels(mids, k, alpha, LabelMethod::BilateralMean, PastWindow::Symmetric)),
                      oracle::labels(mids, k, alpha, true, true));
        }
    }
}

TEST(Labels, ScaleInvariant) {
    Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        const auto mids = random_walk(rng, 300);
        auto scaled = mids;
        for (auto& v : scaled) v *= 4.0;  // power of two keeps every ratio exact
        for (auto m : {LabelMethod::FutureMean, LabelMethod::BilateralMean}) {
            EXPECT_EQ(smooth_labels(mids, 20, 1e-4, m), smooth_labels(scaled, 20, 1e-4, m));
        }
    }
}

TEST(ZScore, HandComputedValue) {
    // History day: feature 5 alternates 8 and 12 -> mean 10, population std 2.
    SeriesDay hist = flat_day("d1", 4);
    for (std::size_t i = 0; i < 4; ++i) hist.features[i * kFeatures + 5] = i % 2 ? 12.0 : 8.0;
    SeriesDay cur = flat_day("d2", 3);
    cur.features[5] = 14.0;
    const auto out = rolling_zscore({hist, cur});
    ASSERT_EQ(out.size(), 1u);
    EXPECT_DOUBLE_EQ(out[0].stats.mean[5], 10.0);
    EXPECT_DOUBLE_EQ(out[0].stats.stddev[5], 2.0);
    EXPECT_DOUBLE_EQ(out[0].day.features[5], 2.0);
}

TEST(ZScore, ConstantFeatureUsesUnitStdAndWarns) {
    const auto out = rolling_zscore({flat_day("d1", 10, 3.0), flat_day("d2", 10, 3.0)});
    ASSERT_EQ(out.size(), 1u);
    EXPECT_TRUE(out[0].stats.zero_std[1]);
    EXPECT_FALSE(out[0].warnings.empty());
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(out[0].day.features[i * kFeatures + 1], 0.0);
}

TEST(ZScore, RollingWindowUsesOnlyPastDays) {
    std::vector<SeriesDay> days;
    for (int d = 0; d < 8; ++d) days.push_back(flat_day("d" + std::to_string(d + 1), 20, static_cast<double>(d)));
    const auto out = rolling_zscore(days, 5);
    ASSERT_EQ(out.size(), 7u);  // first day has no history
    EXPECT_EQ(out[0].stats.source_days, (std::vector<std::string>{"d1"}));
    EXPECT_EQ(out[4].stats.source_days, (std::vector<std::string>{"d1", "d2", "d3", "d4", "d5"}));  // day 6
    EXPECT_EQ(out[5].stats.source_days, (std::vector<std::string>{"d2", "d3", "d4", "d5", "d6"}));  // day 7
    // Changing a future day never changes earlier statistics.
    auto changed = days;
    for (auto& v : changed[7].features) v += 100.0;
    const auto out2 = rolling_zscore(changed, 5);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(out[i].day.features, out2[i].day.features);
    // mids and labels are not normalised
    EXPECT_EQ(out[0].day.mids, days[1].mids);
}

TEST(Windows, Counts) {
    auto make = [](std::size_t n, int k) {
        auto day = std::make_shared<SeriesDay>(flat_day("d", n));
        HorizonLabels labels{{k, smooth_labels(day->mids, k, 0.0, LabelMethod::FutureMean)}};
        return make_windows(day, labels);
    };
    const auto w150 = make(150, 10);
    EXPECT_EQ(w150.size(), 41u);
    EXPECT_EQ(w150.size(), oracle::window_count(150, 100, 10));
    EXPECT_EQ(w150.anchor(0), 99u);
    EXPECT_EQ(w150.anchors().back(), 139u);
    EXPECT_EQ(make(99, 10).size(), 0u);
    for (std::size_t n : {100u, 109u, 110u, 111u, 500u}) EXPECT_EQ(make(n, 10).size(), oracle::window_count(n, 100, 10));

    auto day = std::make_shared<SeriesDay>(flat_day("d", 100));
    LabelSeq all(100, Label{0});
    EXPECT_EQ(make_windows(day, {{10, all}}).size(), 1u);
}

TEST(Windows, ContentAndLabelsMatchSource) {
    Rng rng(8);
    auto day = std::make_shared<SeriesDay>(flat_day("d", 400));
    for (auto& v : day->features) v = rng.uniform(-1.0, 1.0);
    day->mids = random_walk(rng, 400);
    HorizonLabels labels;
    for (int k : {10, 50}) labels[k] = smooth_labels(day->mids, k, 1e-4, LabelMethod::BilateralMean);
    const auto ws = make_windows(day, labels);
    EXPECT_EQ(ws.size(), 400u - 50u - 99u);
    const auto ref10 = oracle::labels(day->mids, 10, 1e-4, true);
    const auto ref50 = oracle::labels(day->mids, 50, 1e-4, true);
    for (std::size_t i = 0; i < ws.size(); ++i) {
        const auto w = ws.materialize(i);
        ASSERT_EQ(w.input.shape(), (Shape{100, 40}));
        EXPECT_EQ(w.input.at(99, 7), day->features[w.anchor_t * kFeatures + 7]);
        EXPECT_EQ(w.input.at(0, 0), day->features[(w.anchor_t - 99) * kFeatures]);
        EXPECT_EQ(std::optional<int>(w.labels.at(10)), ref10[w.anchor_t]);
        EXPECT_EQ(std::optional<int>(w.labels.at(50)), ref50[w.anchor_t]);
    }
}

TEST(Windows, SampleSetBatchAndThinning) {
    auto day = std::make_shared<SeriesDay>(flat_day("d", 300));
    HorizonLabels labels{{10, smooth_labels(day->mids, 10, 0.0, LabelMethod::FutureMean)}};
    const auto ws = make_windows(day, labels);
    SampleSet s(10);
    s.add(ws);
    EXPECT_EQ(s.size(), ws.size());
    const std::vector<std::size_t> idx{0, 5};
    const auto x = s.batch<float>(idx);
    EXPECT_EQ(x.shape(), (Shape{2, 1, 100, 40}));
    EXPECT_EQ(x.at(1, 0, 99, 0), static_cast<float>(day->features[(ws.anchor(5)) * kFeatures]));
    EXPECT_EQ(s.thinned(50).size(), 50u);
    EXPECT_EQ(s.class_counts()[2], s.size());  // rising mids
}

// 40 feature rows, `extra_rows` handcrafted rows, then 5 label rows.
std::string fi_text(std::size_t events, std::size_t extra_rows, const std::string& bad_cell = "") {
    std::ostringstream os;
    for (std::size_t r = 0; r < kFeatures + extra_rows; ++r) {
        for (std::size_t c = 0; c < events; ++c) {
            if (c) os << "  ";
            if (r == 3 && c == 1 && !bad_cell.empty()) {
                os << bad_cell;
            } else {
                os << (static_cast<double>(r) + 0.001 * static_cast<double>(c)) << (r % 7 == 0 ? "e+00" : "");
            }
        }
        os << "\n";
    }
    const int codes[5][3] = {{1, 2, 3}, {2, 2, 2}, {3, 3, 1}, {1, 1, 1}, {2, 3, 1}};
    for (const auto& row : codes) {
        for (std::size_t c = 0; c < events; ++c) os << (c ? " " : "") << row[c % 3];
        os << "\n";
    }
    return os.str();
}

TEST(Fi2010, ParsesFeaturesAndMapsLabels) {
    std::istringstream in(fi_text(3, 104));
    const auto d = parse_fi2010(in, "day1");
    EXPECT_EQ(d.n_events(), 3u);
    EXPECT_DOUBLE_EQ(d.features[1 * kFeatures + 5], 5.001);
    EXPECT_DOUBLE_EQ(d.features[2 * kFeatures + 39], 39.002);
    EXPECT_EQ(d.labels.at(10)[0], Label{1});
    EXPECT_EQ(d.labels.at(10)[1], Label{0});
    EXPECT_EQ(d.labels.at(10)[2], Label{-1});
    EXPECT_EQ(d.labels.at(30)[2], Label{1});
    EXPECT_EQ(d.labels.at(100)[1], Label{-1});
    EXPECT_DOUBLE_EQ(d.mids[0], (0.0 + 2.0) / 2.0);
}

TEST(Fi2010, Errors) {
    std::istringstream bad(fi_text(3, 0, "abc"));
    EXPECT_THROW(parse_fi2010(bad, "d"), ParseError);
    std::istringstream few("1 2\n3 4\n");
    EXPECT_THROW(parse_fi2010(few, "d"), ParseError);
    std::string ragged = fi_text(3, 0);
    ragged.insert(ragged.find('\n'), " 9");
    std::istringstream rag(ragged);
    EXPECT_THROW(parse_fi2010(rag, "d"), ParseError);
    std::string badlabel = fi_text(3, 0);
    badlabel.replace(badlabel.rfind('1'), 1, "4");
    std::istringstream bl(badlabel);
    EXPECT_THROW(parse_fi2010(bl, "d"), ParseError);
}

TEST(Fi2010, Splits) {
    std::vector<SeriesDay> days;
    for (int d = 0; d < 10; ++d) days.push_back(flat_day("day" + std::to_string(d + 1), 200));
    const auto s2 = split_fi2010(days, 2, 0);
    EXPECT_EQ(s2.train.size(), 7u);
    EXPECT_EQ(s2.test.size(), 3u);
    EXPECT_EQ(s2.test[0].day_id, "day8");
    EXPECT_EQ(s2.val.size(), 1u);
    EXPECT_EQ(s2.train.back().n_events() + s2.val[0].n_events(), 200u);
    EXPECT_EQ(s2.val[0].n_events(), 40u);
    const auto s1 = split_fi2010(days, 1, 1);
    EXPECT_EQ(s1.train.size(), 1u);
    EXPECT_EQ(s1.train[0].day_id, "day1");
    EXPECT_EQ(s1.test[0].day_id, "day2");
    EXPECT_EQ(split_fi2010(days, 1, 9).test[0].day_id, "day10");
    EXPECT_THROW(split_fi2010(days, 1, 10), ArgumentError);
    EXPECT_THROW(split_fi2010(days, 1, 0), ArgumentError);
    EXPECT_THROW(split_fi2010(days, 3, 1), ArgumentError);
}

TEST(Fi2010, DirectoryLayout) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "deeplob_fi_layout";
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto write = [&](const std::string& name) {
        std::ofstream(dir / name) << fi_text(3, 2);
    };
    write("Train_Dst_NoAuction_ZScore_CF_1.txt");
    for (int i = 1; i <= 8; ++i) write("Test_Dst_NoAuction_ZScore_CF_" + std::to_string(i) + ".txt");
    EXPECT_THROW(fi2010_day_files(dir), IoError);
    write("Test_Dst_NoAuction_ZScore_CF_9.txt");
    write("Train_Dst_NoAuction_ZScore_CF_7.txt");  // multi-day files are not used
    const auto files = fi2010_day_files(dir);
    EXPECT_EQ(files[0].filename(), "Train_Dst_NoAuction_ZScore_CF_1.txt");
    EXPECT_EQ(files[9].filename(), "Test_Dst_NoAuction_ZScore_CF_9.txt");
    const auto split = load_fi2010(dir, 2, 0, 0.0);
    EXPECT_EQ(split.train.size(), 7u);
    EXPECT_THROW(load_fi2010(dir, 1, 10), ArgumentError);
    fs::remove_all(dir);
}

TEST(Fi2010, SanityFlagsBadScale) {
    std::vector<SeriesDay> days{flat_day("d", 50)};
    days[0].labels[10] = LabelSeq(50, Label{0});
    const auto s = fi2010_sanity(days);
    EXPECT_FALSE(s.warnings.empty());  // price columns are ~100, not z-scores
    EXPECT_EQ(s.class_counts[1], 50u);
}

TEST(LobFile, RoundTrip) {
    SynthConfig c;
    c.n_days = 1;
    c.events_per_day = 500;
    auto day = synth_generate(c).days[0];
    day.labels[10] = smooth_labels(day.mids, 10, 1e-4, LabelMethod::FutureMean);
    std::stringstream buf;
    write_lob_day(buf, day);
    const auto back = read_lob_day(buf, day.day_id);
    EXPECT_EQ(back.n_events(), 500u);
    EXPECT_EQ(back.timestamps, day.timestamps);
    EXPECT_EQ(back.labels, day.labels);
    for (std::size_t i = 0; i < day.features.size(); ++i) {
        EXPECT_EQ(back.features[i], static_cast<double>(static_cast<float>(day.features[i])));
    }
    // A second write of the reloaded day is byte-identical.
    std::stringstream again;
    write_lob_day(again, back);
    EXPECT_EQ(again.str(), [&] { std::stringstream s; write_lob_day(s, day); return s.str(); }());
}

TEST(LobFile, HeaderLayoutAndErrors) {
    SeriesDay d = flat_day("x", 2);
    std::stringstream buf;
    write_lob_day(buf, d);
    const std::string bytes = buf.str();
    EXPECT_EQ(bytes.substr(0, 4), "LOB1");
    EXPECT_EQ(bytes[4], 1);                       // version, little-endian
    EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 2u);   // n_events
    EXPECT_EQ(static_cast<unsigned char>(bytes[16]), 40u); // n_features
    EXPECT_EQ(bytes.size(), 20u + 2 * 40 * 4 + 4);

    std::stringstream trunc(bytes.substr(0, bytes.size() - 10));
    EXPECT_THROW(read_lob_day(trunc, "x"), ParseError);
    std::string wrong = bytes;
    wrong[0] = 'X';
    std::stringstream bad(wrong);
    EXPECT_THROW(read_lob_day(bad, "x"), ParseError);
}

TEST(Synth, SameSeedSameBytes) {
    SynthConfig c;
    c.n_days = 2;
    c.events_per_day = 3000;
    const auto a = synth_generate(c), b = synth_generate(c);
    for (std::size_t d = 0; d < 2; ++d) {
        std::stringstream sa, sb;
        write_lob_day(sa, a.days[d]);
        write_lob_day(sb, b.days[d]);
        EXPECT_EQ(sa.str(), sb.str());
    }
    c.seed = 2;
    EXPECT_NE(synth_generate(c).days[0].features, a.days[0].features);
}

TEST(Synth, SnapshotsAreValidBooks) {
    SynthConfig c;
    c.n_days = 1;
    c.events_per_day = 5000;
    c.signal_strength = 1.0;
    const auto day = synth_generate(c).days[0];
    for (std::size_t i = 0; i < day.n_events(); ++i) {
        FeatureVector f;
        const auto r = day.row(i);
        std::copy(r.begin(), r.end(), f.values.begin());
        ASSERT_TRUE(is_valid(unflatten(f))) << i;
    }
}

TEST(Synth, InvalidConfigRejected) {
    SynthConfig c;
    c.signal_strength = 1.5;
    EXPECT_THROW(synth_generate(c), ConfigError);
    c = SynthConfig{};
    c.market_prob = 0.8;
    c.cancel_prob = 0.4;
    EXPECT_THROW(synth_generate(c), ConfigError);
    c = SynthConfig{};
    c.fixed_regime = 2;
    EXPECT_THROW(synth_generate(c), ConfigError);
}

// With no signal the regime is irrelevant and, at a tercile threshold, the
// three classes each take about a third of 10^5 events.
TEST(Synth, NoSignalGivesTercileLabels) {
    SynthConfig c;
    c.signal_strength = 0.0;
    c.n_days = 5;
    c.seed = 11;
    const auto out = synth_generate(c);
    std::vector<double> abs_l;
    for (const auto& d : out.days) {
        for (std::size_t t = 0; t + 10 < d.n_events(); ++t) {
            double m = 0.0;
            for (std::size_t i = 1; i <= 10; ++i) m += d.mids[t + i];
            abs_l.push_back(std::abs((m / 10.0 - d.mids[t]) / d.mids[t]));
        }
    }
    std::sort(abs_l.begin(), abs_l.end());
    const double alpha = abs_l[abs_l.size() / 3];
    std::array<double, 3> freq{};
    double n = 0;
    for (const auto& d : out.days) {
        for (const auto& l : smooth_labels(d.mids, 10, alpha, LabelMethod::FutureMean)) {
            if (!l) continue;
            ++freq[static_cast<std::size_t>(class_index(*l))];
            ++n;
        }
    }
    EXPECT_GE(n, 99000.0);
    for (double f : freq) EXPECT_NEAR(f / n, 1.0 / 3.0, 0.03);
}

TEST(Synth, PlantedDriftGivesUpLabels) {
    SynthConfig c;
    c.signal_strength = 1.0;
    c.fixed_regime = 1;
    c.n_days = 1;
    c.events_per_day = 5000;
    const auto day = synth_generate(c).days[0];
    const auto labels = smooth_labels(day.mids, 50, 1e-5, LabelMethod::FutureMean);
    const auto ref = oracle::labels(day.mids, 50, 1e-5, false);
    EXPECT_EQ(as_int(labels), ref);
    std::size_t up = 0, n = 0;
    for (const auto& l : labels) {
        if (!l) continue;
        ++n;
        up += *l == 1;
    }
    EXPECT_GT(static_cast<double>(up) / static_cast<double>(n), 0.95);
}

}  // namespace
}  // namespace deeplob
