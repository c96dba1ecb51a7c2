#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <set>
#include <sstream>

#include "sncl/harness/cli.hpp"

using namespace sncl;
using namespace sncl::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("sncl_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

ExperimentConfig small_til(int sessions = 3) {
    ExperimentConfig c = defaults_for(Scenario::til);
    c.data.sessions = sessions;
    c.epochs = 10;
    c.hidden = 32;
    return c;
}

ExperimentConfig small_vil() {
    ExperimentConfig c = defaults_for(Scenario::vil);
    c.data.sessions = 2;
    c.data.frames = 3;
    c.data.height = 8;
    c.data.width = 16;
    c.epochs = 4;
    c.eval_every = 2;
    return c;
}

ExperimentConfig small_fscil() {
    ExperimentConfig c = defaults_for(Scenario::fscil);
    c.epochs = 10;
    c.hidden = 48;
    c.data.train_per_class = 40;
    c.data.test_per_class = 20;
    return c;
}

int run_cli(std::vector<std::string> args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
    args.insert(args.begin(), "sncl");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
    if (out_text) *out_text = out.str();
    if (err_text) *err_text = err.str();
    return code;
}

/// Least-squares linear classifier on [x, 1] with +-1 targets (two classes).
double linear_probe_accuracy(const SessionDataset& d) {
    const std::size_t dim = d.train_x.dim(1), k = dim + 1;
    std::vector<double> ata(k * k, 0.0), atb(k, 0.0);
    for (std::size_t n = 0; n < d.train_size(); ++n) {
        std::vector<double> row(d.train_x.data() + n * dim, d.train_x.data() + (n + 1) * dim);
        row.push_back(1.0);
        const double t = d.train_y[n] == 1 ? 1.0 : -1.0;
        for (std::size_t a = 0; a < k; ++a) {
            atb[a] += row[a] * t;
            for (std::size_t b = 0; b < k; ++b) ata[a * k + b] += row[a] * row[b];
        }
    }
    // Gauss-Jordan elimination with partial pivoting
    std::vector<double> w = atb;
    for (std::size_t c = 0; c < k; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < k; ++r)
            if (std::abs(ata[r * k + c]) > std::abs(ata[piv * k + c])) piv = r;
        for (std::size_t j = 0; j < k; ++j) std::swap(ata[c * k + j], ata[piv * k + j]);
        std::swap(w[c], w[piv]);
        for (std::size_t r = 0; r < k; ++r) {
            if (r == c) continue;
            const double f = ata[r * k + c] / ata[c * k + c];
            for (std::size_t j = 0; j < k; ++j) ata[r * k + j] -= f * ata[c * k + j];
            w[r] -= f * w[c];
        }
    }
    for (std::size_t c = 0; c < k; ++c) w[c] /= ata[c * k + c];
    std::size_t ok = 0;
    for (std::size_t n = 0; n < d.test_size(); ++n) {
        double s = w[dim];
        for (std::size_t j = 0; j < dim; ++j) s += w[j] * d.test_x[n * dim + j];
        ok += (s > 0.0) == (d.test_y[n] == 1) ? 1 : 0;
    }
    return static_cast<double>(ok) / static_cast<double>(d.test_size());
}

}  // namespace

// ---- config ---------------------------------------------------------------

TEST(Config, ParsesSectionsQuotesAndComments) {
    const auto c = parse_config_text(R"(scenario = "til"
seed = 7
[train]
mode = "finetune"
lr = 0.05 # inline comment
epochs = 3
[model]
hidden = 16
[data]
sessions = 4
separation = 2.5
[output]
dir = "somewhere"
)");
    EXPECT_EQ(c.scenario, Scenario::til);
    EXPECT_EQ(c.seed, 7u);
    EXPECT_EQ(c.mode, subnet::TrainingMode::finetune);
    EXPECT_EQ(c.lr, 0.05);
    EXPECT_EQ(c.epochs, 3);
    EXPECT_EQ(c.hidden, 16u);
    EXPECT_EQ(c.data.sessions, 4);
    EXPECT_EQ(c.data.separation, 2.5);
    EXPECT_EQ(c.output_dir, "somewhere");
    EXPECT_EQ(c.capacity, defaults_for(Scenario::til).capacity);
}

TEST(Config, JsonFilesParseToTheSameConfig) {
    const auto a = parse_config_text("scenario = vil\n[train]\nepochs = 12\n[model]\nfso = nerv2\n");
    const auto b = parse_config_text(R"({"scenario": "vil", "train": {"epochs": 12}, "model": {"fso": "nerv2"}})", true);
    EXPECT_EQ(to_json(a), to_json(b));
    EXPECT_EQ(config_hash(a), config_hash(b));
}

TEST(Config, ErrorsCarryTheFieldPath) {
    auto field_of = [](const std::string& text) {
        try {
            parse_config_text(text);
        } catch (const ValidationError& e) {
            return e.field_path;
        }
        return std::string("<none>");
    };
    EXPECT_EQ(field_of("scenario = til\n[train]\nlrr = 0.1\n"), "train.lrr");
    EXPECT_EQ(field_of("scenario = til\n[train]\ncapacity = 1.5\n"), "train.capacity");
    EXPECT_EQ(field_of("scenario = til\n[train]\nepochs = many\n"), "train.epochs");
    EXPECT_EQ(field_of("scenario = til\n[model]\nfso = nerv3\n"), "model.fso");
    EXPECT_EQ(field_of("scenario = vil\n[data]\nheight = 20\n"), "data.height");
    EXPECT_EQ(field_of("scenario = fscil\n[train]\nmode = finetune\n"), "train.mode");
    EXPECT_EQ(field_of("scenario = fscil\n[train]\ncapacity = 1\n"), "train.capacity");
    EXPECT_EQ(field_of("[train]\nlr = 0.1\n"), "scenario");
    EXPECT_EQ(field_of("scenario = rl\n"), "scenario");
}

TEST(Config, JsonRoundTripAndHash) {
    for (auto s : {Scenario::til, Scenario::vil, Scenario::fscil}) {
        auto c = defaults_for(s);
        c.seed = 11;
        c.lr = 0.0123456789;
        const auto back = from_json(to_json(c));
        EXPECT_EQ(to_json(back), to_json(c));
        EXPECT_EQ(config_hash(back), config_hash(c));
        auto other = c;
        other.output_dir = "elsewhere";
        EXPECT_EQ(config_hash(other), config_hash(c));
        other.seed = 12;
        EXPECT_NE(config_hash(other), config_hash(c));
    }
}

TEST(Config, Fnv1aReferenceVectors) {
    EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(fnv1a("foobar"), 0x85944171f73967e8ULL);
    EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

// ---- datasets -------------------------------------------------------------

TEST(Datasets, TilLinearProbeAtFourSigma) {
    const auto sets = synth_til(defaults_for(Scenario::til).data, 0);
    ASSERT_EQ(sets.size(), 5u);
    for (const auto& d : sets) {
        EXPECT_EQ(d.train_size(), 400u);
        EXPECT_EQ(d.test_size(), 200u);
        EXPECT_EQ(d.num_classes, 2u);
        EXPECT_GE(linear_probe_accuracy(d), 0.99) << "session " << d.session;
    }
}

TEST(Datasets, TilClassMeansSitSeparationFromTheCentre) {
    DatasetSpec spec;
    spec.train_per_class = 20000;
    spec.test_per_class = 1;
    for (const auto& d : synth_til(spec, 3)) {
        double m0[2] = {0, 0}, m1[2] = {0, 0};
        for (std::size_t n = 0; n < d.train_size(); ++n) {
            double* m = d.train_y[n] == 0 ? m0 : m1;
            m[0] += d.train_x[2 * n] / 20000.0;
            m[1] += d.train_x[2 * n + 1] / 20000.0;
        }
        EXPECT_NEAR(std::hypot(m0[0] - m1[0], m0[1] - m1[1]), 2.0 * spec.separation, 0.05);
    }
}

TEST(Datasets, FscilRegistryGrowsByWays) {
    const auto spec = defaults_for(Scenario::fscil).data;
    const auto sets = synth_fscil(spec, 0);
    ASSERT_EQ(sets.size(), 4u);
    std::set<int> seen;
    const std::size_t expected[] = {6, 8, 10, 12};
    for (std::size_t s = 0; s < sets.size(); ++s) {
        std::set<int> mine(sets[s].train_y.begin(), sets[s].train_y.end());
        for (int c : mine) EXPECT_FALSE(seen.count(c)) << "class " << c << " repeats";
        seen.insert(mine.begin(), mine.end());
        EXPECT_EQ(seen.size(), expected[s]);
        EXPECT_EQ(sets[s].train_size(), mine.size() * (s == 0 ? spec.train_per_class : spec.shots));
        EXPECT_EQ(std::set<int>(sets[s].test_y.begin(), sets[s].test_y.end()), mine);
    }
}

TEST(Datasets, SameSeedSameData) {
    const auto spec = defaults_for(Scenario::fscil).data;
    const auto a = synth_fscil(spec, 5), b = synth_fscil(spec, 5), c = synth_fscil(spec, 6);
    for (std::size_t s = 0; s < a.size(); ++s) {
        EXPECT_EQ(a[s].train_x.storage(), b[s].train_x.storage());
        EXPECT_EQ(a[s].test_y, b[s].test_y);
    }
    EXPECT_NE(a[0].train_x.storage(), c[0].train_x.storage());
    const auto v = synth_vil(small_vil().data, 1), w = synth_vil(small_vil().data, 1);
    EXPECT_EQ(v[1].frames.storage(), w[1].frames.storage());
    EXPECT_NE(v[0].frames.storage(), v[1].frames.storage());
}

TEST(Datasets, InfeasibleSpecIsDataError) {
    DatasetSpec spec;
    spec.dim = 1;
    spec.base_classes = 40;
    EXPECT_THROW(synth_fscil(spec, 0), DataError);
    spec = DatasetSpec{};
    spec.classes_per_session = 1;
    EXPECT_THROW(synth_til(spec, 0), DataError);
}

// ---- ledger ---------------------------------------------------------------

TEST(Ledger, AccBwtWorkedExamples) {
    auto r = acc_bwt({{0.9}, {0.9, 0.8}, {0.9, 0.8, 0.7}});
    EXPECT_NEAR(r.acc, 0.8, 1e-15);
    EXPECT_EQ(r.bwt, 0.0);
    EXPECT_TRUE(r.bwt_defined);
    r = acc_bwt({{0.9}, {0.85, 0.8}, {0.7, 0.8, 0.6}});
    EXPECT_NEAR(r.bwt, -0.1, 1e-15);
}

TEST(Ledger, SingleSessionFlagsBwt) {
    const auto r = acc_bwt({{0.42}});
    EXPECT_EQ(r.acc, 0.42);
    EXPECT_EQ(r.bwt, 0.0);
    EXPECT_FALSE(r.bwt_defined);
    EXPECT_THROW(acc_bwt({}), UsageError);
    EXPECT_THROW(acc_bwt({{0.1}, {0.2}}), UsageError);
}

TEST(Ledger, RandomMatricesMatchDirectFormula) {
    Rng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t t = 1 + rng.below(9);
        Matrix a(t);
        for (std::size_t j = 0; j < t; ++j)
            for (std::size_t i = 0; i <= j; ++i) a[j].push_back(rng.uniform());
        double acc = 0.0;
        for (std::size_t i = 0; i < t; ++i) acc += a[t - 1][i];
        acc /= static_cast<double>(t);
        double bwt = 0.0;
        for (std::size_t i = 0; i + 1 < t; ++i) bwt += a[t - 1][i] - a[i][i];
        if (t > 1) bwt /= static_cast<double>(t - 1);
        const auto r = acc_bwt(a);
        EXPECT_EQ(r.acc, acc);
        EXPECT_EQ(r.bwt, bwt);
    }
}

TEST(Ledger, TransferMatrixUsesMinSessionMask) {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const int s = 1 + static_cast<int>(rng.below(6));
        std::map<std::pair<int, int>, double> table;
        for (int i = 1; i <= s; ++i)
            for (int k = 1; k <= s; ++k) table[{i, k}] = rng.uniform();
        const auto m = transfer_matrix(s, [&](int i, int k) { return table.at({i, k}); });
        for (int j = 1; j <= s; ++j)
            for (int i = 1; i <= s; ++i)
                EXPECT_EQ(m[j - 1][i - 1], table.at({i, j >= i ? i : j}));
    }
}

TEST(Ledger, RowsAreAppendOnlyLowerTriangular) {
    RunLedger l;
    l.append_row({1.0});
    EXPECT_THROW(l.append_row({1.0}), UsageError);
    l.append_row({0.5, 0.7});
    EXPECT_EQ(l.at(1, 0), 0.5);
    EXPECT_THROW(l.at(0, 1), LookupError);
}

// ---- quantization -------------------------------------------------------

TEST(Q8, EndpointsExactOnceStoredAsF32) {
    const std::vector<double> w = {0.0, 1.0};
    auto back = dequantize_q8(quantize_q8(w));
    EXPECT_EQ(back[0], 0.0);
    EXPECT_NEAR(back[1], 1.0, 1e-7);
    snap_to_f32(back);
    EXPECT_EQ(back, w);
}

TEST(Q8, ConstantTensorExact) {
    const std::vector<double> w(17, -0.375);
    const auto r = quantize_q8(w);
    EXPECT_EQ(r.scale, 1.0f);
    for (auto q : r.q) EXPECT_EQ(q, 0);
    EXPECT_EQ(dequantize_q8(r), w);
}

TEST(Q8, NonFiniteRejected) {
    EXPECT_THROW(quantize_q8(std::vector<double>{0.0, std::nan("")}), NumericError);
    EXPECT_THROW(quantize_q8(std::vector<double>{std::numeric_limits<double>::infinity()}), NumericError);
}

TEST(Q8, ErrorAtMostHalfScaleOnRandomTensors) {
    Rng rng(3);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.below(300);
        const double lo = rng.uniform(-10, 10), span = std::pow(10.0, rng.uniform(-4, 2));
        std::vector<double> w(n);
        for (auto& v : w) v = static_cast<float>(lo + span * rng.uniform());
        const auto r = quantize_q8(w);
        const auto back = dequantize_q8(r);
        for (std::size_t i = 0; i < n; ++i)
            ASSERT_LE(std::abs(back[i] - w[i]), static_cast<double>(r.scale) / 2.0) << "trial " << trial;
    }
}

TEST(Q8, ChosenCodeIsTheNearestOfAll256) {
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> w(20);
        for (auto& v : w) v = rng.normal();
        const auto r = quantize_q8(w);
        for (std::size_t i = 0; i < w.size(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (int q = 0; q < 256; ++q)
                best = std::min(best, std::abs(static_cast<double>(r.min) + q * static_cast<double>(r.scale) - w[i]));
            EXPECT_EQ(std::abs(dequantize_q8(r)[i] - w[i]), best);
        }
    }
}

// ---- checkpoint container ---------------------------------------------

namespace {

Checkpoint sample_checkpoint() {
    Rng rng(5);
    Checkpoint ck;
    ck.config_hash = 0x0123456789abcdefULL;
    ck.meta = {{"note", "x"}, {"values", {1.5, 0.1, 3}}};
    std::vector<double> v(37);
    for (auto& x : v) x = rng.normal();
    auto& rec = ck.add_f32("param/w", {37}, v);
    for (int s = 1; s <= 3; ++s) {
        std::vector<std::uint8_t> bits(37);
        for (auto& b : bits) b = rng.below(2);
        rec.masks.push_back({s, subnet::BinaryMask({37}, bits)});
    }
    ck.add_f32("param/b", {2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
    ck.add_f32("proto/0", {4}, std::vector<double>{0.25, 0.5, 0.75, 1.0});
    return ck;
}

}  // namespace

TEST(Checkpoint, HeaderLayout) {
    const std::string bytes = sample_checkpoint().serialize();
    EXPECT_EQ(bytes.substr(0, 4), "SNCL");
    EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1);
    EXPECT_EQ(static_cast<unsigned char>(bytes[5]), 0);
    EXPECT_EQ(static_cast<unsigned char>(bytes[6]), 0xef);
    EXPECT_EQ(static_cast<unsigned char>(bytes[13]), 0x01);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
    auto ck = sample_checkpoint();
    const std::string a = ck.serialize();
    const std::string b = Checkpoint::parse(a).serialize();
    EXPECT_EQ(a, b);
    ck.compress();
    const std::string c = ck.serialize();
    const auto back = Checkpoint::parse(c);
    EXPECT_EQ(back.serialize(), c);
    EXPECT_EQ(back.at("param/w").dtype, DType::q8);
    EXPECT_EQ(back.at("proto/0").dtype, DType::f32);
    const auto fresh = sample_checkpoint();
    const auto& orig = fresh.at("param/w");
    for (std::size_t m = 0; m < orig.masks.size(); ++m)
        EXPECT_EQ(subnet::bitpack(back.at("param/w").masks[m].mask), subnet::bitpack(orig.masks[m].mask));
}

TEST(Checkpoint, FileRoundTrip) {
    const auto dir = scratch("ckfile");
    const auto ck = sample_checkpoint();
    ck.save((dir / "a.sncl").string());
    EXPECT_EQ(Checkpoint::load((dir / "a.sncl").string()).serialize(), ck.serialize());
    EXPECT_THROW(Checkpoint::load((dir / "missing.sncl").string()), IoError);
}

TEST(Checkpoint, CorruptionIsFormatError) {
    const std::string good = sample_checkpoint().serialize();
    EXPECT_THROW(Checkpoint::parse(good.substr(0, good.size() - 1)), FormatError);
    EXPECT_THROW(Checkpoint::parse(good + "x"), FormatError);
    std::string bad = good;
    bad[0] = 'X';
    EXPECT_THROW(Checkpoint::parse(bad), FormatError);
    bad = good;
    bad[4] = 9;
    EXPECT_THROW(Checkpoint::parse(bad), FormatError);
    // the last mask byte of param/w (37 bits, 3 padding bits) sits before the next record's name length
    const std::size_t last_mask_byte = good.find("param/b") - 3;
    bad = good;
    bad[last_mask_byte] = static_cast<char>(static_cast<unsigned char>(bad[last_mask_byte]) | 0x80);
    EXPECT_THROW(Checkpoint::parse(bad), FormatError);
}

// ---- scenarios ------------------------------------------------------------

TEST(Scenario, TilLedgerIsLowerTriangularAndForgetFree) {
    const auto r = run_scenario(small_til());
    const auto& a = r.ledger.matrix();
    ASSERT_EQ(a.size(), 3u);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(a[j].size(), j + 1);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = i; j < 3; ++j) EXPECT_EQ(a[j][i], a[i][i]);
    EXPECT_EQ(r.ledger.summary().bwt, 0.0);
    EXPECT_TRUE(r.ledger.summary().bwt_defined);
    EXPECT_EQ(r.ledger.capacity().size(), 3u);
    EXPECT_EQ(r.ledger.curves().size(), 30u);
}

TEST(Scenario, RerunIsBitIdentical) {
    for (const auto& cfg : {small_til(), small_vil(), small_fscil()}) {
        const auto a = run_scenario(cfg), b = run_scenario(cfg);
        EXPECT_EQ(a.ledger.matrix(), b.ledger.matrix());
        EXPECT_EQ(report_csv(cfg.scenario, a.ledger), report_csv(cfg.scenario, b.ledger));
        EXPECT_EQ(curves_csv(a.ledger), curves_csv(b.ledger));
        EXPECT_EQ(a.checkpoint.serialize(), b.checkpoint.serialize());
    }
}

TEST(Scenario, FinetuneBaselineForgets) {
    auto cfg = defaults_for(Scenario::til);
    cfg.mode = subnet::TrainingMode::finetune;
    const auto r = run_scenario(cfg);
    EXPECT_LT(r.ledger.summary().bwt, 0.0);
    EXPECT_TRUE(r.checkpoint.at("param/fc1.weight").masks.empty());
}

TEST(Scenario, PopcountIsRoundedCapacity) {
    for (double c : {0.3, 0.5, 0.7}) {
        auto cfg = small_til(2);
        cfg.capacity = c;
        const auto r = run_scenario(cfg);
        std::size_t layers = 0;
        for (const auto& rec : r.checkpoint.records) {
            for (const auto& m : rec.masks) {
                EXPECT_EQ(m.mask.popcount(), static_cast<std::size_t>(std::floor(c * static_cast<double>(rec.size()) + 0.5)))
                    << rec.name << " session " << m.session;
                ++layers;
            }
        }
        EXPECT_EQ(layers, 8u);
    }
}

TEST(Scenario, CheckpointEvalMatchesTrainingReport) {
    for (const auto& cfg : {small_til(), small_vil(), small_fscil()}) {
        const auto r = run_scenario(cfg);
        const auto reloaded = Checkpoint::parse(r.checkpoint.serialize());
        const auto ev = evaluate_checkpoint(reloaded);
        EXPECT_EQ(ev.final_row, r.ledger.matrix().back()) << to_string(cfg.scenario);
        EXPECT_EQ(ev.acc, r.ledger.summary().acc);
        EXPECT_EQ(ev.extras, r.ledger.extras());
    }
}

TEST(Scenario, TransferMatrixAgainstManualForwardPasses) {
    const auto r = run_scenario(small_til(2));
    const auto t = checkpoint_transfer_matrix(r.checkpoint);
    auto model = make_classifier(r.config);
    model.add_head(1, r.config.seed);
    model.add_head(2, r.config.seed);
    for (auto* p : model.parameters()) {
        const auto& rec = r.checkpoint.at("param/" + p->name);
        const auto v = rec.values();
        std::copy(v.begin(), v.end(), p->theta.storage().begin());
    }
    const auto data = synth_til(r.config.data, r.config.seed);
    auto masks_of = [&](int s) {
        diffcore::MaskSet ms;
        for (auto* p : model.maskable_parameters())
            for (const auto& m : r.checkpoint.at("param/" + p->name).masks)
                if (m.session == s) ms.set(p->slot, m.mask.as_real());
        return ms;
    };
    const double m11 = subnet::classification_accuracy(model, data[0].test_x, data[0].test_y, 1, masks_of(1));
    const double m12 = subnet::classification_accuracy(model, data[1].test_x, data[1].test_y, 2, masks_of(1));
    const double m22 = subnet::classification_accuracy(model, data[1].test_x, data[1].test_y, 2, masks_of(2));
    EXPECT_EQ(t[0][0], m11);
    EXPECT_EQ(t[0][1], m12);
    EXPECT_EQ(t[1][0], m11);
    EXPECT_EQ(t[1][1], m22);
    EXPECT_EQ(t[0][0], r.ledger.matrix()[0][0]);
    EXPECT_EQ(t[1][1], r.ledger.matrix()[1][1]);
}

TEST(Scenario, CompressedTilStaysAccurate) {
    const auto r = run_scenario(defaults_for(Scenario::til));
    auto ck = r.checkpoint;
    EXPECT_GT(ck.compress(), 0u);
    const auto ev = evaluate_checkpoint(Checkpoint::parse(ck.serialize()));
    EXPECT_GE(ev.acc, r.ledger.summary().acc - 0.02);
}

TEST(Scenario, VilIsForgetFree) {
    const auto r = run_scenario(small_vil());
    EXPECT_EQ(r.ledger.metric(), "psnr");
    EXPECT_EQ(r.ledger.summary().bwt, 0.0);
    int with_metric = 0;
    for (const auto& c : r.ledger.curves()) with_metric += c.metric.has_value();
    EXPECT_EQ(with_metric, 4);
}

TEST(Scenario, InvalidConfigNamesTheField) {
    auto cfg = small_til();
    cfg.lr = -1.0;
    try {
        run_scenario(cfg);
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.field_path, "train.lr");
    }
}

TEST(Outputs, RunDirectoryFilesAndLedgerConsistency) {
    const auto dir = scratch("outputs");
    const auto r = run_scenario(small_til());
    write_run_outputs(r, dir);
    for (const char* f : {"checkpoint.sncl", "report.csv", "summary.json", "ledger.json", "curves.csv", "capacity.csv", "run.log"})
        EXPECT_TRUE(fs::exists(dir / f)) << f;
    const auto ledger = ledger_from_json(nlohmann::json::parse(read_text(dir / "ledger.json")));
    EXPECT_EQ(ledger.matrix(), r.ledger.matrix());
    const auto summary = nlohmann::json::parse(read_text(dir / "summary.json"));
    EXPECT_EQ(summary["acc"].get<double>(), acc_bwt(ledger.matrix()).acc);
    EXPECT_EQ(summary["bwt"].get<double>(), acc_bwt(ledger.matrix()).bwt);
    // values in report.csv read back exactly
    std::istringstream csv(read_text(dir / "report.csv"));
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, "scenario,session_trained,session_eval,metric,value");
    Matrix from_csv(3);
    while (std::getline(csv, line)) {
        std::vector<std::string> cols;
        std::stringstream ls(line);
        for (std::string c; std::getline(ls, c, ',');) cols.push_back(c);
        ASSERT_EQ(cols.size(), 5u);
        from_csv[std::stoul(cols[1]) - 1].push_back(std::strtod(cols[4].c_str(), nullptr));
    }
    EXPECT_EQ(from_csv, r.ledger.matrix());
}

TEST(Outputs, NumbersRoundTrip) {
    Rng rng(6);
    for (int i = 0; i < 1000; ++i) {
        const double v = rng.normal() * std::pow(10.0, rng.uniform(-8, 8));
        EXPECT_EQ(std::strtod(format_number(v).c_str(), nullptr), v);
    }
    EXPECT_EQ(format_number(0.5), "0.5");
    EXPECT_EQ(format_number(1.0), "1");
}

TEST(Report, EmitsCsvAndPlots) {
    const auto dir = scratch("report");
    write_run_outputs(run_scenario(small_til()), dir / "run");
    const auto files = write_report(dir / "run", dir / "report");
    for (const char* f : {"metric_matrix.csv", "metric_matrix.svg", "curves.svg", "capacity.svg", "transfer_matrix.csv",
                          "transfer_matrix.svg"}) {
        EXPECT_TRUE(fs::exists(dir / "report" / f)) << f;
        EXPECT_NE(std::find(files.begin(), files.end(), f), files.end()) << f;
    }
    EXPECT_EQ(read_text(dir / "report" / "metric_matrix.svg").rfind("<svg", 0), 0u);
}

// ---- command line -----------------------------------------------------------

TEST(Cli, ExitCodes) {
    EXPECT_EQ(run_cli({"--help"}), 0);
    EXPECT_EQ(run_cli({}), 1);
    EXPECT_EQ(run_cli({"train", "--config", "x.toml", "--unknown-flag"}), 1);
    EXPECT_EQ(run_cli({"frobnicate"}), 1);
    EXPECT_EQ(run_cli({"eval", "--checkpoint", "/nonexistent/ckpt"}), 2);
    const auto dir = scratch("cli_codes");
    write_text(dir / "bad.toml", "scenario = til\n[train]\nlr = -3\n");
    std::string err;
    EXPECT_EQ(run_cli({"train", "--config", (dir / "bad.toml").string()}, nullptr, &err), 1);
    EXPECT_NE(err.find("train.lr"), std::string::npos);
    EXPECT_EQ(run_cli({"train", "--config", (dir / "missing.toml").string()}), 1);
}

TEST(Cli, TrainEvalCompressInspectReport) {
    const auto dir = scratch("cli_flow");
    write_text(dir / "til.toml",
               "scenario = til\n[train]\nepochs = 8\n[model]\nhidden = 24\n[data]\nsessions = 3\n");
    std::string out;
    ASSERT_EQ(run_cli({"train", "--config", (dir / "til.toml").string(), "--seed", "4", "--out", (dir / "run").string()}, &out), 0);
    const auto summary = nlohmann::json::parse(read_text(dir / "run" / "summary.json"));
    const auto ck = (dir / "run" / "checkpoint.sncl").string();
    ASSERT_EQ(run_cli({"eval", "--checkpoint", ck}, &out), 0);
    EXPECT_NE(out.find("acc " + format_number(summary["acc"].get<double>()) + "\n"), std::string::npos) << out;
    const auto q8 = (dir / "q8.sncl").string();
    ASSERT_EQ(run_cli({"compress", "--checkpoint", ck, "--out", q8}, &out), 0);
    EXPECT_LT(fs::file_size(q8), fs::file_size(ck));
    ASSERT_EQ(run_cli({"inspect", "--checkpoint", q8}, &out), 0);
    EXPECT_EQ(out.rfind("magic SNCL version 1", 0), 0u);
    EXPECT_NE(out.find("param/fc1.weight q8"), std::string::npos);
    ASSERT_EQ(run_cli({"report", "--run", (dir / "run").string()}, &out), 0);
    EXPECT_TRUE(fs::exists(dir / "run" / "report" / "transfer_matrix.csv"));
    const auto cfg = from_json(Checkpoint::load(ck).meta["config"]);
    EXPECT_EQ(cfg.seed, 4u);
}
