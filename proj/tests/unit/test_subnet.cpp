#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "gradcheck.hpp"
#include "sncl/diffcore/layers.hpp"
#include "sncl/subnet/wsn.hpp"

using namespace sncl;
using namespace sncl::subnet;
using sncl::check::random_tensor;

namespace {

BinaryMask mask_of(std::vector<std::uint8_t> bits) {
    const std::size_t n = bits.size();
    return BinaryMask({n}, std::move(bits));
}

std::vector<std::uint8_t> bits_of(const BinaryMask& m) { return {m.bits().begin(), m.bits().end()}; }

diffcore::ModelGraph mlp(std::size_t in, std::size_t hidden, std::size_t classes) {
    diffcore::Sequential trunk;
    trunk.emplace<diffcore::Dense>("fc1", in, hidden);
    trunk.emplace<diffcore::ActivationLayer>(diffcore::Activation::relu);
    trunk.emplace<diffcore::Dense>("fc2", hidden, hidden);
    trunk.emplace<diffcore::ActivationLayer>(diffcore::Activation::relu);
    return diffcore::ModelGraph(std::move(trunk), [=](int) {
        diffcore::Sequential h;
        h.emplace<diffcore::Dense>("head", hidden, classes, false);
        return h;
    });
}

/// Two Gaussian blobs in `dim` dimensions; the class depends on coordinate `axis`.
SessionDataset blobs(int session, std::size_t dim, std::size_t axis, std::uint64_t seed, std::size_t n = 80) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(session));
    SessionDataset d;
    d.session = session;
    d.num_classes = 2;
    auto fill = [&](Tensor& x, std::vector<int>& y) {
        x = Tensor({n, dim});
        y.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = static_cast<int>(i % 2);
            for (std::size_t j = 0; j < dim; ++j) x[i * dim + j] = 0.3 * rng.normal();
            x[i * dim + axis] += y[i] ? 1.5 : -1.5;
        }
    };
    fill(d.train_x, d.train_y);
    fill(d.test_x, d.test_y);
    return d;
}

}  // namespace

TEST(SelectTopc, TwoLargestScores) {
    EXPECT_EQ(bits_of(select_topc_mask(Tensor::from({4}, {0.9, 0.1, 0.5, 0.7}), 0.5)),
              (std::vector<std::uint8_t>{1, 0, 0, 1}));
}

TEST(SelectTopc, TiesGoToLowestIndex) {
    EXPECT_EQ(bits_of(select_topc_mask(Tensor({4}, 0.25), 0.5)), (std::vector<std::uint8_t>{1, 1, 0, 0}));
}

TEST(SelectTopc, MatchesFullSortOracle) {
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor rho({1000});
        // coarse values force many ties
        for (auto& v : rho.storage()) v = std::floor(rng.uniform() * 50.0);
        const BinaryMask m = select_topc_mask(rho, 0.3);
        std::vector<std::size_t> order(1000);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return rho[a] > rho[b]; });
        std::vector<std::uint8_t> oracle(1000, 0);
        for (std::size_t i = 0; i < 300; ++i) oracle[order[i]] = 1;
        EXPECT_EQ(bits_of(m), oracle);
    }
}

TEST(SelectTopc, LargeTensorsWithNegativesAndSignedZeros) {
    Rng rng(22);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 20000 + 997 * static_cast<std::size_t>(trial);
        Tensor rho({n});
        for (auto& v : rho.storage()) {
            const double u = rng.uniform();
            v = u < 0.2 ? 0.0 : (u < 0.3 ? -0.0 : (trial % 2 ? std::floor(rng.uniform(-20, 20)) : rng.uniform(-1e-3, 1e3)));
        }
        for (double c : {0.05, 0.3, 0.7}) {
            const BinaryMask m = select_topc_mask(rho, c);
            const std::size_t k = capacity_count(c, n);
            std::vector<std::size_t> order(n);
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return rho[a] > rho[b]; });
            std::vector<std::uint8_t> oracle(n, 0);
            for (std::size_t i = 0; i < k; ++i) oracle[order[i]] = 1;
            EXPECT_EQ(bits_of(m), oracle) << "trial " << trial << " c " << c;
            EXPECT_EQ(m.popcount(), k);
        }
    }
}

TEST(SelectTopc, RejectsCapacityOutsideUnitInterval) {
    const Tensor rho({4}, 1.0);
    EXPECT_THROW(select_topc_mask(rho, 0.0), ParameterError);
    EXPECT_THROW(select_topc_mask(rho, 1.01), ParameterError);
    EXPECT_THROW(select_topc_mask(rho, -0.5), ParameterError);
    EXPECT_EQ(select_topc_mask(rho, 1.0).popcount(), 4u);
}

TEST(SelectTopc, CountIsRoundHalfUp) {
    Rng rng(2);
    for (double c : {0.3, 0.5, 0.7, 0.25}) {
        for (std::size_t n : {1u, 2u, 3u, 7u, 10u, 37u, 1000u}) {
            const BinaryMask m = select_topc_mask(random_tensor({n}, rng), c);
            EXPECT_EQ(m.popcount(), static_cast<std::size_t>(std::floor(c * static_cast<double>(n) + 0.5)));
        }
    }
    EXPECT_EQ(capacity_count(0.5, 5), 3u);
    EXPECT_EQ(capacity_count(0.25, 10), 3u);
}

TEST(Accumulate, ElementwiseOr) {
    EXPECT_EQ(bits_of(accumulate(mask_of({1, 0, 0, 1}), mask_of({0, 1, 0, 1}))), (std::vector<std::uint8_t>{1, 1, 0, 1}));
    const BinaryMask m = mask_of({1, 0, 1, 1, 0});
    EXPECT_EQ(accumulate(m, BinaryMask({5})), m);
}

TEST(Accumulate, FoldOrderIrrelevant) {
    Rng rng(8);
    std::vector<BinaryMask> masks;
    for (int k = 0; k < 5; ++k) {
        std::vector<std::uint8_t> b(64);
        for (auto& v : b) v = rng.uniform() < 0.2 ? 1 : 0;
        masks.push_back(mask_of(b));
    }
    std::vector<std::uint8_t> any(64, 0);
    for (const auto& m : masks)
        for (std::size_t i = 0; i < 64; ++i) any[i] |= m.bits()[i];
    std::vector<int> perm{0, 1, 2, 3, 4};
    do {
        BinaryMask acc({64});
        for (int i : perm) acc = accumulate(acc, masks[static_cast<std::size_t>(i)]);
        EXPECT_EQ(bits_of(acc), any);
    } while (std::next_permutation(perm.begin(), perm.end()));
}

TEST(Accumulate, ShapeMismatch) { EXPECT_THROW(accumulate(BinaryMask({3}), BinaryMask({4})), StructuralError); }

TEST(GatedStep, FreezesPreviousPositions) {
    const Tensor out = gated_weight_step(Tensor::from({2}, {1, 2}), std::vector<double>{0.5, 0.5}, mask_of({1, 0}), 0.1);
    EXPECT_EQ(out[0], 1.0);
    EXPECT_DOUBLE_EQ(out[1], 1.95);
}

TEST(GatedStep, AllFrozenIsUnchanged) {
    Rng rng(1);
    const Tensor theta = random_tensor({6}, rng);
    const std::vector<double> g{1, 2, 3, 4, 5, 6};
    EXPECT_EQ(gated_weight_step(theta, g, BinaryMask::ones({6}), 0.3), theta);
}

TEST(GatedStep, NoneFrozenEqualsPlainStep) {
    Rng rng(1);
    const Tensor theta = random_tensor({6}, rng);
    std::vector<double> g(6);
    for (auto& v : g) v = rng.normal();
    Tensor plain = theta;
    diffcore::Optimizer sgd({diffcore::OptimizerKind::sgd});
    sgd.step(&plain, plain.values(), g, {}, 0.05);
    EXPECT_EQ(gated_weight_step(theta, g, BinaryMask({6}), 0.05), plain);
}

TEST(GatedStep, AdamMomentsAreGated) {
    diffcore::Optimizer adam;
    std::vector<double> v{1.0, 1.0};
    const std::vector<double> gate{0.0, 1.0};
    for (int i = 0; i < 10; ++i) adam.step(&v, v, std::vector<double>{1.0, 1.0}, gate, 0.1);
    EXPECT_EQ(v[0], 1.0);
    EXPECT_LT(v[1], 1.0);
    // a released entry starts from zero moments
    const double before = v[0];
    adam.step(&v, v, std::vector<double>{1.0, 1.0}, std::vector<double>{1.0, 1.0}, 0.1);
    EXPECT_NEAR(before - v[0], 0.1 * (1 - 0.9) / (1 - std::pow(0.9, 11)) /
                                   (std::sqrt((1 - 0.999) / (1 - std::pow(0.999, 11))) + 1e-8),
                1e-12);
}

TEST(SteScore, LinearCaseGradientIsThetaTimesInput) {
    diffcore::Dense d("d", 3, 1);
    d.weight().theta = Tensor::from({1, 3}, {0.5, -1.0, 2.0});
    d.weight().slot = 0;
    d.bias().slot = 1;
    diffcore::MaskSet ms;
    ms.set(0, {1, 0, 1});
    ms.set(1, {1});
    d.forward(Tensor::from({1, 3}, {2.0, 3.0, -1.0}), ms, true);
    d.backward(Tensor::from({1, 1}, {1.0}));
    EXPECT_EQ(d.weight().grad_rho, (std::vector<double>{1.0, -3.0, -2.0}));
    const Tensor rho = ste_score_step(d.weight().rho, d.weight().grad_rho, 0.1);
    EXPECT_DOUBLE_EQ(rho[1], d.weight().rho[1] + 0.3);
}

TEST(Wsn, OutOfOrderSessionIsSequencingError) {
    auto g = mlp(4, 8, 2);
    diffcore::seeded_init(g, 1);
    g.add_head(1, 1);
    g.add_head(2, 1);
    WsnLearner learner(g, {0.5});
    auto d2 = blobs(2, 4, 1, 3);
    train_session_wsn(learner, d2, {2, 0.01, 16, 0});
    auto d1 = blobs(1, 4, 0, 3);
    EXPECT_THROW(train_session_wsn(learner, d1, {2, 0.01, 16, 0}), SequencingError);
}

TEST(Wsn, ForgetFreeAndCapacityExact) {
    auto g = mlp(4, 16, 2);
    diffcore::seeded_init(g, 3);
    WsnLearner learner(g, {0.5});
    std::vector<SessionDataset> data;
    std::vector<Tensor> logits_after;
    std::vector<std::vector<double>> theta_before_frozen;
    for (int s = 1; s <= 3; ++s) {
        g.add_head(s, 3);
        data.push_back(blobs(s, 4, static_cast<std::size_t>(s - 1), 10));
        std::vector<Tensor> frozen_before;
        std::vector<BinaryMask> acc_before;
        for (auto* p : g.maskable_parameters()) {
            frozen_before.push_back(p->theta);
            acc_before.push_back(p->accumulated);
        }
        std::vector<Tensor> rho_before;
        for (auto* p : g.maskable_parameters()) rho_before.push_back(p->rho);
        train_session_wsn(learner, data.back(), {5, 0.01, 16, 0});
        auto params = g.maskable_parameters();
        bool rho_moved_on_frozen = false;
        for (std::size_t i = 0; i < params.size(); ++i) {
            for (std::size_t j = 0; j < params[i]->size(); ++j)
                if (acc_before[i].test(j)) {
                    EXPECT_EQ(params[i]->theta[j], frozen_before[i][j]);
                    rho_moved_on_frozen |= params[i]->rho[j] != rho_before[i][j];
                }
            EXPECT_EQ(params[i]->mask_for(s).popcount(), capacity_count(0.5, params[i]->size()));
            EXPECT_GE(params[i]->accumulated.popcount(), acc_before[i].popcount());
        }
        if (s > 1) {
            EXPECT_TRUE(rho_moved_on_frozen);
        }
        logits_after.push_back(g.forward(data.back().test_x, s, learner.session_masks(s), false));
    }
    for (int s = 1; s <= 3; ++s) {
        const Tensor again = g.forward(data[static_cast<std::size_t>(s - 1)].test_x, s, learner.session_masks(s), false);
        EXPECT_EQ(again, logits_after[static_cast<std::size_t>(s - 1)]) << "session " << s;
        EXPECT_GE(classification_accuracy(g, data[static_cast<std::size_t>(s - 1)].test_x,
                                          data[static_cast<std::size_t>(s - 1)].test_y, s, learner.session_masks(s)),
                  0.9);
    }
}

TEST(Wsn, IdenticalRunsAreBitIdentical) {
    auto run = [] {
        auto g = mlp(4, 8, 2);
        diffcore::seeded_init(g, 9);
        g.add_head(1, 9);
        WsnLearner learner(g, {0.3});
        train_session_wsn(learner, blobs(1, 4, 2, 4), {3, 0.01, 16, 9});
        std::vector<double> all;
        for (auto* p : g.parameters()) {
            all.insert(all.end(), p->theta.storage().begin(), p->theta.storage().end());
            all.insert(all.end(), p->rho.storage().begin(), p->rho.storage().end());
        }
        return all;
    };
    EXPECT_EQ(run(), run());
}

TEST(Wsn, UselessFeatureScoresFallBehind) {
    // one input feature carries the label, the other is noise
    auto g = mlp(2, 8, 2);
    diffcore::seeded_init(g, 13);
    g.add_head(1, 13);
    WsnLearner learner(g, {0.5, TrainingMode::wsn, {diffcore::OptimizerKind::sgd}});
    const auto data = blobs(1, 2, 0, 13, 200);
    auto& w = g.maskable_parameters()[0]->rho;
    auto column_mean = [&](std::size_t j) {
        double s = 0.0;
        for (std::size_t o = 0; o < 8; ++o) s += w[o * 2 + j];
        return s / 8.0;
    };
    const double gap_before = column_mean(0) - column_mean(1);
    train_session_wsn(learner, data, {50, 0.05, 200, 1});  // 50 full-batch steps
    const double gap_after = column_mean(0) - column_mean(1);
    EXPECT_GT(gap_after, gap_before);
}

TEST(Reuse, SingleSessionHasZeroReuse) {
    ScoredParameter p("w", {4}, 1);
    p.freeze_session(1, mask_of({1, 1, 0, 0}));
    const auto st = reuse_statistics({&p});
    ASSERT_EQ(st.size(), 1u);
    EXPECT_EQ(st[0].reuse_fraction, 0.0);
    EXPECT_EQ(st[0].capacity, 0.5);
}

TEST(Reuse, RepeatedMaskHasFullReuse) {
    ScoredParameter p("w", {4}, 1);
    p.freeze_session(1, mask_of({1, 0, 1, 0}));
    p.freeze_session(2, mask_of({1, 0, 1, 0}));
    const auto st = reuse_statistics({&p});
    EXPECT_EQ(st[1].reuse_fraction, 1.0);
    EXPECT_EQ(st[1].cumulative, st[0].cumulative);
}

TEST(Reuse, MatchesSetIntersectionOracle) {
    Rng rng(31);
    ScoredParameter a("a", {50}, 1), b("b", {30}, 1);
    std::vector<std::vector<std::uint8_t>> ma, mb;
    for (int s = 1; s <= 4; ++s) {
        a.freeze_session(s, select_topc_mask(random_tensor({50}, rng), 0.3));
        b.freeze_session(s, select_topc_mask(random_tensor({30}, rng), 0.3));
    }
    const auto st = reuse_statistics({&a, &b});
    std::set<std::pair<int, std::size_t>> seen;  // (param, index) in M_{s-1}
    for (int s = 1; s <= 4; ++s) {
        std::size_t sel = 0, reused = 0;
        std::set<std::pair<int, std::size_t>> now;
        for (int k = 0; k < 2; ++k) {
            const BinaryMask& m = (k == 0 ? a : b).mask_for(s);
            for (std::size_t i = 0; i < m.size(); ++i)
                if (m.test(i)) {
                    ++sel;
                    reused += seen.count({k, i});
                    now.insert({k, i});
                }
        }
        seen.insert(now.begin(), now.end());
        const auto& r = st[static_cast<std::size_t>(s - 1)];
        EXPECT_EQ(r.reuse_fraction, static_cast<double>(reused) / static_cast<double>(sel));
        EXPECT_EQ(r.cumulative, static_cast<double>(seen.size()) / 80.0);
        EXPECT_GE(r.reuse_fraction, 0.0);
        EXPECT_LE(r.reuse_fraction, 1.0);
    }
}

TEST(Reuse, NoSessionsIsUsageError) {
    ScoredParameter p("w", {4}, 1);
    EXPECT_THROW(reuse_statistics({&p}), UsageError);
}

TEST(Bitpack, DefinedBitOrder) {
    EXPECT_EQ(bitpack(mask_of({1, 0, 0, 1})), (std::vector<std::uint8_t>{0x09}));
    EXPECT_EQ(bitpack(BinaryMask({16})), (std::vector<std::uint8_t>{0x00, 0x00}));
    EXPECT_EQ(bitpack(mask_of(std::vector<std::uint8_t>(9, 1))).size(), 2u);
}

TEST(Bitpack, RandomRoundTrips) {
    Rng rng(77);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.below(200);
        std::vector<std::uint8_t> b(n);
        for (auto& v : b) v = rng.uniform() < 0.5 ? 1 : 0;
        const BinaryMask m = mask_of(b);
        const auto bytes = bitpack(m);
        ASSERT_EQ(bytes.size(), (n + 7) / 8);
        ASSERT_EQ(bitunpack(bytes, {n}), m);
    }
}

TEST(Bitpack, NonBinaryValuesRejected) {
    const std::vector<double> v{1.0, 0.5};
    EXPECT_THROW(bitpack(std::span<const double>(v)), DataError);
}

TEST(ScoredParameter, DuplicateFreezeIsSequencingError) {
    ScoredParameter p("w", {2}, 1);
    p.freeze_session(1, mask_of({1, 0}));
    EXPECT_THROW(p.freeze_session(1, mask_of({0, 1})), SequencingError);
    EXPECT_THROW(p.mask_for(2), LookupError);
}
