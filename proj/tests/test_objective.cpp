#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cfpc/objective.hpp"
#include "oracles.hpp"

using namespace cfpc;

namespace {

ChannelRealization random_channel(int M, int K, double phi, std::uint64_t seed) {
    GeometryConfig geo;
    RandomStream rng(seed);
    const LongTermCsi csi = sample_deployment(geo, M, K, rng);
    return sample_channel(csi, phi, rng);
}

PowerAllocation random_feasible_power(int M, int K, double P, RandomStream& rng) {
    PowerAllocation p;
    p.p = Tensor2D(M, K);
    for (int i = 0; i < M; ++i) {
        double row_sum = 0.0;
        for (int k = 0; k < K; ++k) {
            p.p(i, k) = rng.uniform(0.0, 1.0);
            row_sum += p.p(i, k);
        }
        const double scale = rng.uniform(0.1, 0.95) * P / row_sum;
        for (int k = 0; k < K; ++k) p.p(i, k) *= scale;
    }
    return p;
}

} // namespace

TEST_CASE("single-link SINR collapses to P |h|^2") {
    ChannelRealization chan;
    chan.h_hat = ComplexMat(1, 1);
    chan.err = ComplexMat(1, 1, {0.0, 0.0});
    chan.rho = Tensor2D(1, 1, 1.0);
    chan.h_hat(0, 0) = {0.6, -0.8}; // |h| = 1
    const double P = 7.0;
    PowerAllocation p{Tensor2D(1, 1, P)};
    CHECK(sinr(chan, p, 0) == doctest::Approx(P).epsilon(1e-12));

    chan.h_hat(0, 0) = {1.5, 2.0}; // |h|^2 = 6.25
    CHECK(sinr(chan, p, 0) == doctest::Approx(P * 6.25).epsilon(1e-12));
}

TEST_CASE("zero power means zero SINR and zero rate") {
    const ChannelRealization chan = random_channel(3, 2, 0.2, 4);
    PowerAllocation p{Tensor2D(3, 2, 0.0)};
    for (int k = 0; k < 2; ++k) CHECK(sinr(chan, p, k) == 0.0);
    CHECK(sum_rate(chan, p) == 0.0);
}

TEST_CASE("unit channel, unit power gives exactly 1 bit/s/Hz") {
    ChannelRealization chan;
    chan.h_hat = ComplexMat(1, 1, {1.0, 0.0});
    chan.err = ComplexMat(1, 1, {0.0, 0.0});
    chan.rho = Tensor2D(1, 1, 1.0);
    PowerAllocation p{Tensor2D(1, 1, 1.0)};
    CHECK(sum_rate(chan, p) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("sinr matches a literal transcription of the formula") {
    RandomStream rng(21);
    for (int trial = 0; trial < 40; ++trial) {
        const int M = 1 + int(rng.uniform() * 4);
        const int K = 1 + int(rng.uniform() * 4);
        const double phi = rng.uniform();
        const ChannelRealization chan = random_channel(M, K, phi, 100 + trial);
        RandomStream prng = rng.substream("p", trial);
        const PowerAllocation p = random_feasible_power(M, K, 50.0, prng);
        for (int k = 0; k < K; ++k) {
            const double mine = sinr(chan, p, k);
            const double ref = oracle::sinr_literal(chan, p.p, k);
            CHECK(mine == doctest::Approx(ref).epsilon(1e-12));
        }
    }
}

TEST_CASE("sinr is invariant to joint per-UE phase rotations") {
    const int M = 4, K = 3;
    const ChannelRealization chan = random_channel(M, K, 0.3, 8);
    RandomStream rng(9);
    const PowerAllocation p = random_feasible_power(M, K, 10.0, rng);

    ChannelRealization rotated = chan;
    for (int k = 0; k < K; ++k) {
        const double theta = rng.uniform(0.0, 2 * M_PI);
        const cdouble rot{std::cos(theta), std::sin(theta)};
        for (int i = 0; i < M; ++i) {
            rotated.h_hat(i, k) *= rot;
            rotated.err(i, k) *= rot;
        }
    }
    for (int k = 0; k < K; ++k)
        CHECK(sinr(rotated, p, k) == doctest::Approx(sinr(chan, p, k)).epsilon(1e-12));
}

TEST_CASE("single-AP perfect-CSI SINR has its closed form for any K") {
    // M = 1, phi = 0: the beamformer phase is unit-modulus, so
    // gamma_k = p_k |h_k|^2 / (1 + |h_k|^2 sum_{l != k} p_l).
    const int K = 4;
    ChannelRealization chan;
    chan.h_hat = ComplexMat(1, K);
    chan.err = ComplexMat(1, K, {0.0, 0.0});
    chan.rho = Tensor2D(1, K, 1.0);
    RandomStream rng(44);
    PowerAllocation p{Tensor2D(1, K)};
    double total = 0.0;
    for (int k = 0; k < K; ++k) {
        chan.h_hat(0, k) = rng.cgaussian(2.0);
        p.p(0, k) = rng.uniform(0.1, 2.0);
        total += p.p(0, k);
    }
    for (int k = 0; k < K; ++k) {
        const double h2 = std::norm(chan.h_hat(0, k));
        const double expected = p.p(0, k) * h2 / (1.0 + h2 * (total - p.p(0, k)));
        CHECK(sinr(chan, p, k) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("sinr grows with own power when interference is absent") {
    ChannelRealization chan = random_channel(2, 2, 0.0, 3);
    PowerAllocation p{Tensor2D(2, 2, 0.0)};
    double prev = sinr(chan, p, 0);
    for (double v : {0.1, 0.5, 1.0, 3.0}) {
        p.p(0, 0) = v;
        p.p(1, 0) = v * 0.5;
        const double cur = sinr(chan, p, 0);
        CHECK(cur >= prev);
        prev = cur;
    }
}

TEST_CASE("orthogonal channels decouple the sum rate") {
    const int K = 3;
    ChannelRealization chan;
    chan.h_hat = ComplexMat(K, K, {0.0, 0.0});
    chan.err = ComplexMat(K, K, {0.0, 0.0});
    chan.rho = Tensor2D(K, K, 1.0);
    RandomStream rng(12);
    PowerAllocation p{Tensor2D(K, K, 0.0)};
    double expected = 0.0;
    for (int k = 0; k < K; ++k) {
        chan.h_hat(k, k) = rng.cgaussian(1.0);
        p.p(k, k) = rng.uniform(0.5, 3.0);
        expected += std::log2(1.0 + p.p(k, k) * std::norm(chan.h_hat(k, k)));
    }
    CHECK(sum_rate(chan, p) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("amplitude gradient of the sum rate matches finite differences") {
    const int M = 3, K = 3;
    const ChannelRealization chan = random_channel(M, K, 0.25, 15);
    RandomStream rng(16);
    std::vector<double> q0(M * K);
    for (double& v : q0) v = rng.uniform(0.2, 1.5);

    auto rate_of = [&](const std::vector<double>& flat) {
        Tensor2D q(M, K);
        q.storage() = flat;
        Tensor2D unused;
        return sum_rate_amp_grad(chan, q, unused);
    };

    Tensor2D q(M, K);
    q.storage() = q0;
    Tensor2D grad;
    const double value = sum_rate_amp_grad(chan, q, grad);

    PowerAllocation p{Tensor2D(M, K)};
    for (std::size_t n = 0; n < p.p.size(); ++n)
        p.p.data()[n] = q0[n] * q0[n];
    CHECK(value == doctest::Approx(sum_rate(chan, p)).epsilon(1e-12));

    for (std::size_t n = 0; n < q0.size(); ++n) {
        const double fd = oracle::central_diff(rate_of, q0, n, 1e-6);
        CHECK(grad.data()[n] == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("ergodic evaluation: zero policy, single sample, determinism") {
    GeometryConfig geo;
    RandomStream rng(19);
    const LongTermCsi csi = sample_deployment(geo, 3, 2, rng);

    const PowerPolicy zero = [](const LongTermCsi& rho, const ComplexMat&) {
        return PowerAllocation{Tensor2D(rho.M(), rho.K(), 0.0)};
    };
    const RateReport zero_report = ergodic_sum_rate(csi, zero, 0.2, 50, RandomStream(5));
    CHECK(zero_report.sum_rate == 0.0);
    CHECK(zero_report.sample_count == 50);

    const PowerPolicy equal = [](const LongTermCsi& rho, const ComplexMat&) {
        return PowerAllocation{Tensor2D(rho.M(), rho.K(), 1.0 / rho.K())};
    };
    const RateReport single = ergodic_sum_rate(csi, equal, 0.2, 1, RandomStream(5));
    RandomStream expect_rng = RandomStream(5).substream("mc-sample", 0);
    const ChannelRealization chan = sample_channel(csi, 0.2, expect_rng);
    CHECK(single.sum_rate ==
          doctest::Approx(sum_rate(chan, PowerAllocation{Tensor2D(3, 2, 0.5)}))
              .epsilon(1e-15));

    const RateReport a = ergodic_sum_rate(csi, equal, 0.2, 200, RandomStream(5));
    const RateReport b = ergodic_sum_rate(csi, equal, 0.2, 200, RandomStream(5));
    CHECK(a.sum_rate == b.sum_rate);
    CHECK(a.sample_sums == b.sample_sums);

    double per_ue_total = 0.0;
    for (double r : a.per_ue_rates) per_ue_total += r;
    CHECK(a.sum_rate == doctest::Approx(per_ue_total).epsilon(1e-12));
}

TEST_CASE("ergodic evaluation reports the failing sample index") {
    GeometryConfig geo;
    RandomStream rng(23);
    const LongTermCsi csi = sample_deployment(geo, 2, 2, rng);
    const PowerPolicy broken = [](const LongTermCsi&, const ComplexMat&) -> PowerAllocation {
        throw std::runtime_error("boom");
    };
    CHECK_THROWS_WITH_AS(ergodic_sum_rate(csi, broken, 0.0, 3, RandomStream(1)),
                         doctest::Contains("sample 0"), std::runtime_error);
}

TEST_CASE("ergodic standard error decays like 1/sqrt(n)") {
    GeometryConfig geo;
    RandomStream rng(29);
    const LongTermCsi csi = sample_deployment(geo, 2, 2, rng);
    const PowerPolicy equal = [](const LongTermCsi& rho, const ComplexMat&) {
        return PowerAllocation{Tensor2D(rho.M(), rho.K(), 0.5)};
    };
    const RateReport small = ergodic_sum_rate(csi, equal, 0.1, 500, RandomStream(2));
    const RateReport large = ergodic_sum_rate(csi, equal, 0.1, 8000, RandomStream(2));
    const double ratio = small.std_error() / large.std_error();
    CHECK(ratio > 2.8); // ideal 4.0 for 16x samples
    CHECK(ratio < 5.2);
}

TEST_CASE("feasibility checks entries and row sums against the tolerance") {
    const double P = 2.0;
    PowerAllocation equal{Tensor2D(3, 4, P / 4)};
    const Feasibility ok = check_feasible(equal, P, 1e-9);
    CHECK(ok.feasible);
    for (double s : ok.slack) CHECK(s == doctest::Approx(0.0).epsilon(1e-12));

    PowerAllocation negative = equal;
    negative.p(1, 2) = -1.0;
    CHECK_FALSE(check_feasible(negative, P, 1e-9).feasible);

    PowerAllocation overspent = equal;
    overspent.p(0, 0) += 10e-9; // pushes the row sum past P + tol
    CHECK_FALSE(check_feasible(overspent, P, 1e-9).feasible);
    CHECK(check_feasible(overspent, P, 1e-6).feasible);
}

TEST_CASE("rate report CSV row carries the provenance columns") {
    RateReport report;
    report.sum_rate = 1.5;
    report.sample_count = 10;
    report.sample_sums.assign(10, 1.5);
    const std::string row =
        rate_report_csv_row(report, "abc123", 4, 2, 20.0, 0.1, "equal", 77);
    CHECK(row == "abc123,4,2,20,0.10000000000000001,equal,1.5,0,10,77");
    CHECK(rate_report_csv_header().find("config_hash") == 0);
}
