#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cfpc/netenv.hpp"

using namespace cfpc;

namespace {

std::filesystem::path temp_file(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

} // namespace

TEST_CASE("path loss hits the reference values") {
    GeometryConfig geo;
    CHECK(path_loss(geo, 30.0) == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(path_loss(geo, 300.0) == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("path loss is monotone decreasing and floored at 1 m") {
    GeometryConfig geo;
    RandomStream rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        const double a = rng.uniform(1.0, 600.0);
        const double b = a + rng.uniform(0.0, 100.0) + 1e-9;
        CHECK(path_loss(geo, a) > path_loss(geo, b));
    }
    CHECK(path_loss(geo, 0.0) == path_loss(geo, 1.0));
    CHECK(path_loss(geo, 0.5) == path_loss(geo, 1.0));
}

TEST_CASE("deployments are deterministic in (config, seed)") {
    GeometryConfig geo;
    RandomStream a(123), b(123), c(124);
    const LongTermCsi csi_a = sample_deployment(geo, 6, 3, a);
    const LongTermCsi csi_b = sample_deployment(geo, 6, 3, b);
    const LongTermCsi csi_c = sample_deployment(geo, 6, 3, c);
    CHECK(csi_a.rho == csi_b.rho);
    CHECK_FALSE(csi_a.rho == csi_c.rho);
    CHECK(csi_a.M() == 6);
    CHECK(csi_a.K() == 3);
    for (double v : csi_a.rho.storage()) CHECK(v > 0.0);
}

TEST_CASE("recorded positions regenerate the same rho") {
    GeometryConfig geo;
    RandomStream rng(9);
    DeploymentPositions pos;
    const LongTermCsi csi = sample_deployment(geo, 4, 2, rng, &pos);
    REQUIRE(pos.aps.size() == 4);
    REQUIRE(pos.ues.size() == 2);
    for (int i = 0; i < 4; ++i)
        for (int k = 0; k < 2; ++k) {
            const double d = std::hypot(pos.aps[i].x - pos.ues[k].x,
                                        pos.aps[i].y - pos.ues[k].y);
            CHECK(csi.rho(i, k) == path_loss(geo, d));
            CHECK(std::hypot(pos.aps[i].x, pos.aps[i].y) <= geo.radius);
        }
}

TEST_CASE("phi = 0 gives exact estimates, phi = 1 gives pure error") {
    GeometryConfig geo;
    RandomStream rng(2);
    const LongTermCsi csi = sample_deployment(geo, 3, 2, rng);

    RandomStream ch0 = rng.substream("ch0");
    const ChannelRealization clean = sample_channel(csi, 0.0, ch0);
    for (const auto& e : clean.err.storage()) CHECK(e == cdouble{0.0, 0.0});

    RandomStream ch1 = rng.substream("ch1");
    const ChannelRealization noisy = sample_channel(csi, 1.0, ch1);
    for (const auto& h : noisy.h_hat.storage()) CHECK(h == cdouble{0.0, 0.0});

    CHECK_THROWS_AS(sample_channel(csi, 1.5, ch1), std::invalid_argument);
}

TEST_CASE("empirical channel variances match the phi split within 2%") {
    LongTermCsi csi;
    csi.rho = Tensor2D(1, 1, 2.5);
    const double phi = 0.3;
    RandomStream rng(77);
    const int n = 100000;
    double var_hat = 0.0, var_err = 0.0;
    for (int i = 0; i < n; ++i) {
        const ChannelRealization chan = sample_channel(csi, phi, rng);
        var_hat += std::norm(chan.h_hat(0, 0));
        var_err += std::norm(chan.err(0, 0));
    }
    var_hat /= n;
    var_err /= n;
    CHECK(var_hat == doctest::Approx((1 - phi) * 2.5).epsilon(0.02));
    CHECK(var_err == doctest::Approx(phi * 2.5).epsilon(0.02));
    CHECK(var_hat + var_err == doctest::Approx(2.5).epsilon(0.02));
}

TEST_CASE("normalize_longterm: closed forms, bounds, and scale invariance") {
    SUBCASE("single UE collapses to sqrt(P)") {
        const double rho = 0.37;
        const auto out = normalize_longterm(std::vector<double>{rho}, 9.0);
        CHECK(out.size() == 1);
        CHECK(out[0] == doctest::Approx(3.0).epsilon(1e-15));
    }
    SUBCASE("equal entries split sqrt(P)/K") {
        const std::vector<double> rho(4, 1.7);
        const auto out = normalize_longterm(rho, 4.0);
        for (double v : out) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
    }
    SUBCASE("random input sums to sqrt(P) and stays in range") {
        RandomStream rng(5);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<double> rho(6);
            for (double& r : rho) r = std::exp(rng.uniform(-8.0, 3.0));
            const double P = rng.uniform(0.5, 200.0);
            const auto out = normalize_longterm(rho, P);
            double sum = 0.0;
            for (double v : out) {
                CHECK(v >= 0.0);
                CHECK(v <= std::sqrt(P));
                sum += v;
            }
            CHECK(sum == doctest::Approx(std::sqrt(P)).epsilon(1e-12));

            std::vector<double> scaled = rho;
            for (double& r : scaled) r *= 13.75;
            const auto out2 = normalize_longterm(scaled, P);
            for (std::size_t k = 0; k < out.size(); ++k)
                CHECK(out2[k] == doctest::Approx(out[k]).epsilon(1e-12));
        }
    }
    SUBCASE("all-zero input rejected") {
        CHECK_THROWS_AS(normalize_longterm(std::vector<double>{0.0, 0.0}, 1.0),
                        std::invalid_argument);
    }
}

TEST_CASE("reconstruct_actual is the exact elementwise sum") {
    GeometryConfig geo;
    RandomStream rng(8);
    const LongTermCsi csi = sample_deployment(geo, 3, 4, rng);
    const ChannelRealization chan = sample_channel(csi, 0.4, rng);
    const ComplexMat h = reconstruct_actual(chan);
    for (std::size_t n = 0; n < h.size(); ++n)
        CHECK(h.data()[n] == chan.h_hat.data()[n] + chan.err.data()[n]);

    ChannelRealization zero_err = chan;
    zero_err.err.fill({0.0, 0.0});
    CHECK(reconstruct_actual(zero_err) == zero_err.h_hat);
    ChannelRealization zero_hat = chan;
    zero_hat.h_hat.fill({0.0, 0.0});
    CHECK(reconstruct_actual(zero_hat) == zero_hat.err);
}

TEST_CASE("binary round trips are bit-identical") {
    GeometryConfig geo;
    RandomStream rng(31);
    const LongTermCsi csi = sample_deployment(geo, 5, 3, rng);
    const ChannelRealization chan = sample_channel(csi, 0.25, rng);

    const auto lt_path = temp_file("cfpc_test_longterm.cfds");
    save_longterm(csi, 99, lt_path);
    std::uint64_t seed = 0;
    const LongTermCsi back = load_longterm(lt_path, &seed);
    CHECK(seed == 99);
    CHECK(back.rho == csi.rho);

    const auto ch_path = temp_file("cfpc_test_channel.cfds");
    save_channel(chan, 7, ch_path);
    const ChannelRealization chan_back = load_channel(ch_path, &seed);
    CHECK(seed == 7);
    CHECK(chan_back.h_hat == chan.h_hat);
    CHECK(chan_back.err == chan.err);
    CHECK(chan_back.rho == chan.rho);
    CHECK(chan_back.phi == chan.phi);

    std::filesystem::remove(lt_path);
    std::filesystem::remove(ch_path);
}

TEST_CASE("channel dataset round trip") {
    GeometryConfig geo;
    RandomStream rng(13);
    std::vector<ChannelRealization> channels;
    for (int n = 0; n < 4; ++n) {
        RandomStream srug = rng.substream("s", n);
        const LongTermCsi csi = sample_deployment(geo, 2, 2, srug);
        channels.push_back(sample_channel(csi, 0.1, srug));
    }
    const auto path = temp_file("cfpc_test_dataset.cfds");
    save_channel_dataset(channels, 5, path);
    const auto back = load_channel_dataset(path);
    REQUIRE(back.size() == channels.size());
    for (std::size_t n = 0; n < back.size(); ++n) {
        CHECK(back[n].h_hat == channels[n].h_hat);
        CHECK(back[n].err == channels[n].err);
        CHECK(back[n].rho == channels[n].rho);
    }
    std::filesystem::remove(path);
}

TEST_CASE("json serialization carries the documented fields") {
    GeometryConfig geo;
    RandomStream rng(17);
    const LongTermCsi csi = sample_deployment(geo, 2, 2, rng);
    const ChannelRealization chan = sample_channel(csi, 0.6, rng);
    const std::string lt = longterm_to_json(csi, 4);
    CHECK(lt.find("\"rho\"") != std::string::npos);
    CHECK(lt.find("\"seed\"") != std::string::npos);
    const std::string ch = channel_to_json(chan, 4);
    CHECK(ch.find("\"h_hat_re\"") != std::string::npos);
    CHECK(ch.find("\"err_im\"") != std::string::npos);
    CHECK(ch.find("\"phi\"") != std::string::npos);
}

TEST_CASE("config validation rejects bad parameters") {
    const NetworkConfig zero_m{0, 1, 1.0, 0.0};
    const NetworkConfig big_phi{1, 1, 1.0, 1.5};
    const NetworkConfig bad_p{1, 1, -1.0, 0.0};
    CHECK_THROWS_AS(zero_m.validate(), std::invalid_argument);
    CHECK_THROWS_AS(big_phi.validate(), std::invalid_argument);
    CHECK_THROWS_AS(bad_p.validate(), std::invalid_argument);
    GeometryConfig geo;
    geo.eta = -1.0;
    CHECK_THROWS_AS(geo.validate(), std::invalid_argument);
    const NetworkConfig ok{4, 2, 10.0, 0.3};
    CHECK_NOTHROW(ok.validate());
}
