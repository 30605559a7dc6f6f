#include "cfpc/netenv.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace cfpc {

namespace {

constexpr double kMinDistanceM = 1.0; // floor against coincident positions

Point2D sample_disk_point(double radius, RandomStream& rng) {
    // sqrt keeps the density uniform over area, not over radius
    const double r = radius * std::sqrt(rng.uniform());
    const double theta = 2.0 * M_PI * rng.uniform();
    return {r * std::cos(theta), r * std::sin(theta)};
}

} // namespace

void GeometryConfig::validate() const {
    if (radius <= 0.0) throw std::invalid_argument("GeometryConfig: radius must be > 0");
    if (q0 <= 0.0) throw std::invalid_argument("GeometryConfig: q0 must be > 0");
    if (eta <= 0.0) throw std::invalid_argument("GeometryConfig: eta must be > 0");
    if (P0 <= 0.0) throw std::invalid_argument("GeometryConfig: P0 must be > 0");
}

void NetworkConfig::validate() const {
    if (M < 1) throw std::invalid_argument("NetworkConfig: M must be >= 1");
    if (K < 1) throw std::invalid_argument("NetworkConfig: K must be >= 1");
    if (P <= 0.0) throw std::invalid_argument("NetworkConfig: P must be > 0");
    if (phi < 0.0 || phi > 1.0)
        throw std::invalid_argument("NetworkConfig: phi must lie in [0, 1]");
}

double path_loss(const GeometryConfig& geometry, double distance_m) {
    const double q = std::max(distance_m, kMinDistanceM);
    return geometry.P0 * std::pow(q / geometry.q0, -geometry.eta);
}

LongTermCsi sample_deployment(const GeometryConfig& geometry, int M, int K,
                              RandomStream& rng, DeploymentPositions* positions) {
    geometry.validate();
    if (M < 1 || K < 1)
        throw std::invalid_argument("sample_deployment: M and K must be >= 1");

    // Draw order is fixed (APs first, then UEs) so a given stream state
    // always yields the same deployment.
    std::vector<Point2D> aps(M), ues(K);
    for (auto& ap : aps) ap = sample_disk_point(geometry.radius, rng);
    for (auto& ue : ues) ue = sample_disk_point(geometry.radius, rng);

    LongTermCsi csi;
    csi.rho = Tensor2D(M, K);
    for (int i = 0; i < M; ++i) {
        for (int k = 0; k < K; ++k) {
            const double dx = aps[i].x - ues[k].x;
            const double dy = aps[i].y - ues[k].y;
            csi.rho(i, k) = path_loss(geometry, std::hypot(dx, dy));
        }
    }
    if (positions) {
        positions->aps = std::move(aps);
        positions->ues = std::move(ues);
    }
    return csi;
}

ChannelRealization sample_channel(const LongTermCsi& csi, double phi,
                                  RandomStream& rng) {
    if (phi < 0.0 || phi > 1.0)
        throw std::invalid_argument("sample_channel: phi must lie in [0, 1]");
    const int M = csi.M();
    const int K = csi.K();

    ChannelRealization chan;
    chan.h_hat = ComplexMat(M, K);
    chan.err = ComplexMat(M, K);
    chan.rho = csi.rho;
    chan.phi = phi;
    for (int i = 0; i < M; ++i) {
        for (int k = 0; k < K; ++k) {
            const double rho = csi.rho(i, k);
            chan.h_hat(i, k) = rng.cgaussian((1.0 - phi) * rho);
            chan.err(i, k) = rng.cgaussian(phi * rho);
        }
    }
    return chan;
}

std::vector<double> normalize_longterm(std::span<const double> rho_i, double P) {
    if (rho_i.empty())
        throw std::invalid_argument("normalize_longterm: empty input");
    if (P <= 0.0)
        throw std::invalid_argument("normalize_longterm: P must be > 0");

    double denom = 0.0;
    for (double rho : rho_i) {
        if (rho < 0.0)
            throw std::invalid_argument("normalize_longterm: negative path-loss");
        denom += std::sqrt(rho);
    }
    if (denom == 0.0)
        throw std::invalid_argument("normalize_longterm: all-zero input");

    const double scale = std::sqrt(P) / denom;
    std::vector<double> out(rho_i.size());
    for (std::size_t k = 0; k < rho_i.size(); ++k)
        out[k] = scale * std::sqrt(rho_i[k]);
    return out;
}

ComplexMat reconstruct_actual(const ChannelRealization& chan) {
    ComplexMat h = chan.h_hat;
    for (std::size_t n = 0; n < h.size(); ++n)
        h.data()[n] += chan.err.data()[n];
    return h;
}

// --- serialization ----------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'C', 'F', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kKindLongTerm = 1;
constexpr std::uint32_t kKindChannel = 2;

void write_bytes(std::ofstream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), std::streamsize(n));
}

template <typename T>
void write_pod(std::ofstream& out, T v) {
    write_bytes(out, &v, sizeof v);
}

void write_f64_array(std::ofstream& out, std::span<const double> v) {
    write_bytes(out, v.data(), v.size() * sizeof(double));
}

void read_bytes(std::ifstream& in, void* p, std::size_t n) {
    in.read(static_cast<char*>(p), std::streamsize(n));
    if (!in) throw std::runtime_error("dataset file: truncated read");
}

template <typename T>
T read_pod(std::ifstream& in) {
    T v{};
    read_bytes(in, &v, sizeof v);
    return v;
}

std::vector<double> read_f64_array(std::ifstream& in, std::size_t n) {
    std::vector<double> v(n);
    read_bytes(in, v.data(), n * sizeof(double));
    return v;
}

struct Header {
    std::uint32_t kind = 0;
    std::uint32_t M = 0;
    std::uint32_t K = 0;
    double phi = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t count = 1;
};

void write_header(std::ofstream& out, const Header& h) {
    write_bytes(out, kMagic, 4);
    write_pod(out, kVersion);
    write_pod(out, h.kind);
    write_pod(out, h.M);
    write_pod(out, h.K);
    write_pod(out, h.phi);
    write_pod(out, h.seed);
    write_pod(out, h.count);
}

Header read_header(std::ifstream& in, std::uint32_t expected_kind,
                   const std::filesystem::path& path) {
    char magic[4];
    read_bytes(in, magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error(path.string() + ": not a CFDS dataset file");
    if (read_pod<std::uint32_t>(in) != kVersion)
        throw std::runtime_error(path.string() + ": unsupported dataset version");
    Header h;
    h.kind = read_pod<std::uint32_t>(in);
    if (h.kind != expected_kind)
        throw std::runtime_error(path.string() + ": unexpected record kind");
    h.M = read_pod<std::uint32_t>(in);
    h.K = read_pod<std::uint32_t>(in);
    h.phi = read_pod<double>(in);
    h.seed = read_pod<std::uint64_t>(in);
    h.count = read_pod<std::uint64_t>(in);
    return h;
}

void write_channel_record(std::ofstream& out, const ChannelRealization& chan,
                          std::vector<double>& re, std::vector<double>& im);

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
    return in;
}

void split_complex(const ComplexMat& m, std::vector<double>& re,
                   std::vector<double>& im) {
    re.resize(m.size());
    im.resize(m.size());
    for (std::size_t n = 0; n < m.size(); ++n) {
        re[n] = m.data()[n].real();
        im[n] = m.data()[n].imag();
    }
}

void write_channel_record(std::ofstream& out, const ChannelRealization& chan,
                          std::vector<double>& re, std::vector<double>& im) {
    write_f64_array(out, chan.rho.storage());
    split_complex(chan.h_hat, re, im);
    write_f64_array(out, re);
    write_f64_array(out, im);
    split_complex(chan.err, re, im);
    write_f64_array(out, re);
    write_f64_array(out, im);
}

ChannelRealization read_channel_record(std::ifstream& in, const Header& h) {
    const std::size_t n = std::size_t(h.M) * h.K;
    ChannelRealization chan;
    chan.phi = h.phi;
    chan.rho = Tensor2D(h.M, h.K);
    chan.rho.storage() = read_f64_array(in, n);
    chan.h_hat = ComplexMat(h.M, h.K);
    chan.err = ComplexMat(h.M, h.K);
    auto re = read_f64_array(in, n);
    auto im = read_f64_array(in, n);
    for (std::size_t j = 0; j < n; ++j) chan.h_hat.data()[j] = {re[j], im[j]};
    re = read_f64_array(in, n);
    im = read_f64_array(in, n);
    for (std::size_t j = 0; j < n; ++j) chan.err.data()[j] = {re[j], im[j]};
    return chan;
}

} // namespace

void save_longterm(const LongTermCsi& csi, std::uint64_t seed,
                   const std::filesystem::path& path) {
    auto out = open_out(path);
    write_header(out, {kKindLongTerm, std::uint32_t(csi.M()), std::uint32_t(csi.K()),
                       0.0, seed, 1});
    write_f64_array(out, csi.rho.storage());
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

LongTermCsi load_longterm(const std::filesystem::path& path, std::uint64_t* seed) {
    auto in = open_in(path);
    const Header h = read_header(in, kKindLongTerm, path);
    LongTermCsi csi;
    csi.rho = Tensor2D(h.M, h.K);
    csi.rho.storage() = read_f64_array(in, std::size_t(h.M) * h.K);
    if (seed) *seed = h.seed;
    return csi;
}

void save_channel(const ChannelRealization& chan, std::uint64_t seed,
                  const std::filesystem::path& path) {
    auto out = open_out(path);
    write_header(out, {kKindChannel, std::uint32_t(chan.M()), std::uint32_t(chan.K()),
                       chan.phi, seed, 1});
    std::vector<double> re, im;
    write_channel_record(out, chan, re, im);
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

ChannelRealization load_channel(const std::filesystem::path& path,
                                std::uint64_t* seed) {
    auto in = open_in(path);
    const Header h = read_header(in, kKindChannel, path);
    if (seed) *seed = h.seed;
    return read_channel_record(in, h);
}

void save_channel_dataset(std::span<const ChannelRealization> channels,
                          std::uint64_t seed, const std::filesystem::path& path) {
    if (channels.empty())
        throw std::invalid_argument("save_channel_dataset: empty dataset");
    const auto& first = channels.front();
    auto out = open_out(path);
    write_header(out, {kKindChannel, std::uint32_t(first.M()), std::uint32_t(first.K()),
                       first.phi, seed, channels.size()});
    std::vector<double> re, im;
    for (const auto& chan : channels) {
        if (chan.M() != first.M() || chan.K() != first.K())
            throw std::invalid_argument("save_channel_dataset: mixed record shapes");
        write_channel_record(out, chan, re, im);
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<ChannelRealization> load_channel_dataset(const std::filesystem::path& path,
                                                     std::uint64_t* seed) {
    auto in = open_in(path);
    const Header h = read_header(in, kKindChannel, path);
    if (seed) *seed = h.seed;
    std::vector<ChannelRealization> channels;
    channels.reserve(h.count);
    for (std::uint64_t n = 0; n < h.count; ++n)
        channels.push_back(read_channel_record(in, h));
    return channels;
}

std::string longterm_to_json(const LongTermCsi& csi, std::uint64_t seed) {
    nlohmann::json j;
    j["kind"] = "longterm";
    j["M"] = csi.M();
    j["K"] = csi.K();
    j["seed"] = seed;
    j["rho"] = csi.rho.storage();
    return j.dump(2);
}

std::string channel_to_json(const ChannelRealization& chan, std::uint64_t seed) {
    nlohmann::json j;
    j["kind"] = "channel";
    j["M"] = chan.M();
    j["K"] = chan.K();
    j["phi"] = chan.phi;
    j["seed"] = seed;
    j["rho"] = chan.rho.storage();
    std::vector<double> re, im;
    split_complex(chan.h_hat, re, im);
    j["h_hat_re"] = re;
    j["h_hat_im"] = im;
    split_complex(chan.err, re, im);
    j["err_re"] = re;
    j["err_im"] = im;
    return j.dump(2);
}

} // namespace cfpc
