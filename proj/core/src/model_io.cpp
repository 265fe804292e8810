#include <cstring>
#include <fstream>
#include <sstream>

#include "covar/errors.hpp"
#include "covar/rng.hpp"
#include "covar/surface.hpp"

namespace covar {

// Artifact layout (little-endian):
//   bytes 0..3   magic "CVSF"
//   u32          format version (currently 1)
//   u8           family
//   u64          payload size in bytes
//   u64          FNV-1a of the payload
//   payload      standardizer, metadata, family state (doubles bit-copied)

namespace {

constexpr char kMagic[4] = {'C', 'V', 'S', 'F'};
constexpr std::uint32_t kVersion = 1;

class Writer {
public:
    void u8(std::uint8_t v) { put(&v, 1); }
    void u32(std::uint32_t v) { put(&v, 4); }
    void u64(std::uint64_t v) { put(&v, 8); }
    void f64(double v) { put(&v, 8); }
    void vec(const Eigen::VectorXd& v) {
        u64(static_cast<std::uint64_t>(v.size()));
        put(v.data(), sizeof(double) * static_cast<std::size_t>(v.size()));
    }
    void mat(const Eigen::MatrixXd& m) {
        u64(static_cast<std::uint64_t>(m.rows()));
        u64(static_cast<std::uint64_t>(m.cols()));
        put(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
    }
    void str(const std::string& s) {
        u64(s.size());
        put(s.data(), s.size());
    }
    std::string take() { return std::move(buf_); }

private:
    void put(const void* p, std::size_t n) {
        buf_.append(static_cast<const char*>(p), n);
    }
    std::string buf_;
};

class Reader {
public:
    Reader(const char* data, std::size_t size) : p_(data), end_(data + size) {}
    std::uint8_t u8() { return get<std::uint8_t>(); }
    std::uint32_t u32() { return get<std::uint32_t>(); }
    std::uint64_t u64() { return get<std::uint64_t>(); }
    double f64() { return get<double>(); }
    Eigen::VectorXd vec() {
        const std::uint64_t n = u64();
        Eigen::VectorXd v(static_cast<long>(n));
        raw(v.data(), sizeof(double) * n);
        return v;
    }
    Eigen::MatrixXd mat() {
        const std::uint64_t r = u64();
        const std::uint64_t c = u64();
        Eigen::MatrixXd m(static_cast<long>(r), static_cast<long>(c));
        raw(m.data(), sizeof(double) * r * c);
        return m;
    }
    std::string str() {
        const std::uint64_t n = u64();
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }
    bool exhausted() const { return p_ == end_; }

private:
    template <typename T>
    T get() {
        T v;
        raw(&v, sizeof(T));
        return v;
    }
    void raw(void* out, std::size_t n) {
        if (static_cast<std::size_t>(end_ - p_) < n)
            throw CorruptArtifact("model artifact is truncated");
        std::memcpy(out, p_, n);
        p_ += n;
    }
    const char* p_;
    const char* end_;
};

void write_standardizer(Writer& w, const Standardizer& s) {
    w.vec(s.loc);
    w.vec(s.scale);
    w.u64(s.constant_col.size());
    for (auto c : s.constant_col) w.u8(c);
}

Standardizer read_standardizer(Reader& r) {
    Standardizer s;
    s.loc = r.vec();
    s.scale = r.vec();
    const std::uint64_t n = r.u64();
    s.constant_col.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) s.constant_col[i] = r.u8();
    return s;
}

}  // namespace

std::string serialize_model(const SurfaceModel& model) {
    Writer w;
    write_standardizer(w, model.standardization());
    w.f64(model.metadata().fit_seconds);
    w.u64(static_cast<std::uint64_t>(model.metadata().sample_size));
    w.str(model.metadata().hyperparams);

    switch (model.family()) {
        case SmootherFamily::kLinear: {
            const LinearState& s = *model.linear_state();
            w.u8(s.basis.intercept ? 1 : 0);
            w.u32(static_cast<std::uint32_t>(s.basis.degree));
            w.u64(s.basis.hinges.size());
            for (const auto& [dim, knot] : s.basis.hinges) {
                w.u32(static_cast<std::uint32_t>(dim));
                w.f64(knot);
            }
            w.vec(s.coeffs);
            break;
        }
        case SmootherFamily::kKernelSmoothing: {
            const KernelSmootherState& s = *model.kernel_state();
            w.f64(s.bandwidth);
            w.mat(s.train);
            w.vec(s.targets);
            break;
        }
        case SmootherFamily::kKrr: {
            const KrrState& s = *model.krr_state();
            w.u8(static_cast<std::uint8_t>(s.kernel.type));
            w.f64(s.kernel.length_scale);
            w.f64(s.kernel.matern_nu);
            w.f64(s.lambda);
            w.mat(s.train);
            w.vec(s.weights);
            break;
        }
        case SmootherFamily::kMlp: {
            const MlpState& s = *model.mlp_state();
            w.u32(static_cast<std::uint32_t>(s.arch.layers));
            w.u32(static_cast<std::uint32_t>(s.arch.width));
            w.f64(s.arch.weight_bound);
            w.f64(s.target_loc);
            w.f64(s.target_scale);
            w.u64(s.w.size());
            for (std::size_t l = 0; l < s.w.size(); ++l) {
                w.mat(s.w[l]);
                w.vec(s.b[l]);
            }
            break;
        }
    }

    const std::string payload = w.take();
    Writer header;
    header.u8(kMagic[0]);
    header.u8(kMagic[1]);
    header.u8(kMagic[2]);
    header.u8(kMagic[3]);
    header.u32(kVersion);
    header.u8(static_cast<std::uint8_t>(model.family()));
    header.u64(payload.size());
    header.u64(hash_bytes(payload.data(), payload.size()));
    return header.take() + payload;
}

SurfaceModel deserialize_model(const std::string& bytes) {
    if (bytes.size() < 25) throw CorruptArtifact("model artifact is too short");
    Reader header(bytes.data(), 25);
    char magic[4];
    for (int i = 0; i < 4; ++i) magic[i] = static_cast<char>(header.u8());
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw CorruptArtifact("bad magic; not a surface-model artifact");
    const std::uint32_t version = header.u32();
    if (version != kVersion)
        throw VersionMismatch("artifact format version " + std::to_string(version) +
                              " is not supported (expected " + std::to_string(kVersion) + ")");
    const auto family = static_cast<SmootherFamily>(header.u8());
    const std::uint64_t payload_size = header.u64();
    const std::uint64_t checksum = header.u64();
    if (bytes.size() != 25 + payload_size)
        throw CorruptArtifact("artifact payload size mismatch");
    if (hash_bytes(bytes.data() + 25, payload_size) != checksum)
        throw CorruptArtifact("artifact checksum mismatch");

    Reader r(bytes.data() + 25, payload_size);
    Standardizer st = read_standardizer(r);
    SurfaceModel::Metadata meta;
    meta.fit_seconds = r.f64();
    meta.sample_size = static_cast<long>(r.u64());
    meta.hyperparams = r.str();

    switch (family) {
        case SmootherFamily::kLinear: {
            LinearState s;
            s.basis.intercept = r.u8() != 0;
            s.basis.degree = static_cast<int>(r.u32());
            const std::uint64_t nh = r.u64();
            for (std::uint64_t i = 0; i < nh; ++i) {
                const int dim = static_cast<int>(r.u32());
                const double knot = r.f64();
                s.basis.hinges.emplace_back(dim, knot);
            }
            s.coeffs = r.vec();
            return SurfaceModel(std::move(st), std::move(s), std::move(meta));
        }
        case SmootherFamily::kKernelSmoothing: {
            KernelSmootherState s;
            s.bandwidth = r.f64();
            s.train = r.mat();
            s.targets = r.vec();
            return SurfaceModel(std::move(st), std::move(s), std::move(meta));
        }
        case SmootherFamily::kKrr: {
            KrrState s;
            s.kernel.type = static_cast<KernelSpec::Type>(r.u8());
            s.kernel.length_scale = r.f64();
            s.kernel.matern_nu = r.f64();
            s.lambda = r.f64();
            s.train = r.mat();
            s.weights = r.vec();
            return SurfaceModel(std::move(st), std::move(s), std::move(meta));
        }
        case SmootherFamily::kMlp: {
            MlpState s;
            s.arch.layers = static_cast<int>(r.u32());
            s.arch.width = static_cast<int>(r.u32());
            s.arch.weight_bound = r.f64();
            s.target_loc = r.f64();
            s.target_scale = r.f64();
            const std::uint64_t nl = r.u64();
            for (std::uint64_t l = 0; l < nl; ++l) {
                s.w.push_back(r.mat());
                s.b.push_back(r.vec());
            }
            return SurfaceModel(std::move(st), std::move(s), std::move(meta));
        }
    }
    throw CorruptArtifact("unknown family byte in artifact");
}

void save_model(const SurfaceModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    const std::string bytes = serialize_model(model);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing model artifact to '" + path + "'");
}

SurfaceModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model artifact '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return deserialize_model(buf.str());
}

}  // namespace covar
