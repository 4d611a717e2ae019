#pragma once

#include "psdo/quantize.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace psdo {

/// Reading or writing a file failed.
class IoError : public Error {
public:
    using Error::Error;
};

/// File contents are not a valid operator container.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Binary operator container:
///   "PSDO" | u32 version | geometry descriptor | u64 rows | u64 cols | rows*cols (f64 re, f64 im), row-major.
/// Descriptor: u32 kind (0 circle, 1 cone, 2 edge), u32 n_x, u32 n_t, u32 n_omega, u32 base (0 point,
/// 1 circle), u32 mode (0 periodic, 1 interval), u32 q, f64 half_length, f64 v. All little-endian.
namespace container {

inline constexpr char magic[4] = {'P', 'S', 'D', 'O'};
inline constexpr std::uint32_t version = 1;

namespace detail {

template <class T>
void put(std::string& out, T value) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double d) { put(out, std::bit_cast<std::uint64_t>(d)); }

class Reader {
public:
    explicit Reader(const std::string& bytes) : b_(bytes) {}

    template <class T>
    T get() {
        static_assert(std::is_integral_v<T>);
        need(sizeof(T));
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= std::uint64_t(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
        pos_ += sizeof(T);
        return static_cast<T>(v);
    }
    double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
    void expect(const char* bytes, std::size_t n) {
        need(n);
        if (std::memcmp(b_.data() + pos_, bytes, n) != 0) throw FormatError("not an operator container (bad magic)");
        pos_ += n;
    }
    bool done() const { return pos_ == b_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > b_.size()) throw FormatError("operator container is truncated");
    }
    const std::string& b_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode(const DiscretizedOperator& A) {
    const Geometry& g = A.geometry;
    std::string out(magic, 4);
    detail::put<std::uint32_t>(out, version);
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(g.kind()));
    detail::put<std::uint32_t>(out, g.n_x());
    detail::put<std::uint32_t>(out, g.n_t());
    detail::put<std::uint32_t>(out, g.n_omega());
    detail::put<std::uint32_t>(out, g.has_cone() && g.base() == BaseKind::circle ? 1 : 0);
    detail::put<std::uint32_t>(out, g.has_cone() && g.mode() == BoundaryMode::interval ? 1 : 0);
    detail::put<std::uint32_t>(out, g.q());
    detail::put_f64(out, g.has_cone() ? g.half_length() : 0.0);
    detail::put_f64(out, A.v);
    detail::put<std::uint64_t>(out, A.matrix.rows());
    detail::put<std::uint64_t>(out, A.matrix.cols());
    for (Eigen::Index i = 0; i < A.matrix.rows(); ++i)
        for (Eigen::Index j = 0; j < A.matrix.cols(); ++j) {
            detail::put_f64(out, A.matrix(i, j).real());
            detail::put_f64(out, A.matrix(i, j).imag());
        }
    return out;
}

inline DiscretizedOperator decode(const std::string& bytes) {
    detail::Reader in(bytes);
    in.expect(magic, 4);
    if (std::uint32_t ver = in.get<std::uint32_t>(); ver != version) throw FormatError("unsupported container version " + std::to_string(ver));
    auto kind = in.get<std::uint32_t>();
    int n_x = static_cast<int>(in.get<std::uint32_t>()), n_t = static_cast<int>(in.get<std::uint32_t>());
    int n_omega = static_cast<int>(in.get<std::uint32_t>());
    auto base = in.get<std::uint32_t>(), mode = in.get<std::uint32_t>();
    int q = static_cast<int>(in.get<std::uint32_t>());
    double half = in.get_f64(), v = in.get_f64();
    if (kind > 2 || base > 1 || mode > 1) throw FormatError("invalid geometry descriptor");
    ConeParams cp{base ? BaseKind::circle : BaseKind::point, n_omega, half, n_t, mode ? BoundaryMode::interval : BoundaryMode::periodic};
    Geometry g = kind == 0 ? Geometry::circle(n_x, q) : kind == 1 ? Geometry::cone(cp, q) : Geometry::edge(n_x, cp, q);
    auto rows = in.get<std::uint64_t>(), cols = in.get<std::uint64_t>();
    if (rows != std::uint64_t(g.dim()) || cols != std::uint64_t(g.dim())) throw FormatError("matrix shape does not match the geometry");
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            double re = in.get_f64();
            m(i, j) = {re, in.get_f64()};
        }
    if (!in.done()) throw FormatError("trailing bytes after the operator matrix");
    return {g, v, std::move(m)};
}

}  // namespace container

/// Writes `bytes` to `path` atomically: a temporary file in the same directory, then rename.
inline void write_atomic(const std::filesystem::path& path, const std::string& bytes) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw IoError("write to " + tmp.string() + " failed");
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot move " + tmp.string() + " to " + path.string());
    }
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_container(const std::filesystem::path& path, const DiscretizedOperator& A) { write_atomic(path, container::encode(A)); }
inline DiscretizedOperator read_container(const std::filesystem::path& path) { return container::decode(read_file(path)); }

}  // namespace psdo
