#pragma once

#include "sarnet/error.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace sarnet {

// Little-endian binary container primitives for model files. Doubles are
// stored as raw IEEE-754 bits so round-trips are bit-exact.
class BinWriter {
public:
    explicit BinWriter(const std::filesystem::path& path) : out_(path, std::ios::binary) {
        if (!out_) raise(Errc::IoFailure, "cannot write " + path.string());
    }

    void magic(const char tag[8]) { out_.write(tag, 8); }

    void u32(std::uint32_t v) { put_le(v); }
    void u64(std::uint64_t v) { put_le(v); }
    void i32(std::int32_t v) { put_le(static_cast<std::uint32_t>(v)); }

    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof(bits));
        put_le(bits);
    }

    void f64_array(const std::vector<double>& vs) {
        u64(vs.size());
        for (double v : vs) f64(v);
    }

    void str(const std::string& s) {
        u64(s.size());
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }

    void finish(const std::filesystem::path& path) {
        out_.flush();
        if (!out_) raise(Errc::IoFailure, "write failed for " + path.string());
    }

private:
    template <typename T>
    void put_le(T v) {
        unsigned char buf[sizeof(T)];
        for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
        out_.write(reinterpret_cast<const char*>(buf), sizeof(T));
    }

    std::ofstream out_;
};

class BinReader {
public:
    explicit BinReader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path.string()) {
        if (!in_) raise(Errc::IoFailure, "cannot open " + path_);
    }

    void expect_magic(const char tag[8]) {
        char buf[8];
        read(buf, 8);
        if (std::memcmp(buf, tag, 8) != 0) raise(Errc::IoFailure, "bad file magic in " + path_);
    }

    std::uint32_t u32() { return get_le<std::uint32_t>(); }
    std::uint64_t u64() { return get_le<std::uint64_t>(); }
    std::int32_t i32() { return static_cast<std::int32_t>(get_le<std::uint32_t>()); }

    double f64() {
        const std::uint64_t bits = get_le<std::uint64_t>();
        double v;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }

    std::vector<double> f64_array() {
        const std::uint64_t n = u64();
        std::vector<double> vs(n);
        for (auto& v : vs) v = f64();
        return vs;
    }

    std::string str() {
        const std::uint64_t n = u64();
        std::string s(n, '\0');
        read(s.data(), n);
        return s;
    }

private:
    void read(char* dst, std::size_t n) {
        in_.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            raise(Errc::IoFailure, "truncated file " + path_);
    }

    template <typename T>
    T get_le() {
        unsigned char buf[sizeof(T)];
        read(reinterpret_cast<char*>(buf), sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
        return v;
    }

    std::ifstream in_;
    std::string path_;
};

} // namespace sarnet
