#pragma once

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "cellmorph/error.hpp"

namespace cellmorph {

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
        if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1)
            throw ProcessingError("hash", "SHA-256 initialisation failed");
    }

    void update(const void* data, std::size_t n) {
        if (EVP_DigestUpdate(ctx_.get(), data, n) != 1) throw ProcessingError("hash", "SHA-256 update failed");
    }
    void update(std::string_view s) { update(s.data(), s.size()); }

    std::string hex() {
        std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
        unsigned int len = 0;
        if (EVP_DigestFinal_ex(ctx_.get(), md.data(), &len) != 1) throw ProcessingError("hash", "SHA-256 final failed");
        std::string out;
        char byte[3];
        for (unsigned int i = 0; i < len; ++i) {
            std::snprintf(byte, sizeof byte, "%02x", md[i]);
            out += byte;
        }
        return out;
    }

private:
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

inline std::string sha256_hex(std::string_view data) {
    Sha256 h;
    h.update(data);
    return h.hex();
}

inline std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("hash", "cannot open for hashing: " + path.string());
    Sha256 h;
    std::array<char, 1 << 16> buf;
    while (in) {
        in.read(buf.data(), buf.size());
        h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    return h.hex();
}

// Hash of a file, or of every regular file under a directory in sorted
// relative-path order.
inline std::string sha256_path(const std::filesystem::path& path) {
    if (!std::filesystem::is_directory(path)) return sha256_file(path);
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(path))
        if (e.is_regular_file()) files.push_back(std::filesystem::relative(e.path(), path));
    std::sort(files.begin(), files.end());
    Sha256 h;
    for (const auto& f : files) {
        h.update(f.generic_string());
        h.update("\n");
        h.update(sha256_file(path / f));
        h.update("\n");
    }
    return h.hex();
}

}  // namespace cellmorph
