#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rectedit {

/// Incremental SHA-256 (OpenSSL EVP) producing lowercase hex digests.
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256 &) = delete;
    Sha256 &operator=(const Sha256 &) = delete;

    Sha256 &update(std::span<const std::uint8_t> bytes);
    Sha256 &update(std::string_view text);
    /// Length-prefixed field, so that ("ab","c") and ("a","bc") hash differently.
    Sha256 &field(std::string_view text);
    std::string hex_digest();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

std::string sha256_hex(std::string_view text);
std::string sha256_hex(std::span<const std::uint8_t> bytes);

std::uint64_t fnv1a64(std::string_view text) noexcept;

/// Splits one root seed into independent per-subsystem streams by label.
std::uint64_t derive_seed(std::uint64_t root, std::string_view label, std::uint64_t index = 0) noexcept;

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

std::vector<std::uint8_t> read_file_bytes(const std::string &path);
void write_file_bytes(const std::string &path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::string &path, std::string_view text);
std::string read_text_file(const std::string &path);

}  // namespace rectedit
