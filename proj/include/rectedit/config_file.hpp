#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace rectedit {

/// Flat `key = value` document; `#` starts a comment, blank lines ignored.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(std::string_view text);
KeyValues load_key_values(const std::string &path);
std::string render_key_values(const KeyValues &values);

/// Typed, validating view over a KeyValues document.
///
/// Every getter records problems instead of throwing; finish() throws a single
/// ErrorCode::config error listing every invalid and every unknown key.
class ConfigReader {
public:
    explicit ConfigReader(KeyValues values) : values_(std::move(values)) {}

    double get_double(const std::string &key, double fallback);
    std::int64_t get_int(const std::string &key, std::int64_t fallback);
    std::uint64_t get_uint(const std::string &key, std::uint64_t fallback);
    bool get_bool(const std::string &key, bool fallback);
    std::string get_string(const std::string &key, const std::string &fallback);
    std::vector<double> get_doubles(const std::string &key, const std::vector<double> &fallback);
    std::vector<std::int64_t> get_ints(const std::string &key, const std::vector<std::int64_t> &fallback);

    /// Records a semantic violation against `key`.
    void invalid(const std::string &key, const std::string &why);

    void finish() const;

private:
    const std::string *lookup(const std::string &key);

    KeyValues values_;
    std::set<std::string> consumed_;
    std::vector<std::string> problems_;
};

}  // namespace rectedit
