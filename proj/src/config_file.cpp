#include "rectedit/config_file.hpp"

#include "rectedit/error.hpp"
#include "rectedit/hashing.hpp"

#include <charconv>
#include <sstream>

namespace rectedit {

namespace {

std::string trim(std::string_view s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string_view::npos) {
        return {};
    }
    const auto end = s.find_last_not_of(" \t\r");
    return std::string(s.substr(begin, end - begin + 1));
}

template <typename T>
bool parse_number(const std::string &text, T &out) {
    const char *first = text.data();
    const char *last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

std::vector<std::string> split_list(const std::string &text) {
    std::vector<std::string> items;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) {
        items.push_back(trim(item));
    }
    return items;
}

}  // namespace

KeyValues parse_key_values(std::string_view text) {
    KeyValues values;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    std::vector<std::string> problems;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.resize(hash);
        }
        const std::string stripped = trim(line);
        if (stripped.empty()) {
            continue;
        }
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            problems.push_back("line " + std::to_string(line_no) + ": expected key = value");
            continue;
        }
        std::string key = trim(std::string_view(stripped).substr(0, eq));
        std::string value = trim(std::string_view(stripped).substr(eq + 1));
        if (key.empty()) {
            problems.push_back("line " + std::to_string(line_no) + ": empty key");
            continue;
        }
        if (!values.emplace(key, value).second) {
            problems.push_back("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
        }
    }
    if (!problems.empty()) {
        std::string message = "config: ";
        for (std::size_t i = 0; i < problems.size(); ++i) {
            message += (i ? "; " : "") + problems[i];
        }
        fail(ErrorCode::config, message);
    }
    return values;
}

KeyValues load_key_values(const std::string &path) {
    try {
        return parse_key_values(read_text_file(path));
    } catch (const Error &e) {
        if (e.code() == ErrorCode::unreadable_source) {
            fail(ErrorCode::config, "config: cannot read " + path);
        }
        throw;
    }
}

std::string render_key_values(const KeyValues &values) {
    std::string out;
    for (const auto &[k, v] : values) {
        out += k + " = " + v + "\n";
    }
    return out;
}

const std::string *ConfigReader::lookup(const std::string &key) {
    consumed_.insert(key);
    const auto it = values_.find(key);
    return it == values_.end() ? nullptr : &it->second;
}

void ConfigReader::invalid(const std::string &key, const std::string &why) {
    problems_.push_back(key + ": " + why);
}

double ConfigReader::get_double(const std::string &key, double fallback) {
    const auto *raw = lookup(key);
    if (!raw) {
        return fallback;
    }
    double v = 0;
    if (!parse_number(*raw, v)) {
        invalid(key, "expected a real number, got '" + *raw + "'");
        return fallback;
    }
    return v;
}

std::int64_t ConfigReader::get_int(const std::string &key, std::int64_t fallback) {
    const auto *raw = lookup(key);
    if (!raw) {
        return fallback;
    }
    std::int64_t v = 0;
    if (!parse_number(*raw, v)) {
        invalid(key, "expected an integer, got '" + *raw + "'");
        return fallback;
    }
    return v;
}

std::uint64_t ConfigReader::get_uint(const std::string &key, std::uint64_t fallback) {
    const auto *raw = lookup(key);
    if (!raw) {
        return fallback;
    }
    std::uint64_t v = 0;
    if (!parse_number(*raw, v)) {
        invalid(key, "expected a non-negative integer, got '" + *raw + "'");
        return fallback;
    }
    return v;
}

bool ConfigReader::get_bool(const std::string &key, bool fallback) {
    const auto *raw = lookup(key);
    if (!raw) {
        return fallback;
    }
    if (*raw == "true" || *raw == "1") {
        return true;
    }
    if (*raw == "false" || *raw == "0") {
        return false;
    }
    invalid(key, "expected true or false, got '" + *raw + "'");
    return fallback;
}

std::string ConfigReader::get_string(const std::string &key, const std::string &fallback) {
    const auto *raw = lookup(key);
    return raw ? *raw : fallback;
}

std::vector<double> ConfigReader::get_doubles(const std::string &key, const std::vector<double> &fallback) {
    const auto *raw = lookup(key);
    if (!raw) {
        return fallback;
    }
    std::vector<double> out;
    for (const auto &item : split_list(*raw)) {
        double v = 0;
        if (!parse_number(item, v)) {
            invalid(key, "expected a comma separated list of reals, got '" + *raw + "'");
            return fallback;
        }
        out.push_back(v);
    }
    return out;
}

std::vector<std::int64_t> ConfigReader::get_ints(const std::string &key,
                                                 const std::vector<std::int64_t> &fallback) {
    const auto *raw = lookup(key);
    if (!raw) {
        return fallback;
    }
    std::vector<std::int64_t> out;
    for (const auto &item : split_list(*raw)) {
        std::int64_t v = 0;
        if (!parse_number(item, v)) {
            invalid(key, "expected a comma separated list of integers, got '" + *raw + "'");
            return fallback;
        }
        out.push_back(v);
    }
    return out;
}

void ConfigReader::finish() const {
    std::vector<std::string> all = problems_;
    for (const auto &[key, value] : values_) {
        if (!consumed_.contains(key)) {
            all.push_back(key + ": unknown key");
        }
    }
    if (all.empty()) {
        return;
    }
    std::string message = "invalid config keys: ";
    for (std::size_t i = 0; i < all.size(); ++i) {
        message += (i ? "; " : "") + all[i];
    }
    fail(ErrorCode::config, message);
}

}  // namespace rectedit
