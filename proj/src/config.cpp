#include "h3gnn/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace h3gnn {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

KeyValue KeyValue::parse_string(const std::string& text, const std::string& origin) {
    KeyValue kv;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ParseError(origin + ":" + std::to_string(lineno) + ": unterminated section");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError(origin + ":" + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ParseError(origin + ":" + std::to_string(lineno) + ": empty key");
        if (!section.empty()) key = section + "." + key;
        kv.set(key, value);
    }
    return kv;
}

KeyValue KeyValue::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IntegrityError("cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str(), path);
}

bool KeyValue::has(const std::string& key) const { return find(key).has_value(); }

std::optional<std::string> KeyValue::find(const std::string& key) const {
    for (const auto& [k, v] : items_)
        if (k == key) return v;
    return std::nullopt;
}

std::string KeyValue::get(const std::string& key) const {
    auto v = find(key);
    if (!v) throw ArgumentError("missing config key: " + key);
    return *v;
}

std::string KeyValue::get_or(const std::string& key, const std::string& fallback) const {
    auto v = find(key);
    return v ? *v : fallback;
}

double KeyValue::get_double(const std::string& key) const {
    const std::string v = get(key);
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ParseError("config key " + key + ": not a number: '" + v + "'");
    }
}

int KeyValue::get_int(const std::string& key) const {
    return int(get_int64(key));
}

std::int64_t KeyValue::get_int64(const std::string& key) const {
    const std::string v = get(key);
    try {
        std::size_t pos = 0;
        const std::int64_t d = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ParseError("config key " + key + ": not an integer: '" + v + "'");
    }
}

bool KeyValue::get_bool(const std::string& key) const {
    std::string v = get(key);
    std::transform(v.begin(), v.end(), v.begin(), ::tolower);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ParseError("config key " + key + ": not a boolean: '" + v + "'");
}

void KeyValue::set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : items_) {
        if (k == key) {
            v = value;
            return;
        }
    }
    items_.emplace_back(key, value);
}

void KeyValue::set_double(const std::string& key, double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    set(key, buf);
}

void KeyValue::set_int(const std::string& key, std::int64_t value) {
    set(key, std::to_string(value));
}

void KeyValue::set_bool(const std::string& key, bool value) { set(key, value ? "true" : "false"); }

void KeyValue::merge(const KeyValue& overrides) {
    for (const auto& [k, v] : overrides.items_) set(k, v);
}

std::string KeyValue::to_string() const {
    // re-group flattened keys under their sections (first-appearance order,
    // section-less keys first)
    std::vector<std::string> sections;
    auto section_of = [](const std::string& k) {
        const auto dot = k.find('.');
        return dot == std::string::npos ? std::string() : k.substr(0, dot);
    };
    for (const auto& [k, v] : items_) {
        const std::string sec = section_of(k);
        if (std::find(sections.begin(), sections.end(), sec) == sections.end())
            sections.push_back(sec);
    }
    std::stable_sort(sections.begin(), sections.end(),
                     [](const std::string& a, const std::string& b) {
                         return a.empty() && !b.empty();
                     });
    std::string out;
    for (const auto& sec : sections) {
        if (!sec.empty()) {
            if (!out.empty()) out += "\n";
            out += "[" + sec + "]\n";
        }
        for (const auto& [k, v] : items_) {
            if (section_of(k) != sec) continue;
            const std::string name = sec.empty() ? k : k.substr(sec.size() + 1);
            out += name + " = " + v + "\n";
        }
    }
    return out;
}

void KeyValue::write_file(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw StateError("cannot write " + path);
    out << to_string();
}

}  // namespace h3gnn
