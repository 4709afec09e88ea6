#pragma once

#include <optional>
#include <string>
#include <vector>

#include "h3gnn/errors.hpp"

namespace h3gnn {

// Ordered key-value document: `key = value` lines grouped under optional
// `[section]` headers; '#' starts a comment. Keys are exposed flattened as
// "section.key". Used for run configs and dataset manifests.
class KeyValue {
  public:
    static KeyValue parse_string(const std::string& text, const std::string& origin = "<string>");
    static KeyValue parse_file(const std::string& path);

    bool has(const std::string& key) const;
    std::optional<std::string> find(const std::string& key) const;
    std::string get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    int get_int(const std::string& key) const;
    std::int64_t get_int64(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    void set(const std::string& key, const std::string& value);
    void set_double(const std::string& key, double value);
    void set_int(const std::string& key, std::int64_t value);
    void set_bool(const std::string& key, bool value);
    void merge(const KeyValue& overrides);  // overrides win

    const std::vector<std::pair<std::string, std::string>>& items() const { return items_; }
    std::string to_string() const;
    void write_file(const std::string& path) const;

  private:
    std::vector<std::pair<std::string, std::string>> items_;  // insertion-ordered
};

}  // namespace h3gnn
