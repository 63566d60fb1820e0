#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dr2 {

// Plain-text key/value document with [section] headers. Used for schedule
// serialization, checkpoint manifests and run manifests. Insertion order is
// preserved so written documents are stable.
class KeyValueDoc {
 public:
  void set(const std::string& section, const std::string& key,
           const std::string& value) {
    auto& sec = section_ref(section);
    for (auto& kv : sec.entries) {
      if (kv.first == key) {
        kv.second = value;
        return;
      }
    }
    sec.entries.emplace_back(key, value);
  }

  void set(const std::string& section, const std::string& key, double value) {
    std::ostringstream os;
    os.precision(17);
    os << value;
    set(section, key, os.str());
  }

  void set(const std::string& section, const std::string& key, int value) {
    set(section, key, std::to_string(value));
  }

  void set(const std::string& section, const std::string& key,
           std::uint64_t value) {
    set(section, key, std::to_string(value));
  }

  bool has(const std::string& section, const std::string& key) const {
    const Section* sec = find_section(section);
    if (!sec) return false;
    for (const auto& kv : sec->entries)
      if (kv.first == key) return true;
    return false;
  }

  std::string get(const std::string& section, const std::string& key) const {
    const Section* sec = find_section(section);
    if (sec)
      for (const auto& kv : sec->entries)
        if (kv.first == key) return kv.second;
    throw std::runtime_error("KeyValueDoc: missing key [" + section + "] " +
                             key);
  }

  std::string get_or(const std::string& section, const std::string& key,
                     const std::string& fallback) const {
    return has(section, key) ? get(section, key) : fallback;
  }

  double get_double(const std::string& section, const std::string& key) const {
    return std::stod(get(section, key));
  }

  int get_int(const std::string& section, const std::string& key) const {
    return std::stoi(get(section, key));
  }

  std::uint64_t get_u64(const std::string& section,
                        const std::string& key) const {
    return std::stoull(get(section, key));
  }

  std::vector<std::string> sections() const {
    std::vector<std::string> names;
    for (const auto& s : sections_) names.push_back(s.name);
    return names;
  }

  std::vector<std::pair<std::string, std::string>> entries(
      const std::string& section) const {
    const Section* sec = find_section(section);
    return sec ? sec->entries
               : std::vector<std::pair<std::string, std::string>>{};
  }

  std::string to_string() const {
    std::ostringstream os;
    for (const auto& sec : sections_) {
      os << "[" << sec.name << "]\n";
      for (const auto& kv : sec.entries)
        os << kv.first << " = " << kv.second << "\n";
      os << "\n";
    }
    return os.str();
  }

  static KeyValueDoc from_string(const std::string& text) {
    KeyValueDoc doc;
    std::istringstream is(text);
    std::string line, section;
    while (std::getline(is, line)) {
      const std::string t = trim(line);
      if (t.empty() || t[0] == '#' || t[0] == ';') continue;
      if (t.front() == '[' && t.back() == ']') {
        section = trim(t.substr(1, t.size() - 2));
        doc.section_ref(section);
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error("KeyValueDoc: malformed line: " + line);
      doc.set(section, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return doc;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out)
      throw std::runtime_error("KeyValueDoc: cannot write " + path);
    out << to_string();
  }

  static KeyValueDoc load(const std::string& path) {
    std::ifstream in(path);
    if (!in)
      throw std::runtime_error("KeyValueDoc: cannot read " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return from_string(os.str());
  }

 private:
  struct Section {
    std::string name;
    std::vector<std::pair<std::string, std::string>> entries;
  };

  static std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  Section& section_ref(const std::string& name) {
    for (auto& s : sections_)
      if (s.name == name) return s;
    sections_.push_back({name, {}});
    return sections_.back();
  }

  const Section* find_section(const std::string& name) const {
    for (const auto& s : sections_)
      if (s.name == name) return &s;
    return nullptr;
  }

  std::vector<Section> sections_;
};

}  // namespace dr2
