#include "pfesta/util/keyvalue.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace pfesta::util {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_double(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  double v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v)) {
    throw ParseError(what + ": '" + text + "' is not a number");
  }
  return v;
}

std::uint64_t parse_uint(const std::string& text, const std::string& what) {
  std::string t = trim(text);
  std::erase(t, '_');
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw ParseError(what + ": '" + text + "' is not a non-negative integer");
  }
  return v;
}

bool parse_bool(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ParseError(what + ": '" + text + "' is not a boolean");
}

KeyValueDoc KeyValueDoc::parse(const std::string& text, const std::string& source) {
  KeyValueDoc doc;
  doc.source_ = source;
  std::istringstream in(text);
  std::string raw;
  std::vector<std::string> notes;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(raw);
    if (s.empty()) {
      notes.clear();
      continue;
    }
    if (s.front() == '#') {
      notes.push_back(trim(s.substr(1)));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw ParseError(source + ":" + std::to_string(line) + ": expected 'key = value'");
    }
    Entry e{trim(s.substr(0, eq)), trim(s.substr(eq + 1)), std::move(notes), line};
    notes.clear();
    if (e.key.empty()) throw ParseError(source + ":" + std::to_string(line) + ": empty key");
    if (doc.index_.contains(e.key)) {
      throw ParseError(source + ":" + std::to_string(line) + ": duplicate key '" + e.key + "'");
    }
    doc.index_.emplace(e.key, doc.entries_.size());
    doc.entries_.push_back(std::move(e));
  }
  return doc;
}

KeyValueDoc KeyValueDoc::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot read '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path);
}

const Entry& KeyValueDoc::at(const std::string& key) const {
  auto it = index_.find(key);
  if (it == index_.end()) throw ParseError(source_ + ": missing key '" + key + "'");
  return entries_[it->second];
}

double KeyValueDoc::get_double(const std::string& key) const { return parse_double(at(key).value, key); }
std::uint64_t KeyValueDoc::get_uint(const std::string& key) const { return parse_uint(at(key).value, key); }
bool KeyValueDoc::get_bool(const std::string& key) const { return parse_bool(at(key).value, key); }

void KeyValueDoc::set(const std::string& key, const std::string& value) {
  if (auto it = index_.find(key); it != index_.end()) {
    entries_[it->second].value = value;
    return;
  }
  index_.emplace(key, entries_.size());
  entries_.push_back({key, value, {}, 0});
}

}  // namespace pfesta::util
