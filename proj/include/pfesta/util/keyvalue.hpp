#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

// "key = value" documents. '#' starts a comment line; comment lines directly
// above a key are kept as that key's notes. Blank lines reset the pending notes.
namespace pfesta::util {

class ParseError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Entry {
  std::string key;
  std::string value;
  std::vector<std::string> notes;
  int line = 0;
};

class KeyValueDoc {
 public:
  static KeyValueDoc parse(const std::string& text, const std::string& source = "<input>");
  static KeyValueDoc load(const std::string& path);

  const std::vector<Entry>& entries() const { return entries_; }
  bool contains(const std::string& key) const { return index_.contains(key); }
  const Entry& at(const std::string& key) const;
  const std::string& source() const { return source_; }

  std::string get_string(const std::string& key) const { return at(key).value; }
  double get_double(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  void set(const std::string& key, const std::string& value);

 private:
  std::string source_;
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

double parse_double(const std::string& text, const std::string& what);
std::uint64_t parse_uint(const std::string& text, const std::string& what);
bool parse_bool(const std::string& text, const std::string& what);
std::string trim(const std::string& s);
std::vector<std::string> split_list(const std::string& s, char sep = ',');

}  // namespace pfesta::util
