#ifndef CAUSALPOSE_KVCONFIG_HPP
#define CAUSALPOSE_KVCONFIG_HPP

#include <map>
#include <string>
#include <vector>

namespace causalpose {

// Line-oriented `key = value` files. '#' starts a comment, blank lines are
// skipped, keys may repeat (edge lists etc). Values keep their raw text and
// are converted on access.
class KvConfig {
 public:
  static KvConfig parse_file(const std::string& path);
  static KvConfig parse_text(const std::string& text, const std::string& origin = "<text>");

  bool has(const std::string& key) const;
  int count(const std::string& key) const;

  std::string get_str(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  int64_t get_int(const std::string& key) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<int> get_ints(const std::string& key) const;
  std::vector<std::string> get_tokens(const std::string& key) const;

  // every value recorded under a repeated key, in file order
  std::vector<std::string> get_all(const std::string& key) const;

  std::vector<std::string> keys() const;  // unique keys in first-seen order
  void set(const std::string& key, const std::string& value);  // replaces all
  std::string serialize() const;

 private:
  const std::string& require(const std::string& key) const;

  std::vector<std::pair<std::string, std::string>> entries_;
  std::string origin_;
};

}  // namespace causalpose

#endif
