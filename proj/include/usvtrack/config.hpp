#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace usvtrack::cfg {

inline constexpr int kConfigFormatVersion = 1;

// key = value text files; '#' starts a comment. Commands declare their known
// keys so typos fail loudly instead of being ignored.
class Config {
 public:
  Config() = default;
  static Config load(const std::string& path);
  static Config from_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get_str(const std::string& key, const std::string& def) const;
  double get_double(const std::string& key, double def) const;
  int get_int(const std::string& key, int def) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t def) const;
  bool get_bool(const std::string& key, bool def) const;

  // throws listing any key not in `known`
  void require_known(const std::vector<std::string>& known) const;

 private:
  std::map<std::string, std::string> values_;
  std::string origin_;
};

// resolved-config echo written into every run directory
void write_resolved_config(const std::string& path,
                           const std::vector<std::pair<std::string, std::string>>& entries);

std::string format_double(double v);

}  // namespace usvtrack::cfg
