#ifndef RECLINK_ERRORS_HPP
#define RECLINK_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace reclink {

enum class error_category {
  config,
  data,
  dimension,
  domain,
  numerical,
  constraint,
};

inline const char *category_name(error_category c) {
  switch (c) {
  case error_category::config: return "config";
  case error_category::data: return "data";
  case error_category::dimension: return "dimension";
  case error_category::domain: return "domain";
  case error_category::numerical: return "numerical";
  case error_category::constraint: return "constraint";
  }
  return "unknown";
}

// Process exit code per category; 0 is reserved for success.
inline int exit_code(error_category c) {
  switch (c) {
  case error_category::config: return 2;
  case error_category::data: return 3;
  case error_category::dimension: return 3;
  case error_category::domain: return 4;
  case error_category::numerical: return 4;
  case error_category::constraint: return 5;
  }
  return 1;
}

class error : public std::runtime_error {
public:
  error(error_category c, const std::string &what)
      : std::runtime_error(std::string(category_name(c)) + " error: " + what),
        category_(c) {}

  error_category category() const noexcept { return category_; }

private:
  error_category category_;
};

inline void require(bool cond, error_category c, const std::string &what) {
  if (!cond)
    throw error(c, what);
}

} // namespace reclink

#endif
