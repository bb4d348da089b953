#ifndef BUBBLETRACK_ERRORS_HPP
#define BUBBLETRACK_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace bubbletrack {

// Two families: a violated modeling assumption (bad input geometry, bands,
// configs) and a numerical failure (no convergence, ill-conditioning).
enum class ErrorFamily { assumption, numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorFamily family, std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), family_(family), kind_(std::move(kind)) {}

  ErrorFamily family() const { return family_; }
  const std::string& kind() const { return kind_; }
  const std::string& stage() const { return stage_; }
  void set_stage(std::string s) { stage_ = std::move(s); }

 private:
  ErrorFamily family_;
  std::string kind_;
  std::string stage_;
};

inline Error assumption_error(const std::string& kind, const std::string& what) {
  return Error(ErrorFamily::assumption, kind, what);
}
inline Error numerical_error(const std::string& kind, const std::string& what) {
  return Error(ErrorFamily::numerical, kind, what);
}

}  // namespace bubbletrack

#endif
