#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

namespace domo {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Value function V(x), one entry per state.
template <typename Scalar>
using ValueFunction = Vector<Scalar>;

/// Action-value table Q(x, a), shape n_states x n_actions.
template <typename Scalar>
using QFunction = Matrix<Scalar>;

using Vectord = Vector<double>;
using Matrixd = Matrix<double>;

/// Invalid argument: bad dimensions, out-of-range hyper-parameters.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input outside the domain of an operator (e.g. behavior policy without full support).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A linear solve or an iterate produced a non-finite or inaccurate result.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

enum class TraceKind {
  VTrace,      // c = min(c_bar, rho)
  TreeBackup,  // c = pi(a|x)
  QLambda,     // c = lambda
  PengLambda,  // geometric mixture of n-step operators, no off-policy correction
  TdLambda,    // on-policy TD(lambda): behavior is the target itself, c = lambda
};

/// Trace coefficient family of a multi-step evaluation operator.
///
/// `param` holds c_bar for VTrace and lambda for the lambda families; it is
/// unused by TreeBackup. `rho_bar` only truncates the TD-term ratio of the
/// recursive sampled targets; the exact operators never read it.
struct TraceSpec {
  TraceKind kind = TraceKind::VTrace;
  double param = 1.0;
  std::optional<double> rho_bar;

  static TraceSpec vtrace(double c_bar, std::optional<double> rho_bar = std::nullopt) {
    TraceSpec s{TraceKind::VTrace, c_bar, rho_bar};
    s.validate();
    return s;
  }
  static TraceSpec tree_backup() { return TraceSpec{TraceKind::TreeBackup, 0.0, std::nullopt}; }
  static TraceSpec q_lambda(double lambda) {
    TraceSpec s{TraceKind::QLambda, lambda, std::nullopt};
    s.validate();
    return s;
  }
  static TraceSpec peng_lambda(double lambda) {
    TraceSpec s{TraceKind::PengLambda, lambda, std::nullopt};
    s.validate();
    return s;
  }
  static TraceSpec td_lambda(double lambda) {
    TraceSpec s{TraceKind::TdLambda, lambda, std::nullopt};
    s.validate();
    return s;
  }

  double c_bar() const { return param; }
  double lambda() const { return param; }

  void validate() const {
    switch (kind) {
      case TraceKind::VTrace:
        if (!(param >= 0.0)) throw ParameterError("c_bar must be >= 0");
        if (rho_bar && *rho_bar < param)
          throw ParameterError("rho_bar must be >= c_bar");
        break;
      case TraceKind::TreeBackup:
        break;
      case TraceKind::QLambda:
      case TraceKind::PengLambda:
      case TraceKind::TdLambda:
        if (!(param >= 0.0 && param <= 1.0)) throw ParameterError("lambda must lie in [0, 1]");
        break;
    }
    if (rho_bar && !(*rho_bar >= 0.0)) throw ParameterError("rho_bar must be >= 0");
  }
};

inline std::string to_string(TraceKind kind) {
  switch (kind) {
    case TraceKind::VTrace: return "vtrace";
    case TraceKind::TreeBackup: return "tree_backup";
    case TraceKind::QLambda: return "q_lambda";
    case TraceKind::PengLambda: return "peng_lambda";
    case TraceKind::TdLambda: return "td_lambda";
  }
  return "unknown";
}

inline TraceKind trace_kind_from_string(const std::string& name) {
  if (name == "vtrace") return TraceKind::VTrace;
  if (name == "tree_backup") return TraceKind::TreeBackup;
  if (name == "q_lambda") return TraceKind::QLambda;
  if (name == "peng_lambda") return TraceKind::PengLambda;
  if (name == "td_lambda") return TraceKind::TdLambda;
  throw ParameterError("unknown trace kind '" + name + "'");
}

}  // namespace domo
