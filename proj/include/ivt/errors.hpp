#ifndef IVT_ERRORS_HPP
#define IVT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace ivt {

// Malformed or non-normalized input. The CLI maps this to exit code 1.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Domain refusals. The CLI maps every subclass to exit code 2.
class DomainRefusal : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An atom (or a degenerate single-bin conditional) prevents an exact
// equal-measure split.
class AtomicityError : public DomainRefusal {
 public:
  using DomainRefusal::DomainRefusal;
};

// A discrete law admits no one-to-one generator. Carries the violating
// support point and the excess mass that is forced onto it.
class FeasibilityRefusal : public DomainRefusal {
 public:
  FeasibilityRefusal(const std::string& what, std::size_t x_index, double excess)
      : DomainRefusal(what), x_index_(x_index), excess_(excess) {}

  std::size_t x_index() const { return x_index_; }
  double excess() const { return excess_; }

 private:
  std::size_t x_index_;
  double excess_;
};

class NonInvertibleError : public DomainRefusal {
 public:
  using DomainRefusal::DomainRefusal;
};

class DegenerateGridError : public DomainRefusal {
 public:
  using DomainRefusal::DomainRefusal;
};

class MarginalMismatch : public DomainRefusal {
 public:
  using DomainRefusal::DomainRefusal;
};

}  // namespace ivt

#endif  // IVT_ERRORS_HPP
