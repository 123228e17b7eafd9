#pragma once

#include <stdexcept>
#include <string>

namespace leafdec {

// Root of every library failure. `kind()` is a stable machine-readable tag.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define LEAFDEC_ERROR(Name)                                              \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& what) : Error(#Name, what) {}       \
  }

LEAFDEC_ERROR(NonFinite);
LEAFDEC_ERROR(DimensionError);
LEAFDEC_ERROR(NotInterior);
LEAFDEC_ERROR(FrameDegenerate);
LEAFDEC_ERROR(EmptyChart);
LEAFDEC_ERROR(LevelUnreachable);
LEAFDEC_ERROR(NoLeaf);
LEAFDEC_ERROR(OutsideLeaf);
LEAFDEC_ERROR(SingularH);
LEAFDEC_ERROR(DegenerateSupport);
LEAFDEC_ERROR(InvalidN);
LEAFDEC_ERROR(NonConstantRho);
LEAFDEC_ERROR(BoundaryContact);
LEAFDEC_ERROR(ConfigError);

#undef LEAFDEC_ERROR

// CoverageGap is declared next to the mixture report it carries.

}  // namespace leafdec
