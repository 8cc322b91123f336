#pragma once

#include <stdexcept>
#include <string>

namespace fkmc {

struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define FKMC_DEFINE_ERROR(NAME, BASE)                          \
  struct NAME : BASE {                                         \
    explicit NAME(const std::string& what) : BASE(#NAME ": " + what) {} \
  }

// parameter validation
FKMC_DEFINE_ERROR(HurstInvalid, Error);
FKMC_DEFINE_ERROR(HurstOutOfRange, HurstInvalid);
FKMC_DEFINE_ERROR(AdmissibilityViolated, HurstInvalid);
FKMC_DEFINE_ERROR(DimensionMismatch, Error);
FKMC_DEFINE_ERROR(EmptyDomainMesh, Error);
FKMC_DEFINE_ERROR(CoefficientEvaluationFailure, Error);

// simulation
FKMC_DEFINE_ERROR(StartOutsideDomain, Error);
FKMC_DEFINE_ERROR(DegenerateGrid, Error);
FKMC_DEFINE_ERROR(GridMismatch, Error);
FKMC_DEFINE_ERROR(InsufficientSamples, Error);

// linear algebra / iterative solvers
FKMC_DEFINE_ERROR(FactorizationFailure, Error);
FKMC_DEFINE_ERROR(IterationDivergence, Error);
FKMC_DEFINE_ERROR(NonConvergedResidual, Error);

// noise field
FKMC_DEFINE_ERROR(OutOfCoverage, Error);

// spectral / pde
FKMC_DEFINE_ERROR(BallNotInsideDomain, Error);
FKMC_DEFINE_ERROR(StabilityViolation, Error);
FKMC_DEFINE_ERROR(NonRectangularDomain, Error);

// analysis
FKMC_DEFINE_ERROR(HolderUnavailable, Error);
FKMC_DEFINE_ERROR(NonPositiveEstimate, Error);

// configuration
FKMC_DEFINE_ERROR(ConfigParse, Error);
FKMC_DEFINE_ERROR(ValidationFailed, Error);

#undef FKMC_DEFINE_ERROR

}  // namespace fkmc
