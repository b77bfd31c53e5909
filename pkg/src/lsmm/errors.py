"""Exception types raised by the reduction library."""


class LSMMError(Exception):
    """Base class for all library errors."""


class NonFinite(LSMMError, ValueError):
    """Input contains NaN or Inf."""


class SpectraOverlap(LSMMError):
    """Two spectra that must be disjoint share an eigenvalue."""


class ConvergenceFailure(LSMMError):
    """An iterative eigenvalue computation did not converge."""


class NotObservable(LSMMError):
    """The pair (S, L) is not observable."""


class TargetsNotConjugateClosed(LSMMError, ValueError):
    """Requested closed-loop eigenvalues are not closed under conjugation."""


class PairSplit(LSMMError):
    """A selection by dominance cuts a complex-conjugate pair in half."""


class DegenerateEigenvalue(LSMMError):
    """Dominance ordering is ambiguous or an eigenvalue is repeated."""


class InvalidInterpolationSpec(LSMMError, ValueError):
    """Interpolation points/orders violate the spec invariants."""


class NotConjugateClosed(InvalidInterpolationSpec):
    """Interpolation points are not closed under conjugation."""


class DuplicatePoints(InvalidInterpolationSpec):
    """Interpolation points are not pairwise distinct."""


class RankDeficient(LSMMError):
    """A matrix that must have full row rank does not."""


class NotAdmissible(LSMMError):
    """Reduction parameters violate an admissibility condition."""

    def __init__(self, condition, detail=""):
        self.condition = condition
        msg = f"parameters not admissible: {condition}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class PointInSpectrum(LSMMError):
    """An evaluation point coincides with an eigenvalue of A."""


class NotConditionedInvariant(LSMMError):
    """The constraint F P + G L = P S has no solution for the given P."""


class Resonance(LSMMError):
    """The non-resonance condition fails at some degree."""

    def __init__(self, degree):
        self.degree = degree
        super().__init__(f"sigma(A) meets sigma^{degree}(S): resonance at degree {degree}")


class DegreeOverflow(LSMMError):
    """The monomial basis would exceed the configured size cap."""


class OrderExceedsDegree(LSMMError, ValueError):
    """Requested truncation order is above the degree of the map."""


class EmptySampleSet(LSMMError, ValueError):
    """No sample points were supplied."""


class StepSizeUnderflow(LSMMError):
    """The adaptive integrator step size fell below machine resolution."""


class NonFiniteState(LSMMError):
    """The integrated state became NaN or Inf."""


class EmptyWindow(LSMMError, ValueError):
    """The r.m.s. averaging window contains fewer than two samples."""


class Unstable(LSMMError):
    """A system that must be Hurwitz is not."""

    def __init__(self, which):
        self.which = which
        super().__init__(f"{which} is not Hurwitz")


class NotSkewSymmetric(LSMMError):
    """The generator matrix S is not skew-symmetric."""


class PosterioriSpectrumClash(UserWarning):
    """sigma(F) meets sigma(S) after solving the relaxed problem."""
