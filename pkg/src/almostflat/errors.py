"""Exception hierarchy shared by all modules."""


class AlmostFlatError(Exception):
    """Base class for every error raised by the package."""


# complex
class DisconnectedComplex(AlmostFlatError, ValueError):
    pass


class DuplicateVertexInSimplex(AlmostFlatError, ValueError):
    pass


class InvalidParameter(AlmostFlatError, ValueError):
    pass


class PointOutsideBlock(AlmostFlatError, ValueError):
    pass


class NotASurface(AlmostFlatError, ValueError):
    pass


# presentation
class RootNotFound(AlmostFlatError, KeyError):
    pass


class UnknownGenerator(AlmostFlatError, KeyError):
    pass


class SingularLetterValue(AlmostFlatError, ArithmeticError):
    pass


# qrep
class DimensionMismatch(AlmostFlatError, ValueError):
    pass


class SingularMatrix(AlmostFlatError, ArithmeticError):
    pass


class DefectTooLarge(AlmostFlatError, ValueError):
    def __init__(self, delta, threshold, what="defect"):
        self.delta = float(delta)
        self.threshold = float(threshold)
        super().__init__(f"{what} {self.delta:.6g} is not below the threshold {self.threshold:.6g}")


class WrongComplexFamily(AlmostFlatError, ValueError):
    pass


# bundle / correspondence
class PointOutsideOverlap(AlmostFlatError, ValueError):
    pass


class SingularValueAtPoint(AlmostFlatError, ArithmeticError):
    pass


class SingularBarycenterValue(AlmostFlatError, ArithmeticError):
    pass


class NotNormalized(AlmostFlatError, ValueError):
    pass


class FlatnessTooLarge(AlmostFlatError, ValueError):
    def __init__(self, eps, threshold):
        self.eps = float(eps)
        self.threshold = float(threshold)
        super().__init__(f"flatness {self.eps:.6g} is not below the threshold {self.threshold:.6g}")


# ktheory
class SupportViolation(AlmostFlatError, ValueError):
    pass


class NotAlmostIdempotent(AlmostFlatError, ValueError):
    def __init__(self, residual, point=None):
        self.residual = float(residual)
        self.point = point
        msg = f"||x^2 - x|| = {self.residual:.6g} is not below 1/4"
        if point is not None:
            msg += f" at {point}"
        super().__init__(msg)


class BranchTrackingFailure(AlmostFlatError, ArithmeticError):
    pass


class QuadratureNonConvergent(AlmostFlatError, ArithmeticError):
    pass
