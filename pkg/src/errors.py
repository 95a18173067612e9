"""
src/errors.py - Exception types raised by the meibography pipeline.

Every error the pipeline can report derives from MeiboError so callers (the
CLI batch loop in particular) can catch one type and record the class name.
"""


class MeiboError(Exception):
    """Base class for all pipeline errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


# imgproc
class ImageTooSmall(MeiboError):
    pass


class InvalidKernelSize(MeiboError):
    pass


class DimensionMismatch(MeiboError):
    pass


class EmptyMask(MeiboError):
    pass


class TooFewPoints(MeiboError):
    pass


class DegenerateHistogram(MeiboError):
    """Only raised in strict mode; otherwise logged and an empty mask returned."""


# roi / glands
class NoEyelidDetected(MeiboError):
    pass


class EmptyRoi(MeiboError):
    pass


class FragmentationDiverged(MeiboError):
    """Only raised in strict mode; otherwise the gland is kept unsplit."""


# metrics
class DegenerateGland(MeiboError):
    pass


class NoValidSamples(MeiboError):
    pass


class DegenerateChord(MeiboError):
    pass


class ZeroBackground(MeiboError):
    pass


# evalseg / phantom
class EmptyReference(MeiboError):
    pass


class SpecInfeasible(MeiboError):
    pass
