"""Exception hierarchy. Each class carries the CLI exit status used for it."""


class CMALabError(Exception):
    exit_code = 10


class ConfigInvalid(CMALabError):
    exit_code = 2

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"config key {key!r}: {message}")


# index calculus
class DivergentTail(CMALabError):
    exit_code = 11


class ToleranceNotMet(CMALabError):
    exit_code = 12


class OutOfRange(CMALabError):
    exit_code = 13


class SampleOutsideStrip(CMALabError):
    exit_code = 14


# geometry
class DegenerateGrid(CMALabError):
    exit_code = 20


class RootNotBracketed(CMALabError):
    exit_code = 21


class NonConvexDomain(CMALabError):
    exit_code = 22


class OutsideDomain(CMALabError):
    exit_code = 23


# operator
class MissingNeighbor(CMALabError):
    exit_code = 30


class NotPSD(CMALabError):
    exit_code = 31


class AxisSingularity(CMALabError):
    exit_code = 32


# barriers
class PeakFamilyInvalid(CMALabError):
    exit_code = 40


class LedgerViolation(CMALabError):
    exit_code = 41


class GridMismatch(CMALabError):
    exit_code = 42


class ShiftOutsideGrid(CMALabError):
    exit_code = 43


# solver
class SolverDiverged(CMALabError):
    exit_code = 50


class NegativeDiscriminant(CMALabError):
    exit_code = 51


class RadialModeInvalid(CMALabError):
    exit_code = 52


class NotConverged(CMALabError):
    exit_code = 53


# regularity lab
class InsufficientSamples(CMALabError):
    exit_code = 60


class InsufficientScales(CMALabError):
    exit_code = 61
