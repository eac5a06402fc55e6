from __future__ import annotations


class LabError(ValueError):
    """Base class for invalid inputs rejected by the numerical core."""


class GridSizeError(LabError):
    pass


class NormExponentError(LabError):
    pass


class WindowError(LabError):
    pass


class QuadratureError(LabError):
    pass


class BandError(LabError):
    pass


class SymbolError(LabError):
    pass


class TreeError(LabError):
    pass


class FormError(LabError):
    pass


class SelectionError(LabError):
    pass


class ScaleError(LabError):
    pass


class RangeError(LabError):
    pass


class TrialCountError(LabError):
    pass


class LevelError(LabError):
    pass
