import typing


class HarmonicRankError(Exception):
    pass


class ConfigurationError(HarmonicRankError, KeyError):
    pass


class MergeConflictError(ConfigurationError):
    """
    Error raised during loading configuration sources that conflict internally.
    """
    def __init__(self, *args: typing.Any, key: str):
        super().__init__(*args)
        self.conflict = key


class NotConfiguredError(ConfigurationError):
    """
    Error raised when a requested configuration key is unavailable and no
    default / fallback value is provided.
    """
    def __init__(self, *args: typing.Any, key: str):
        super().__init__(*args)
        self.key = key


class InvalidConfigurationError(ConfigurationError):
    """
    Error raised when a configured value violates a run configuration
    constraint (non-positive tolerance, horizon beyond the maximum, …).
    """
    def __init__(self, *args: typing.Any, key: str):
        super().__init__(*args)
        self.key = key


class InvalidSpec(HarmonicRankError, ValueError):
    """
    Error raised when a model specification cannot be turned into a model.
    """
    def __init__(self, *args: typing.Any, field: str):
        super().__init__(*args)
        self.field = field


class OracleUnavailable(HarmonicRankError):
    """
    Error raised when a model lacks the oracle (distance, horosphere chart,
    direction dependence) an operation needs.
    """
    def __init__(self, *args: typing.Any, kind: str):
        super().__init__(*args)
        self.kind = kind


class GridMismatch(HarmonicRankError, ValueError):
    """
    Error raised when trajectories that should share a time grid and field do
    not.
    """


class FlatModel(HarmonicRankError):
    """
    Error raised when a quantity degenerates because the mean curvature of
    horospheres vanishes.
    """
    def __init__(self, *args: typing.Any, h: float):
        super().__init__(*args)
        self.h = h


class EmptyKernel(HarmonicRankError):
    """
    Error raised when an operation needs parallel directions along a geodesic
    of rank one.
    """


class EmptySubspace(HarmonicRankError):
    """
    Error raised when a requested invariant subspace has dimension zero.
    """
    def __init__(self, *args: typing.Any, subspace: str):
        super().__init__(*args)
        self.subspace = subspace


class EquivalenceMismatch(HarmonicRankError):
    """
    Error raised when the legs of the equivalence matrix disagree for at least
    one model.
    """
    def __init__(self, *args: typing.Any, rows: typing.Sequence[str]):
        super().__init__(*args)
        self.rows = tuple(rows)


class NumericalError(HarmonicRankError):
    pass


class IntegrationDiverged(NumericalError):
    """
    Error raised when an integrated quantity leaves its invariant set (frame
    orthonormality, finite values).
    """
    def __init__(self, *args: typing.Any, t: float):
        super().__init__(*args)
        self.t = t


class StepSizeUnderflow(NumericalError):
    """
    Error raised when the adaptive step size controller cannot meet the
    requested tolerance.
    """
    def __init__(self, *args: typing.Any, t: float):
        super().__init__(*args)
        self.t = t


class SingularFundamental(NumericalError):
    """
    Error raised when a fundamental solution is numerically singular at a
    boundary.
    """
    def __init__(self, *args: typing.Any, condition: float):
        super().__init__(*args)
        self.condition = condition


class SingularTensor(NumericalError):
    """
    Error raised when a tensor that should be invertible is numerically
    singular.
    """
    def __init__(self, *args: typing.Any, t: float, condition: float):
        super().__init__(*args)
        self.t = t
        self.condition = condition


class NoConvergence(NumericalError):
    """
    Error raised when a limit does not settle within the maximum horizon.
    """
    def __init__(self, *args: typing.Any, horizon: float, gap: float):
        super().__init__(*args)
        self.horizon = horizon
        self.gap = gap


class AmbiguousKernel(NumericalError):
    """
    Error raised when the spectrum offers no clean gap around the rank
    threshold.
    """
    def __init__(self, *args: typing.Any, gap: float):
        super().__init__(*args)
        self.gap = gap


class DisagreementWithRankKernel(NumericalError):
    """
    Error raised when the common kernel of the curvature operators differs in
    dimension from the rank kernel.
    """
    def __init__(self, *args: typing.Any, detected: int, expected: int):
        super().__init__(*args)
        self.detected = detected
        self.expected = expected
