"""Exception hierarchy shared by all modules."""


class CoupledRisError(Exception):
    """Base class for every error raised by this package."""


class QuadratureError(CoupledRisError):
    def __init__(self, message, pair=None):
        super().__init__(message if pair is None else f"{message} (pair {pair})")
        self.pair = pair


class PlacementError(CoupledRisError):
    pass


class BundleFormatError(CoupledRisError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} at byte offset {offset}"
        super().__init__(message)
        self.offset = offset


class ReciprocityError(BundleFormatError):
    def __init__(self, block, partner, i, j, rel_err):
        super().__init__(
            f"reciprocity violated between {block} and {partner} at ({i}, {j}): "
            f"relative error {rel_err:.3e}"
        )
        self.block = block
        self.partner = partner
        self.index = (i, j)


class ReductionError(CoupledRisError):
    def __init__(self, matrix, cond):
        super().__init__(f"matrix {matrix} is singular or ill-conditioned (cond ~ {cond:.3e})")
        self.matrix = matrix
        self.cond = cond


class ChannelError(CoupledRisError):
    pass


class ContractError(CoupledRisError, ValueError):
    """An input violated a documented precondition."""


class DegenerateElementError(CoupledRisError):
    def __init__(self, k, reason):
        super().__init__(f"RIS element {k} is degenerate: {reason}")
        self.k = k
        self.reason = reason


class ScenarioError(CoupledRisError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
