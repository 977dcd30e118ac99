"""Exception hierarchy. The CLI maps these onto exit codes."""


class NCGeomError(Exception):
    pass


class DimensionError(NCGeomError, ValueError):
    pass


class ArgumentError(NCGeomError, ValueError):
    pass


class DomainError(NCGeomError, ValueError):
    """An operand is outside the algebra or module it is supposed to belong to."""


class CompositionError(NCGeomError, ValueError):
    pass


class TruncationError(NCGeomError, ValueError):
    def __init__(self, msg, suggested_N=None):
        super().__init__(msg)
        self.suggested_N = suggested_N


class ParseError(NCGeomError, ValueError):
    pass
