"""Exception hierarchy shared by all modules.

Two families matter to callers: ``ValidationError`` (bad input, exit code 1 in
the CLI) and ``NumericalError`` (a well-formed problem the numerics cannot
solve, exit code 2).
"""


class MMRegError(Exception):
    pass


class ValidationError(MMRegError, ValueError):
    pass


class NumericalError(MMRegError, ArithmeticError):
    pass


class InvalidArgument(ValidationError):
    pass


class NiftiFormatError(ValidationError):
    pass


class UnsupportedDatatype(NiftiFormatError):
    def __init__(self, code):
        self.code = code
        super().__init__(f"unsupported NIfTI datatype code {code}")


class EmptyParcellation(ValidationError):
    pass


class InsufficientCorrespondence(ValidationError):
    pass


class DuplicateEdge(ValidationError):
    pass


class DisconnectedGraph(ValidationError):
    def __init__(self, components, message=None):
        self.components = [sorted(c) for c in components]
        if message is None:
            desc = ", ".join("{" + ",".join(map(str, c)) + "}" for c in self.components)
            message = f"observation graph is disconnected; components: {desc}"
        super().__init__(message)


class MissingAnchor(ValidationError):
    pass


class InvalidReference(ValidationError):
    pass


class InvalidSample(ValidationError):
    pass


class InvalidSpec(ValidationError):
    pass


class IllConditionedRotation(NumericalError):
    pass


class DegenerateGeometry(NumericalError):
    pass


class Unidentifiable(NumericalError):
    pass


class CollinearConfounds(NumericalError):
    pass
