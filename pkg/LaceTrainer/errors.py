class LaceError(Exception):
    """Base class for everything this package raises on purpose. exit_code is what the CLI exits with."""
    exit_code = 1


class ConfigError(LaceError):
    pass


class ContractError(LaceError):
    pass


class DimensionError(ContractError):
    def __init__(self, op, *shapes):
        self.op = op
        self.shapes = shapes
        super().__init__('{op}: incompatible shapes {shapes}'.format(
            op=op, shapes=' and '.join(str(tuple(s)) for s in shapes)))


class CorpusError(LaceError):
    exit_code = 2


class ParseError(CorpusError):
    def __init__(self, path, line, reason):
        self.path = path
        self.line = line
        super().__init__('{path}:{line}: {reason}'.format(path=path, line=line, reason=reason))


class ValidationError(CorpusError):
    def __init__(self, example_id, reason):
        self.example_id = example_id
        super().__init__('example {id}: {reason}'.format(id=example_id, reason=reason))


class CheckpointError(CorpusError):
    pass


class NumericalError(LaceError):
    exit_code = 3

    def __init__(self, message, diagnostics=None):
        self.diagnostics = diagnostics or {}
        if self.diagnostics:
            message += ' ({})'.format(', '.join('{}={}'.format(k, v) for k, v in self.diagnostics.items()))
        super().__init__(message)
