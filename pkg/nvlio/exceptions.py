"""Errores del toolkit. Todo lo que el pipeline levanta hereda de NvlioError."""


class NvlioError(Exception):
    pass


class PreconditionError(NvlioError, ValueError):
    """Entrada fuera del dominio de la operación."""


class DegenerateGeometryError(NvlioError):
    pass


class InsufficientOverlapError(NvlioError):
    def __init__(self, found, required):
        super().__init__(f'Solapamiento insuficiente: {found} correspondencias (mínimo {required})')
        self.found = found
        self.required = required


class NumericalError(NvlioError):
    pass


class ImuCoverageError(NvlioError):
    def __init__(self, start, end):
        super().__init__(f'Sin cobertura IMU en el intervalo [{start:.6f}, {end:.6f}]')
        self.start = start
        self.end = end


class GraphError(NvlioError):
    pass


class DanglingReferenceError(GraphError):
    pass


class DisconnectedGraphError(GraphError):
    pass


class DatasetFormatError(NvlioError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f'{message} (línea {line})'
        super().__init__(message)
        self.line = line


class TimeOrderError(DatasetFormatError):
    pass


class ConfigError(NvlioError):
    pass
