class SufficeException(Exception):
    """
    Excepción base personalizada para la librería.
    """

    exit_code: int = 2

    def __init__(self, detail: str, exit_code: int | None = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code


class ValidationException(SufficeException):
    """
    Excepción para errores de validación de entradas.
    """

    def __init__(self, detail: str = "Error de validación"):
        super().__init__(detail=detail, exit_code=1)


class SchemaException(SufficeException):
    """
    Excepción cuando falta una columna esperada en un archivo CSV.
    """

    def __init__(self, detail: str = "Columna no encontrada"):
        super().__init__(detail=detail, exit_code=1)


class ConfigurationException(SufficeException):
    """
    Excepción para configuraciones que no se pueden satisfacer.
    """

    def __init__(self, detail: str = "Configuración inválida"):
        super().__init__(detail=detail, exit_code=1)


class DegenerateBatchException(SufficeException):
    """
    Excepción cuando un mini-lote no contiene todos los grupos sensibles.
    """

    def __init__(self, detail: str = "Mini-lote degenerado"):
        super().__init__(detail=detail, exit_code=2)


class DegenerateProbabilitiesException(SufficeException):
    """
    Excepción cuando las probabilidades producen máscaras vacías de forma persistente.
    """

    def __init__(self, detail: str = "Probabilidades degeneradas"):
        super().__init__(detail=detail, exit_code=2)


class MetricUndefinedException(SufficeException):
    """
    Excepción cuando una métrica de equidad no está definida.
    """

    def __init__(self, detail: str = "Métrica no definida"):
        super().__init__(detail=detail, exit_code=2)


class ResultsIOException(SufficeException):
    """
    Excepción para errores al escribir resultados.
    """

    def __init__(self, detail: str = "Error al escribir resultados"):
        super().__init__(detail=detail, exit_code=2)


class ExperimentException(SufficeException):
    """
    Excepción de un experimento anotada con la repetición o el punto del barrido.
    Conserva el código de salida del error original.
    """

    def __init__(self, detail: str = "Error en el experimento", exit_code: int = 2):
        super().__init__(detail=detail, exit_code=exit_code)
