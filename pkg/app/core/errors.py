from typing import Optional


class WattLensError(Exception):
    """Base error; `module` names the component that raised it"""

    module = "core"

    def __init__(self, message: str, *, module: Optional[str] = None):
        super().__init__(message)
        self.message = message
        if module is not None:
            self.module = module

    def __str__(self) -> str:
        return self.message


class DatasetError(WattLensError):
    module = "data_ingest"


class TreeError(WattLensError):
    module = "tree_core"


class EnsembleError(WattLensError):
    module = "ensembles"


class ModelFormatError(EnsembleError):
    pass


class ExplainError(WattLensError):
    module = "explain"


class ReportError(WattLensError):
    module = "report"


class RicError(WattLensError):
    module = "ric_sim"


class ConfigError(WattLensError):
    module = "cli"
