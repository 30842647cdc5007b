# core/exceptions.py
"""
Hierarquia de erros compartilhada por todos os apps do SaTformer
"""


class SatformerError(Exception):
    """Erro base do sistema"""


class DimensionError(SatformerError):
    """Formas incompatíveis entre tensores ou entre tensor e configuração"""


class ContractError(SatformerError):
    """Pré-condição de uma operação violada (índice fora do intervalo, modo inválido, etc.)"""


class NumericError(SatformerError):
    """NaN/Inf detectado ou outro estado numérico inválido"""


class TrainingDivergedError(NumericError):
    """Perda não finita durante o treinamento"""

    def __init__(self, message: str, diagnostics: dict = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DataError(SatformerError):
    """Dados de entrada inválidos (chuva negativa, conjunto vazio, etc.)"""


class FormatError(SatformerError):
    """Arquivo corrompido ou fora do formato esperado"""

    def __init__(self, message: str, offset: int = None):
        if offset is not None:
            message = f"{message} (byte {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(SatformerError):
    """Configuração inválida ou inconsistente"""
