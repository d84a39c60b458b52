from typing import Dict, Optional


class NftNetError(Exception):
    """Base class for every error raised by the analysis pipeline"""


class ConfigError(NftNetError):
    """Invalid or incomplete run configuration"""


class IngestError(NftNetError):
    """A malformed row in an exported transaction file"""

    def __init__(self, message: str, line: Optional[int] = None, source: Optional[str] = None):
        self.message = message
        self.line = line
        self.source = source
        location = source or '<stream>'
        if line is not None:
            location = f'{location}:{line}'
        super().__init__(f'{location}: {message}')


class InconsistentTransactionError(NftNetError):
    """Records sharing a transaction hash disagree on who traded what"""

    def __init__(self, tx_hash: str, reason: str):
        self.tx_hash = tx_hash
        self.reason = reason
        super().__init__(f'inconsistent transaction {tx_hash}: {reason}')


class PowerLawFitError(NftNetError):
    """No admissible lower cutoff could be fitted"""


class DegenerateDataError(PowerLawFitError):
    """Input carries a single distinct value"""


class NonConvergenceError(NftNetError):
    """An iterative solver hit its iteration cap"""

    def __init__(self, message: str, last_iterate: Dict[str, float], iterations: int):
        self.last_iterate = last_iterate
        self.iterations = iterations
        super().__init__(message)


class UndefinedMetricError(NftNetError):
    """A metric was requested on input for which it is undefined"""


class ReportError(NftNetError):
    """Report output could not be written"""
