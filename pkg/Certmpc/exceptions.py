"""
Exception hierarchy shared by every Certmpc app.

Each error carries the process exit code used by the management commands
and a ``details`` dict with the diagnostics needed to reproduce it.
"""


class CertmpcError(Exception):
    """Base class for all Certmpc errors."""
    exit_code = 1
    default_message = 'An unexpected error occurred'

    def __init__(self, message=None, details=None):
        self.message = message or self.default_message
        self.details = details or {}
        super().__init__(self.message)


class ContractViolationError(CertmpcError):
    """Inputs do not satisfy an operation's preconditions (shapes, dimensions)."""
    exit_code = 2
    default_message = 'Contract violation'


class ConfigurationError(CertmpcError):
    """Run configuration failed validation."""
    exit_code = 2
    default_message = 'Validation failed'

    def __init__(self, message=None, errors=None, details=None):
        super().__init__(message, details)
        self.errors = errors or []


class DegenerateRegionError(CertmpcError):
    """Point set cannot support an alpha shape (too few or collinear points)."""
    exit_code = 2
    default_message = 'Degenerate point set for alpha shape'


class EmptyRegionError(CertmpcError):
    """Alpha-shape interior holds no admissible safe state."""
    exit_code = 2
    default_message = 'Safe region is empty; increase alpha'


class SolverFailureError(CertmpcError):
    """OCP solve failed and no feasible fallback was available."""
    exit_code = 3
    default_message = 'Solver failure'


class SafetyViolationError(CertmpcError):
    """A closed-loop state entered the unsafe set."""
    exit_code = 4
    default_message = 'Safety violation'


class TrainingDivergenceError(CertmpcError):
    """Certificate training produced a non-finite loss."""
    exit_code = 5
    default_message = 'Training diverged'


class AssumptionViolationError(CertmpcError):
    """Initial certificate does not satisfy the bootstrap requirements."""
    exit_code = 5
    default_message = 'Initial certificate requirements violated'
