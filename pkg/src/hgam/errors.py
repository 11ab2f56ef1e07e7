"""Error types shared across the package, with CLI exit codes attached."""


class HgamError(Exception):
    """Base class; exit_code drives the CLI's process exit status."""

    exit_code = 1


class ConfigError(HgamError):
    """Invalid or unparseable configuration (bad value, unknown key)."""

    exit_code = 2


class CheckpointError(HgamError):
    """Checkpoint file missing, corrupt, or shape-incompatible with the config."""

    exit_code = 3


class ContractError(HgamError):
    """A runtime precondition was violated (e.g. stepping a finished episode)."""

    exit_code = 4


class InfeasibleScenarioError(HgamError):
    """Rejection sampling could not place all obstacles."""

    exit_code = 4


class UndefinedMetricError(HgamError):
    """Metric has no defined value for this episode (e.g. zero total data)."""

    exit_code = 4
