"""Exception types shared across the toolkit."""


class AeroManipError(Exception):
    """Base class for all library errors."""


class ModelValidationError(AeroManipError):
    """A model config violates one or more invariants.

    Carries the full list of violations so a bad file is reported in one shot.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("model validation failed:\n  - " + "\n  - ".join(self.violations))


class GimbalSingularity(AeroManipError):
    """Pitch too close to +-pi/2 for the Euler-rate map to be inverted."""


class AttitudeSingularity(AeroManipError):
    """End-effector pitch too close to +-pi/2 (tan(beta) blows up)."""


class KinematicSingularity(AeroManipError):
    """Task Jacobian is rank deficient at the current configuration."""

    def __init__(self, sigma_min, tol):
        self.sigma_min = float(sigma_min)
        self.tol = float(tol)
        super().__init__(f"kinematic singularity: sigma_min={sigma_min:.3e} < tol={tol:.3e}")


class UnreachableTarget(AeroManipError):
    """Inverse-kinematics target lies outside the reachable set."""


class NoFeasibleBranch(AeroManipError):
    """Every closed-form IK branch violates a joint limit."""


class DegenerateThrust(AeroManipError):
    """Commanded thrust vector has (near-)zero magnitude."""


class AsinDomainError(AeroManipError):
    """Roll-extraction asin argument fell outside [-1, 1] in strict mode."""


class GimbalProximity(AeroManipError):
    """Simulated base pitch approached +-pi/2; integration aborted."""


class ScenarioError(AeroManipError):
    """Scenario config is malformed or references missing files."""


class SizingError(AeroManipError):
    """Arm sizing iteration terminated without full workspace coverage."""

    def __init__(self, message, coverage):
        self.coverage = float(coverage)
        super().__init__(f"{message} (last coverage fraction {coverage:.3f})")
