"""Exception hierarchy for tube construction, control and partitioning."""


class TubeSwarmError(Exception):
    """Base class for all library errors."""


# -- geometry --------------------------------------------------------------

class DegenerateTube(TubeSwarmError):
    """Tube vertices do not form a valid trapezoid (zero-length edge,
    non-parallel bases, or zero area)."""


class AmbiguousRegion(TubeSwarmError):
    """A point satisfies both the left-area and right-area criteria,
    which a well-formed tube rules out."""


# -- potentials ------------------------------------------------------------

class InvalidInterval(TubeSwarmError):
    """Transition interval with d1 >= d2."""


class NonpositiveInput(TubeSwarmError):
    """Barrier function evaluated at x <= 0."""


class LogDomainViolation(TubeSwarmError):
    """Point too close to a panel: the log kernel argument would be
    non-positive.  Signals a broken scenario, never clamped silently."""


# -- controller ------------------------------------------------------------

class OutsideTube(TubeSwarmError):
    """Controller evaluated at a point outside its tube."""


class DegenerateBlend(TubeSwarmError):
    """Blended line-approach direction has zero norm."""


class CoincidentAgents(TubeSwarmError):
    """Two agents share the same position; repulsion is undefined."""


class DirL2Violation(TubeSwarmError):
    """Extended boundary panels too short: the negative gradient opposes
    the tube axis somewhere inside the tube."""


# -- partition -------------------------------------------------------------

class ObstacleOutsideTube(TubeSwarmError):
    """Obstacle's inflated disc is not inside the tube interior."""


class ObstacleOnBoundary(TubeSwarmError):
    """Obstacle's inflated disc touches the tube boundary."""


class TriangleExceedsTube(TubeSwarmError):
    """Circumscribed triangle does not fit inside the parent tube."""


class OverlappingTriangles(TubeSwarmError):
    """Cut bands of two obstacles intersect along the tube axis."""


class NoFeasibleCorridor(TubeSwarmError):
    """Both corridors around an obstacle are empty, or a re-tilted
    triangle no longer contains the inflated disc."""


class Assumption3PrimeViolation(TubeSwarmError):
    """A mandatory sub-tube is too short or too narrow to hold one agent."""


class OutsideParentTube(TubeSwarmError):
    """Sub-tube lookup for a point outside the parent tube."""


# -- simulator -------------------------------------------------------------

class UnsupportedVariant(TubeSwarmError):
    """Diagnostic requested outside the regime it is defined for."""


class SafetyAbort(TubeSwarmError):
    """A controller error occurred mid-run; carries agent id and time."""

    def __init__(self, message, agent_id=None, t=None):
        super().__init__(message)
        self.agent_id = agent_id
        self.t = t


# -- scenario io -----------------------------------------------------------

class ScenarioError(TubeSwarmError):
    """Base for scenario file problems."""


class ScenarioSyntaxError(ScenarioError):
    """File is not well-formed."""


class SchemaError(ScenarioError):
    """File is well-formed but keys/types do not match the schema."""


class ValidationError(ScenarioError):
    """Config parsed but fails validation; carries every violation."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
