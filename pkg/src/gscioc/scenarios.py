"""Built-in scenarios and the versioned JSON scenario schema.

Two experiments ship with the package:

* **group goal**: two planar point agents (integrator dynamics) that both want
  to reach the origin, spend little effort, and prefer actions that cancel
  (``u_i + u_j`` small).  Per agent ``r = -a1 (|x_i|^2 + |x_j|^2)
  - a2 (|u_i|^2 + |u_j|^2) - a3 |u_i + u_j|^2``.
* **zebra crossing**: a pedestrian (agent ``i``) and a car (agent ``j``) move
  along perpendicular 1-D paths whose intersection is the origin.  The car's
  coordinate is the signed distance *before* the intersection (it drives
  toward negative values); the pedestrian has crossed once its coordinate is
  positive.

The zebra coefficients are hand-calibrated: the defaults below were
chosen once so the deterministic iterative solve shows the car yielding
and the pedestrian crossing.  They are configuration, not ground truth.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import AgentDynamics, AgentId, Dims, DynamicsModel, JointState
from .errors import DimensionMismatch, InputError, MissingCoefficient, NegativeParameter, SchemaError
from .rewards import (
    ActionQuadratic,
    CoupledAction,
    RewardModel,
    StateQuadratic,
    WeightedTerm,
    ZebraInteraction,
)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to solve, sample and infer on one two-agent game.

    ``theta`` is the parameter vector shared by both reward models; each
    weighted term either reads its coefficient from a ``theta`` slot or carries
    a fixed weight.
    """

    name: str
    dynamics: DynamicsModel
    terms_i: tuple
    terms_j: tuple
    theta: np.ndarray
    x0: JointState
    T: int
    n_rollouts: int = 2000
    seed: int = 0
    theta_names: tuple = ()
    notes: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "terms_i", tuple(self.terms_i))
        object.__setattr__(self, "terms_j", tuple(self.terms_j))
        object.__setattr__(self, "theta", np.atleast_1d(np.asarray(self.theta, dtype=float)))
        if int(self.T) < 1:
            raise InputError("horizon T must be at least 1")
        object.__setattr__(self, "T", int(self.T))
        d = self.dims
        if self.x0.x_i.shape != (d.n_i,) or self.x0.x_j.shape != (d.n_j,):
            raise DimensionMismatch("initial state does not match the dynamics dimensions")
        # builds the reward models once to validate term/theta consistency
        self.reward("i")
        self.reward("j")

    @property
    def dims(self) -> Dims:
        return self.dynamics.dims

    def terms(self, agent) -> tuple:
        return self.terms_i if AgentId.parse(agent) is AgentId.I else self.terms_j

    def reward(self, agent, theta=None) -> RewardModel:
        theta = self.theta if theta is None else theta
        return RewardModel(self.terms(agent), theta, agent, self.dims)

    def rewards(self, theta=None):
        return self.reward("i", theta), self.reward("j", theta)

    @property
    def cooperative(self) -> bool:
        return [t.to_dict() for t in self.terms_i] == [t.to_dict() for t in self.terms_j]

    def shared_reward(self, theta=None) -> RewardModel:
        """The common reward of a cooperative game (needed by the joint baseline)."""
        if not self.cooperative:
            raise InputError(f"scenario {self.name!r} is not cooperative; the joint baseline needs a shared reward")
        return self.reward("i", theta)

    def with_theta(self, theta) -> "ScenarioConfig":
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != self.theta.shape:
            raise DimensionMismatch(f"theta has {theta.size} entries, scenario expects {self.theta.size}")
        return ScenarioConfig(
            self.name, self.dynamics, self.terms_i, self.terms_j, theta, self.x0, self.T,
            self.n_rollouts, self.seed, self.theta_names, self.notes, dict(self.extra),
        )

    # ------------------------------------------------------------------ json

    def to_dict(self) -> dict:
        d = self.dims
        agents = []
        for k, terms in ((AgentId.I, self.terms_i), (AgentId.J, self.terms_j)):
            agents.append(
                {
                    "id": k.value,
                    "state_dim": d.state_dim(k),
                    "action_dim": d.action_dim(k),
                    "dynamics": (self.dynamics.agent_i if k is AgentId.I else self.dynamics.agent_j).to_dict(),
                    "reward_terms": [t.to_dict() for t in terms],
                }
            )
        out = {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "agents": agents,
            "theta": self.theta.tolist(),
            "x0": [self.x0.x_i.tolist(), self.x0.x_j.tolist()],
            "T": self.T,
            "defaults": {"n_rollouts": self.n_rollouts, "seed": self.seed},
        }
        if self.theta_names:
            out["theta_names"] = list(self.theta_names)
        if self.notes:
            out["notes"] = self.notes
        if self.extra:
            out["extra"] = self.extra
        return out

    @staticmethod
    def from_dict(data: dict) -> "ScenarioConfig":
        if not isinstance(data, dict):
            raise SchemaError("scenario must be a JSON object")
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
        try:
            agents = data["agents"]
            if len(agents) != 2:
                raise SchemaError("exactly two agents are required")
            dyn = []
            terms = []
            for a in agents:
                spec = a.get("dynamics", data.get("dynamics", {"type": "integrator"}))
                params = {k: np.asarray(v, dtype=float) if isinstance(v, list) else v for k, v in spec.get("params", {}).items()}
                dyn.append(AgentDynamics(spec["type"], int(a["state_dim"]), int(a["action_dim"]), params))
                terms.append(tuple(WeightedTerm.from_dict(t) for t in a["reward_terms"]))
            x0 = JointState(*data["x0"])
            defaults = data.get("defaults", {})
            return ScenarioConfig(
                name=str(data["name"]),
                dynamics=DynamicsModel(*dyn),
                terms_i=terms[0],
                terms_j=terms[1],
                theta=data.get("theta", [0.0]),
                x0=x0,
                T=data["T"],
                n_rollouts=int(defaults.get("n_rollouts", 2000)),
                seed=int(defaults.get("seed", 0)),
                theta_names=tuple(data.get("theta_names", ())),
                notes=data.get("notes", ""),
                extra=data.get("extra", {}),
            )
        except KeyError as exc:
            raise SchemaError(f"scenario is missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise SchemaError(f"malformed scenario: {exc}") from None


def dump_scenario(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")


def load_scenario(path) -> ScenarioConfig:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise InputError(f"scenario file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"scenario is not valid JSON: {exc}") from None
    return ScenarioConfig.from_dict(data)


# --------------------------------------------------------------------------- group goal


def _group_goal_terms(offset):
    return (
        WeightedTerm(StateQuadratic("i"), offset),
        WeightedTerm(StateQuadratic("j"), offset),
        WeightedTerm(ActionQuadratic("i"), offset + 1),
        WeightedTerm(ActionQuadratic("j"), offset + 1),
        WeightedTerm(CoupledAction(), offset + 2),
    )


def build_group_goal_scenario(alpha_i=(0.2, 1.0, 3.0), alpha_j=None, *, T=14, starts=((20.0, 20.0), (20.0, -20.0)), seed=0, n_rollouts=2000):
    """Planar group-goal game.

    With ``alpha_j`` omitted (or equal to ``alpha_i``) both agents share one
    3-vector ``theta``; otherwise ``theta = [alpha_i, alpha_j]`` has six slots.
    """
    alpha_i = np.asarray(alpha_i, dtype=float)
    alpha_j = alpha_i if alpha_j is None else np.asarray(alpha_j, dtype=float)
    for a in (alpha_i, alpha_j):
        if a.shape != (3,):
            raise DimensionMismatch("alpha must have three entries")
        if np.any(a < 0):
            raise NegativeParameter(f"alpha must be nonnegative, got {a.tolist()}")
    integ = AgentDynamics("integrator", 2, 2)
    shared = np.array_equal(alpha_i, alpha_j)
    if shared:
        theta = alpha_i
        terms_i = terms_j = _group_goal_terms(0)
        names = ("alpha1", "alpha2", "alpha3")
    else:
        theta = np.concatenate([alpha_i, alpha_j])
        terms_i, terms_j = _group_goal_terms(0), _group_goal_terms(3)
        names = ("alpha1_i", "alpha2_i", "alpha3_i", "alpha1_j", "alpha2_j", "alpha3_j")
    return ScenarioConfig(
        name="group_goal" if shared else "group_goal_heterogeneous",
        dynamics=DynamicsModel(integ, integ),
        terms_i=terms_i,
        terms_j=terms_j,
        theta=theta,
        x0=JointState(starts[0], starts[1]),
        T=T,
        n_rollouts=n_rollouts,
        seed=seed,
        theta_names=names,
    )


# --------------------------------------------------------------------------- zebra crossing

# Calibrated defaults (see module docstring).  Goals sit past the
# intersection; preferred velocities are per-step displacements.
ZEBRA_DEFAULTS = {
    "ped_goal": 0.05,
    "ped_velocity": 2.0,
    "car_goal": 0.05,
    "car_velocity": 1.0,
    "interaction": 5.0,
    "social_goal": 0.2,
}
ZEBRA_GEOMETRY = {
    "ped_start": -6.0,
    "car_start": 6.0,
    "ped_goal_target": 6.0,
    "car_goal_target": -6.0,
    "ped_speed": 1.0,
    "car_speed": -1.0,
}


def build_zebra_scenario(social=False, coefficients=None, *, T=12, geometry=None, seed=0, n_rollouts=2000):
    """Pedestrian (agent ``i``) and car (agent ``j``) at a zebra crossing.

    ``coefficients`` maps term names to weights; keys are those of
    :data:`ZEBRA_DEFAULTS` (``social_goal`` only matters when ``social``).
    """
    coeffs = dict(ZEBRA_DEFAULTS if coefficients is None else coefficients)
    needed = ["ped_goal", "ped_velocity", "car_goal", "car_velocity", "interaction"] + (["social_goal"] if social else [])
    missing = [k for k in needed if k not in coeffs]
    if missing:
        raise MissingCoefficient(f"zebra scenario needs coefficients for {missing}")
    for k in needed:
        if coeffs[k] < 0:
            raise NegativeParameter(f"coefficient {k} must be nonnegative")
    geo = dict(ZEBRA_GEOMETRY, **(geometry or {}))
    names = list(needed)
    theta = [float(coeffs[k]) for k in names]
    slot = {k: n for n, k in enumerate(names)}
    ped = AgentId.I
    car = AgentId.J
    terms_i = [
        WeightedTerm(StateQuadratic(ped, (geo["ped_goal_target"],)), slot["ped_goal"]),
        WeightedTerm(ActionQuadratic(ped, (geo["ped_speed"],)), slot["ped_velocity"]),
    ]
    if social:
        terms_i.append(WeightedTerm(StateQuadratic(car, (geo["car_goal_target"],)), slot["social_goal"]))
    terms_j = [
        WeightedTerm(StateQuadratic(car, (geo["car_goal_target"],)), slot["car_goal"]),
        WeightedTerm(ActionQuadratic(car, (geo["car_speed"],)), slot["car_velocity"]),
        WeightedTerm(ZebraInteraction(car=car), slot["interaction"]),
    ]
    integ = AgentDynamics("integrator", 1, 1)
    return ScenarioConfig(
        name="zebra_social" if social else "zebra",
        dynamics=DynamicsModel(integ, integ),
        terms_i=terms_i,
        terms_j=terms_j,
        theta=theta,
        x0=JointState([geo["ped_start"]], [geo["car_start"]]),
        T=T,
        n_rollouts=n_rollouts,
        seed=seed,
        theta_names=tuple(names),
        notes="hand-calibrated coefficients",
        extra={"geometry": geo},
    )


BUILTIN = {
    "group_goal": lambda: build_group_goal_scenario(),
    "group_goal_heterogeneous": lambda: build_group_goal_scenario((0.4, 1.5, 2.5), (0.2, 1.0, 3.0)),
    "zebra": lambda: build_zebra_scenario(False),
    "zebra_social": lambda: build_zebra_scenario(True),
}


def resolve_scenario(name_or_path) -> ScenarioConfig:
    """A built-in scenario name or a path to a scenario JSON file."""
    key = str(name_or_path)
    if key in BUILTIN:
        return BUILTIN[key]()
    return load_scenario(key)
