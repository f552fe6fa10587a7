"""Radial distribution power flow (backward/forward sweep) and the bundled cases.

Injections follow the generator convention: positive P/Q is power delivered
*into* the network at a bus, so loads enter with a negative sign and renewable
output with a positive one.  All public quantities are in kW / kVAr; the
solver works in per-unit internally.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .dataset import Dataset
from .errors import CaseError, PowerFlowDivergence

SWEEP_TOL = 1e-8
SWEEP_MAX_ITER = 200


@dataclass(frozen=True)
class Bus:
    id: int
    p_kw: float
    q_kvar: float


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r_ohm: float
    x_ohm: float


@dataclass(frozen=True)
class ResUnit:
    bus: int
    kind: str  # "pv" | "wind"
    capacity_kw: float


@dataclass
class NetworkCase:
    buses: list[Bus]
    branches: list[Branch]
    slack: int
    base_kv: float
    base_kva: float
    res: list[ResUnit] = field(default_factory=list)
    name: str = ""

    def __post_init__(self):
        self.bus_ids = [b.id for b in self.buses]
        self.index = {bid: i for i, bid in enumerate(self.bus_ids)}
        self._build_tree()

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def z_base(self) -> float:
        return self.base_kv**2 * 1000.0 / self.base_kva

    def _build_tree(self):
        nb = self.n_bus
        if len(set(self.bus_ids)) != nb:
            raise CaseError("duplicate bus ids in case")
        if self.slack not in self.index:
            raise CaseError(f"slack bus {self.slack} is not a listed bus")
        adj = {i: [] for i in range(nb)}
        seen_pairs = set()
        for br in self.branches:
            for end in (br.from_bus, br.to_bus):
                if end not in self.index:
                    raise CaseError(f"branch {br.from_bus}-{br.to_bus} references unknown bus {end}")
            if br.r_ohm < 0 or br.x_ohm < 0:
                raise CaseError(f"negative impedance on branch {br.from_bus}-{br.to_bus}")
            if br.from_bus == br.to_bus:
                raise CaseError(f"self-loop at bus {br.from_bus}")
            a, b = self.index[br.from_bus], self.index[br.to_bus]
            key = (min(a, b), max(a, b))
            if key in seen_pairs:
                raise CaseError(f"cycle detected: duplicated branch {br.from_bus}-{br.to_bus}")
            seen_pairs.add(key)
            z = complex(br.r_ohm, br.x_ohm)
            adj[a].append((b, z))
            adj[b].append((a, z))

        root = self.index[self.slack]
        parent = np.full(nb, -1, dtype=int)
        z_pu = np.zeros(nb, dtype=complex)
        order = [root]
        visited = np.zeros(nb, dtype=bool)
        visited[root] = True
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for v, z in adj[u]:
                if visited[v]:
                    if parent[u] != v:
                        raise CaseError(
                            f"cycle detected through bus {self.bus_ids[v]}: network is not radial")
                    continue
                visited[v] = True
                parent[v] = u
                z_pu[v] = z / self.z_base
                order.append(v)
                queue.append(v)
        if not visited.all():
            missing = [self.bus_ids[i] for i in np.flatnonzero(~visited)]
            raise CaseError(f"disconnected bus(es) not reachable from slack: {missing}")
        if len(self.branches) != nb - 1:
            raise CaseError(f"radiality check failed: {len(self.branches)} branches for {nb} buses")
        for unit in self.res:
            if unit.bus not in self.index:
                raise CaseError(f"RES unit attached to unknown bus {unit.bus}")

        self.parent = parent
        self.order = np.array(order, dtype=int)
        self.z_pu = z_pu
        self.r_pu = z_pu.real

    def base_injections(self) -> tuple[np.ndarray, np.ndarray]:
        """Net injections (kW, kVAr) at base load with renewables off."""
        p = -np.array([b.p_kw for b in self.buses], dtype=float)
        q = -np.array([b.q_kvar for b in self.buses], dtype=float)
        return p, q

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "base_kv": self.base_kv,
            "base_kva": self.base_kva,
            "slack": self.slack,
            "buses": [{"id": b.id, "p_kw": b.p_kw, "q_kvar": b.q_kvar} for b in self.buses],
            "branches": [{"from": b.from_bus, "to": b.to_bus, "r_ohm": b.r_ohm, "x_ohm": b.x_ohm}
                         for b in self.branches],
            "res": [{"bus": u.bus, "kind": u.kind, "capacity_kw": u.capacity_kw} for u in self.res],
        }


def case_schema() -> dict:
    return json.loads(resources.files("rgpf.data").joinpath("case.schema.json").read_text())


def case_from_dict(doc: dict) -> NetworkCase:
    try:
        jsonschema.validate(doc, case_schema())
    except jsonschema.ValidationError as exc:
        raise CaseError(f"case file does not match schema: {exc.message}") from None
    return NetworkCase(
        buses=[Bus(int(b["id"]), float(b["p_kw"]), float(b["q_kvar"])) for b in doc["buses"]],
        branches=[Branch(int(b["from"]), int(b["to"]), float(b["r_ohm"]), float(b["x_ohm"]))
                  for b in doc["branches"]],
        slack=int(doc["slack"]),
        base_kv=float(doc["base_kv"]),
        base_kva=float(doc["base_kva"]),
        res=[ResUnit(int(u["bus"]), u["kind"], float(u["capacity_kw"])) for u in doc.get("res", [])],
        name=doc.get("name", ""),
    )


def load_case(path) -> NetworkCase:
    """Load and validate a case file.  ``"ieee33"`` selects the bundled feeder."""
    if str(path) == "ieee33":
        text = resources.files("rgpf.data").joinpath("ieee33.json").read_text()
    else:
        p = Path(path)
        if not p.is_file():
            raise CaseError(f"case file not found: {p}")
        text = p.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseError(f"case file {path} is not valid JSON: {exc}") from None
    return case_from_dict(doc)


@dataclass
class PowerFlowSolution:
    v_mag: np.ndarray        # p.u., case bus order
    v_ang: np.ndarray        # degrees
    iterations: int
    max_mismatch: float      # p.u. power
    slack_injection: complex  # p.u., power supplied by the substation
    losses: complex          # p.u.
    converged: bool = True


@dataclass
class BatchSolution:
    v_mag: np.ndarray        # (K, n_bus)
    v_ang: np.ndarray
    iterations: int
    max_mismatch: np.ndarray  # (K,)
    slack_injection: np.ndarray  # (K,) complex p.u.
    losses: np.ndarray           # (K,) complex p.u.

    def __getitem__(self, k) -> PowerFlowSolution:
        return PowerFlowSolution(self.v_mag[k], self.v_ang[k], self.iterations,
                                 float(self.max_mismatch[k]), complex(self.slack_injection[k]),
                                 complex(self.losses[k]))


def _backward(case: NetworkCase, I: np.ndarray) -> np.ndarray:
    J = I.copy()
    parent = case.parent
    for b in case.order[:0:-1]:
        J[:, parent[b]] += J[:, b]
    return J


def solve_power_flow_batch(case: NetworkCase, p_inj_kw, q_inj_kvar, tol: float = SWEEP_TOL,
                           max_iter: int = SWEEP_MAX_ITER) -> BatchSolution:
    """Backward/forward sweep on K injection profiles at once.

    ``p_inj_kw`` and ``q_inj_kvar`` have shape (K, n_bus) in case bus order.
    The slack entries are treated as local load at the substation.
    """
    P = np.atleast_2d(np.asarray(p_inj_kw, dtype=float))
    Q = np.atleast_2d(np.asarray(q_inj_kvar, dtype=float))
    if P.shape != Q.shape or P.shape[1] != case.n_bus:
        raise CaseError(f"injections must have shape (K, {case.n_bus}); got {P.shape} and {Q.shape}")
    s_load = -(P + 1j * Q) / case.base_kva
    root = case.index[case.slack]
    order, parent, z = case.order, case.parent, case.z_pu

    V = np.ones_like(s_load)
    converged = False
    it = 0
    dv = np.zeros(P.shape[0])
    for it in range(1, max_iter + 1):
        I = np.conj(s_load / V)
        J = _backward(case, I)
        V_new = np.empty_like(V)
        V_new[:, root] = 1.0
        for b in order[1:]:
            V_new[:, b] = V_new[:, parent[b]] - z[b] * J[:, b]
        diff = np.abs(V_new - V)
        V = V_new
        if not np.all(np.isfinite(V)):
            break
        dv = diff.max(axis=1)
        if dv.max() <= tol:
            converged = True
            break
    if not converged:
        bad = np.where(np.isfinite(V), np.abs(V), 0.0)
        k, b = np.unravel_index(np.argmin(bad), bad.shape)
        raise PowerFlowDivergence(
            f"backward/forward sweep did not converge in {it} sweeps "
            f"(sample {k}, worst bus {case.bus_ids[b]})",
            worst_bus=case.bus_ids[b], iterations=it)

    I = np.conj(s_load / V)
    J = _backward(case, I)
    # currents implied by the converged voltage drops
    nz = np.abs(z) > 0
    J_drop = J.copy()
    for b in order[1:]:
        if nz[b]:
            J_drop[:, b] = (V[:, parent[b]] - V[:, b]) / z[b]
    I_net = J_drop.copy()
    for b in order[1:]:
        I_net[:, parent[b]] -= J_drop[:, b]
    mismatch = np.abs(V * np.conj(I_net) - s_load)
    mismatch[:, root] = 0.0
    slack_supply = V[:, root] * np.conj(J[:, root])
    losses = (np.abs(J[:, order[1:]]) ** 2 * z[order[1:]]).sum(axis=1)
    return BatchSolution(
        v_mag=np.abs(V),
        v_ang=np.degrees(np.angle(V)),
        iterations=it,
        max_mismatch=mismatch.max(axis=1),
        slack_injection=slack_supply,
        losses=losses,
    )


def solve_power_flow(case: NetworkCase, p_inj_kw, q_inj_kvar, tol: float = SWEEP_TOL,
                     max_iter: int = SWEEP_MAX_ITER) -> PowerFlowSolution:
    """Solve one steady state.  Injections are per-bus net kW / kVAr in case bus order."""
    return solve_power_flow_batch(case, np.asarray(p_inj_kw, float)[None, :],
                                  np.asarray(q_inj_kvar, float)[None, :], tol, max_iter)[0]


def parse_output(name: str) -> tuple[int, str]:
    """``"vmag_19"`` -> ``(19, "mag")``."""
    head, _, bus = name.partition("_")
    if head not in ("vmag", "vang") or not bus.lstrip("-").isdigit():
        raise CaseError(f"unrecognized output quantity {name!r}; expected vmag_<bus> or vang_<bus>")
    return int(bus), head[1:]


def input_columns(case: NetworkCase) -> list[str]:
    cols = []
    for bid in case.bus_ids:
        cols += [f"P_{bid}", f"Q_{bid}"]
    return cols


def injections_to_inputs(case: NetworkCase, P, Q, sol: BatchSolution) -> np.ndarray:
    """Interleave (P_1, Q_1, ..., P_p, Q_p); the slack column carries its measured net injection."""
    P = np.array(P, dtype=float, copy=True)
    Q = np.array(Q, dtype=float, copy=True)
    root = case.index[case.slack]
    supply_kva = sol.slack_injection * case.base_kva
    P[:, root] = P[:, root] + supply_kva.real
    Q[:, root] = Q[:, root] + supply_kva.imag
    X = np.empty((P.shape[0], 2 * case.n_bus))
    X[:, 0::2] = P
    X[:, 1::2] = Q
    return X


def outputs_from_solution(case: NetworkCase, sol: BatchSolution, outputs) -> np.ndarray:
    cols = []
    for name in outputs:
        bus, kind = parse_output(name)
        if bus not in case.index:
            raise CaseError(f"output bus {bus} not in case")
        i = case.index[bus]
        cols.append(sol.v_mag[:, i] if kind == "mag" else sol.v_ang[:, i])
    return np.column_stack(cols) if cols else np.empty((sol.v_mag.shape[0], 0))


def simulate_time_series(case: NetworkCase, p_series, q_series, outputs, timestamps=None) -> Dataset:
    """Run the simulator at every instance of an injection series.

    Parameters
    ----------
    p_series, q_series : (n, n_bus) arrays of net injections (kW, kVAr).
    outputs : list of output names such as ``"vmag_19"`` or ``"vang_19"``.
    """
    P = np.atleast_2d(np.asarray(p_series, float))
    Q = np.atleast_2d(np.asarray(q_series, float))
    n = P.shape[0]
    if timestamps is None:
        timestamps = np.arange(1, n + 1)
    timestamps = np.asarray(timestamps)
    try:
        sol = solve_power_flow_batch(case, P, Q)
    except PowerFlowDivergence:
        # locate the offending instance for the diagnostic
        for t, p, q in zip(timestamps, P, Q):
            try:
                solve_power_flow(case, p, q)
            except PowerFlowDivergence as exc:
                raise PowerFlowDivergence(f"instance at timestamp {t}: {exc}",
                                          worst_bus=exc.worst_bus) from None
        raise
    X = injections_to_inputs(case, P, Q, sol)
    Y = outputs_from_solution(case, sol, outputs)
    return Dataset(timestamps=timestamps, X=X, Y=Y,
                   input_names=input_columns(case), output_names=list(outputs))
