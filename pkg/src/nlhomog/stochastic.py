"""Jump-process Monte Carlo on the discrete grid chain.

The particle sits on interior grid nodes.  Three kernel-labelled clocks ring
independently; the clock that rings proposes a destination from its kernel's
quadrature row distribution and the move is accepted only when the phase
membership rule allows it (J moves inside phase A, G inside phase B, R
across).  Rejected proposals leave the particle in place but still consume
the waiting time.

Clock rates equal the quadrature row masses of the kernels (exactly one per
clock in the domain-normalized Neumann mode), which makes the chain's
generator coincide with the assembled operator matrix, so the simulator
validates exactly the object the deterministic solvers invert.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import stats

from .assembly import OperatorMatrix, phase_coupling
from .errors import PreconditionError, RefusalError, SolveError
from .grid import Field, Grid, mean
from .kernels import kernel_node_matrix

CLOCK_LABELS = ("J", "R", "G")
MIN_REPORTED_PATHS = 100
MEAN_ZERO_TOL = 1e-12
MAX_HORIZON = 512.0


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo run settings; the seed fully determines the output."""

    paths: int
    seed: int
    horizon: float | None = None
    max_jumps: int | None = None
    start_nodes: tuple[int, ...] = ()
    mode: str = "neumann"

    def __post_init__(self):
        if self.paths < 1:
            raise PreconditionError("paths must be >= 1")
        if self.mode not in ("neumann", "dirichlet"):
            raise PreconditionError(f"unknown mode {self.mode!r}")
        object.__setattr__(self, "start_nodes", tuple(int(s) for s in self.start_nodes))


@dataclass(frozen=True, eq=False)
class PathStats:
    """Per-start-node estimates and path diagnostics."""

    start_nodes: tuple[int, ...]
    estimates: np.ndarray
    stderrs: np.ndarray
    mean_jumps: np.ndarray
    rejection_fraction: np.ndarray
    mean_exit_time: np.ndarray | None
    exit_time_stderr: np.ndarray | None
    capped_fraction: float
    horizon: float | None
    tail_decay: float | None
    paths: int
    seed: int
    mode: str


@dataclass(frozen=True, eq=False)
class ChainModel:
    """Precomputed jump distributions of the grid chain."""

    grid: Grid
    mode: str
    states: np.ndarray            # global node index per interior state
    region: np.ndarray            # global node index per proposal slot
    member_state: np.ndarray      # phase-A flag per state
    member_region: np.ndarray     # phase-A flag per proposal slot
    region_interior: np.ndarray   # in-box flag per proposal slot
    interior_pos: np.ndarray      # proposal slot -> state index (-1 outside)
    total_rate: np.ndarray        # clock-rate sum per state
    label_cdf: np.ndarray         # (n_states, 3)
    prop_cdf: np.ndarray = field(repr=False)  # (3, n_states, n_region)

    @property
    def n_states(self) -> int:
        return len(self.states)


@dataclass(frozen=True)
class StepOutcome:
    node: int
    clock_label: str
    waiting_time: float
    accepted: bool
    killed: bool


def build_chain(g: Grid, chi: Field, kernels, mode: str) -> ChainModel:
    """Precompute the chain's clock rates and proposal distributions."""
    J, R, G = kernels
    want = "domain" if mode == "neumann" else "ambient"
    for k in kernels:
        got = getattr(k, "norm_mode", "ambient")
        if got != want:
            raise PreconditionError(
                f"{mode} chain needs {want}-mode kernels; kernel "
                f"{getattr(k, 'label', '?') or k.kind} is {got}-mode"
            )
    states = g.interior_indices
    region = states if mode == "neumann" else np.arange(g.n_total)
    n_states, n_region = len(states), len(region)
    masses = np.empty((3, n_states))
    prop_cdf = np.empty((3, n_states, n_region))
    for slot, k in enumerate((J, R, G)):
        mat = kernel_node_matrix(k, g, states, region) * g.weight
        if np.any(mat < 0):
            raise PreconditionError("kernel values must be nonnegative")
        rho = mat.sum(axis=1)
        if np.any(rho <= 0):
            raise SolveError("a kernel clock has zero proposal mass at some node")
        masses[slot] = rho
        cdf = np.cumsum(mat, axis=1) / rho[:, None]
        cdf[:, -1] = 1.0
        prop_cdf[slot] = cdf
    total = masses.sum(axis=0)
    label_cdf = np.cumsum(masses, axis=0).T / total[:, None]
    label_cdf[:, -1] = 1.0
    chi_vals = chi.values
    pos = np.full(g.n_total, -1, dtype=np.int64)
    pos[states] = np.arange(n_states)
    return ChainModel(
        grid=g,
        mode=mode,
        states=states,
        region=region,
        member_state=chi_vals[states] == 1.0,
        member_region=chi_vals[region] == 1.0,
        region_interior=g.interior[region],
        interior_pos=pos[region],
        total_rate=total,
        label_cdf=label_cdf,
        prop_cdf=prop_cdf,
    )


@njit(cache=True)
def _nb_move(state, u1, u2, label_cdf, prop_cdf, member_state, member_region,
             region_interior, interior_pos):
    """One clock ring: returns (new_state, label, accepted, killed)."""
    row = label_cdf[state]
    if u1 < row[0]:
        label = 0
    elif u1 < row[1]:
        label = 1
    else:
        label = 2
    cdf = prop_cdf[label, state]
    j = np.searchsorted(cdf, u2)
    if j >= cdf.size:
        j = cdf.size - 1
    mx = member_state[state]
    my = member_region[j]
    if label == 0:
        ok = mx and my
    elif label == 1:
        ok = mx != my
    else:
        ok = (not mx) and (not my)
    if not ok:
        return state, label, False, False
    if region_interior[j]:
        return interior_pos[j], label, True, False
    return state, label, True, True


@njit(cache=True)
def _nb_neumann_path(state, t, integral, comp, epochs, rejects, exps, unis,
                     label_cdf, prop_cdf, member_state, member_region,
                     region_interior, interior_pos, total_rate, f_int, horizon):
    """Run one trajectory until the horizon or until the draw blocks run out."""
    ei = 0
    ui = 0
    done = False
    while True:
        if ei >= exps.size or ui + 2 > unis.size:
            break
        wait = exps[ei] / total_rate[state]
        ei += 1
        dt = wait
        if t + wait > horizon:
            dt = horizon - t
        y = dt * f_int[state] - comp
        s = integral + y
        comp = (s - integral) - y
        integral = s
        t += wait
        if t >= horizon:
            done = True
            break
        epochs += 1
        state, label, accepted, killed = _nb_move(
            state, unis[ui], unis[ui + 1], label_cdf, prop_cdf, member_state,
            member_region, region_interior, interior_pos,
        )
        ui += 2
        if not accepted:
            rejects += 1
    return state, t, integral, comp, epochs, rejects, done, ei, ui


@njit(cache=True)
def _nb_dirichlet_path(state, t, integral, comp, epochs, rejects, exps, unis,
                       label_cdf, prop_cdf, member_state, member_region,
                       region_interior, interior_pos, total_rate, f_int, cap):
    """Run one killed trajectory; status 0 = draws exhausted, 1 = killed, 2 = capped."""
    ei = 0
    ui = 0
    status = 0
    while epochs < cap:
        if ei >= exps.size or ui + 2 > unis.size:
            break
        wait = exps[ei] / total_rate[state]
        ei += 1
        y = wait * f_int[state] - comp
        s = integral + y
        comp = (s - integral) - y
        integral = s
        t += wait
        epochs += 1
        state, label, accepted, killed = _nb_move(
            state, unis[ui], unis[ui + 1], label_cdf, prop_cdf, member_state,
            member_region, region_interior, interior_pos,
        )
        ui += 2
        if killed:
            status = 1
            break
        if not accepted:
            rejects += 1
    if status == 0 and epochs >= cap:
        status = 2
    return state, t, integral, comp, epochs, rejects, status, ei, ui


@njit(cache=True)
def _nb_occupation(start, n_steps, exps, unis, label_cdf, prop_cdf, member_state,
                   member_region, region_interior, interior_pos, total_rate,
                   occupation):
    x = start
    for k in range(n_steps):
        occupation[x] += exps[k] / total_rate[x]
        x, label, accepted, killed = _nb_move(
            x, unis[2 * k], unis[2 * k + 1], label_cdf, prop_cdf, member_state,
            member_region, region_interior, interior_pos,
        )
    return x


def _chain_args(chain: ChainModel):
    return (
        chain.label_cdf, chain.prop_cdf, chain.member_state, chain.member_region,
        chain.region_interior, chain.interior_pos, chain.total_rate,
    )


def step(state: int, chain: ChainModel, rng: np.random.Generator) -> StepOutcome:
    """Advance the chain by one clock ring from an interior state index."""
    wait = float(rng.exponential()) / float(chain.total_rate[state])
    new_state, label, accepted, killed = _nb_move(
        state, rng.random(), rng.random(), *_chain_args(chain)[:-1]
    )
    return StepOutcome(
        node=int(new_state),
        clock_label=CLOCK_LABELS[int(label)],
        waiting_time=wait,
        accepted=bool(accepted),
        killed=bool(killed),
    )


def _neumann_path(chain, f_int, start: int, horizon: float, rng: np.random.Generator):
    """Deterministic per-path driver; refills draw blocks from one generator."""
    block = max(64, int(float(chain.total_rate.max()) * horizon * 1.25) + 16)
    exps = rng.exponential(size=block)
    unis = rng.random(size=2 * block)
    state, t, integral, comp, epochs, rejects = start, 0.0, 0.0, 0.0, 0, 0
    while True:
        state, t, integral, comp, epochs, rejects, done, ei, ui = _nb_neumann_path(
            state, t, integral, comp, epochs, rejects, exps, unis,
            *_chain_args(chain), f_int, horizon,
        )
        if done:
            return integral, epochs, rejects
        exps = np.concatenate((exps[ei:], rng.exponential(size=block)))
        unis = np.concatenate((unis[ui:], rng.random(size=2 * block)))


def _dirichlet_path(chain, f_int, start: int, cap: int, rng: np.random.Generator):
    block = max(64, min(int(cap) + 8, 8192))
    exps = rng.exponential(size=block)
    unis = rng.random(size=2 * block)
    state, t, integral, comp, epochs, rejects = start, 0.0, 0.0, 0.0, 0, 0
    while True:
        state, t, integral, comp, epochs, rejects, status, ei, ui = _nb_dirichlet_path(
            state, t, integral, comp, epochs, rejects, exps, unis,
            *_chain_args(chain), f_int, cap,
        )
        if status == 1:
            return integral, t, epochs, rejects, True
        if status == 2:
            return integral, t, epochs, rejects, False
        exps = np.concatenate((exps[ei:], rng.exponential(size=block)))
        unis = np.concatenate((unis[ui:], rng.random(size=2 * block)))


def _path_rng(seed: int, path_id: int) -> np.random.Generator:
    return np.random.default_rng([seed, path_id])


def _fit_tail(window_edges, window_means, window_ses):
    """Exponential fit of |window mean| against window centers.

    Windows whose mean is statistically indistinguishable from zero carry no
    decay information and are excluded from the fit.
    """
    centers, mags = [], []
    for (a, b), m, se in zip(window_edges, window_means, window_ses):
        if abs(m) > max(2.0 * se, 0.0) and abs(m) > 0:
            centers.append(0.5 * (a + b))
            mags.append(abs(m))
    if len(mags) < 2:
        return None, None
    slope, intercept = np.polyfit(centers, np.log(mags), 1)
    return -float(slope), float(np.exp(intercept))


def _pilot_windows(chain, f_int, start: int, seed: int, paths: int, horizon: float):
    """Window-averaged load along pilot paths plus spread diagnostics."""
    n_windows = 4
    edges = [(horizon / 2 ** (k + 1), horizon / 2 ** k) for k in reversed(range(n_windows))]
    win_vals = np.zeros((paths, n_windows))
    totals = np.zeros(paths)
    for p in range(paths):
        rng = _path_rng(seed, p)
        t, x = 0.0, start
        acc = 0.0
        block = max(64, int(float(chain.total_rate.max()) * horizon * 1.25) + 16)
        exps = rng.exponential(size=block)
        unis = rng.random(size=2 * block)
        ei = ui = 0
        while t < horizon:
            if ei >= exps.size or ui + 2 > unis.size:
                exps = np.concatenate((exps[ei:], rng.exponential(size=block)))
                unis = np.concatenate((unis[ui:], rng.random(size=2 * block)))
                ei = ui = 0
            wait = float(exps[ei]) / float(chain.total_rate[x])
            ei += 1
            t_next = min(t + wait, horizon)
            for wi, (a, b) in enumerate(edges):
                lo, hi = max(t, a), min(t_next, b)
                if hi > lo:
                    win_vals[p, wi] += (hi - lo) * f_int[x]
            acc += (t_next - t) * f_int[x]
            t += wait
            if t >= horizon:
                break
            x, _, _, _ = _nb_move(x, float(unis[ui]), float(unis[ui + 1]), *_chain_args(chain)[:-1])
            ui += 2
    totals = win_vals.sum(axis=1)
    stderr = float(totals.std(ddof=1)) / math.sqrt(paths) if paths > 1 else 0.0
    widths = np.array([b - a for a, b in edges])
    means = list(win_vals.mean(axis=0) / widths)
    ses = list(win_vals.std(axis=0, ddof=1) / widths / math.sqrt(paths)) if paths > 1 else [0.0] * n_windows
    return edges, means, ses, stderr


def _adaptive_horizon(chain, f_int, start: int, cfg: McConfig):
    """Pick the Neumann time horizon from pilot runs.

    At each candidate horizon the decay of |E f(Y(t))| is refitted over the
    trailing dyadic windows; the horizon doubles until the fitted tail beyond
    it contributes less than a tenth of the pilot standard error.  Refitting
    at every doubling matters: early windows mix fast transients with the
    slow spectral mode and would otherwise understate the tail.  Once the
    trailing window is statistically indistinguishable from zero the tail is
    below Monte Carlo resolution and the horizon is accepted as is.
    """
    pilot_paths = min(256, cfg.paths)
    horizon = 16.0
    while True:
        edges, means, ses, stderr = _pilot_windows(
            chain, f_int, start, cfg.seed ^ 0x5EED, pilot_paths, horizon
        )
        beta, amp = _fit_tail(edges, means, ses)
        decay = math.exp(-beta) if beta is not None and beta > 0 else None
        if stderr == 0.0:
            return horizon, decay
        last_resolved = abs(means[-1]) > 2.0 * ses[-1]
        if not last_resolved and beta is None:
            # the running mean sits below pilot resolution beyond the first
            # window; the tail is unresolvable and negligible at this scale
            return horizon, decay
        if beta is not None and beta > 1e-3:
            tail = amp * math.exp(-beta * horizon) / beta
            if tail < 0.1 * stderr:
                return horizon, decay
        if horizon >= MAX_HORIZON:
            raise SolveError(
                "pilot runs show no usable decay of the running mean up to the "
                f"maximum horizon {MAX_HORIZON}; cannot truncate the time integral"
            )
        horizon *= 2.0


def _require_mean_zero(f: Field) -> None:
    mf = mean(f)
    if abs(mf) > MEAN_ZERO_TOL:
        raise PreconditionError(f"estimator needs a mean-zero load; got mean {mf:.3e}")


def _check_cfg(cfg: McConfig, g: Grid) -> None:
    if cfg.paths < MIN_REPORTED_PATHS:
        raise PreconditionError(
            f"at least {MIN_REPORTED_PATHS} paths are required for a reported estimate"
        )
    if not cfg.start_nodes:
        raise PreconditionError("cfg.start_nodes must list at least one interior node index")
    n = g.n_interior
    for s in cfg.start_nodes:
        if not 0 <= s < n:
            raise PreconditionError(f"start node {s} outside 0..{n - 1}")


def _write_path_dump(path, rows) -> None:
    """Raw per-path CSV: path id, start node, exit time (blank if none),
    integral value."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("path_id,start_node,exit_time,integral\n")
        for pid, start, t_exit, integral in rows:
            exit_cell = "" if t_exit is None else repr(float(t_exit))
            fh.write(f"{pid},{start},{exit_cell},{repr(float(integral))}\n")


def estimate_u_neumann(f: Field, cfg: McConfig, chi: Field, kernels, dump_path=None) -> PathStats:
    """Estimate the Neumann solution as minus the time integral of the load
    along chain trajectories, truncated at an adaptively certified horizon.

    ``dump_path`` optionally writes the raw per-path table as CSV.
    """
    g = f.grid
    _check_cfg(cfg, g)
    _require_mean_zero(f)
    chain = build_chain(g, chi, kernels, "neumann")
    f_int = f.interior_values
    start_states = np.array(cfg.start_nodes, dtype=int)
    horizon = cfg.horizon
    tail_decay = None
    if horizon is None:
        horizon, tail_decay = _adaptive_horizon(chain, f_int, int(start_states[0]), cfg)
    estimates = np.empty(len(start_states))
    stderrs = np.empty(len(start_states))
    mean_jumps = np.empty(len(start_states))
    rej_frac = np.empty(len(start_states))
    dump_rows = [] if dump_path is not None else None
    for si, s in enumerate(start_states):
        vals = np.empty(cfg.paths)
        epochs = np.empty(cfg.paths)
        rejects = np.empty(cfg.paths)
        for p in range(cfg.paths):
            pid = si * cfg.paths + p
            stream = _path_rng(cfg.seed, pid)
            integral, n_ep, n_rej = _neumann_path(chain, f_int, int(s), horizon, stream)
            vals[p], epochs[p], rejects[p] = integral, n_ep, n_rej
            if dump_rows is not None:
                dump_rows.append((pid, int(s), None, integral))
        estimates[si] = -float(vals.mean())
        stderrs[si] = float(vals.std(ddof=1)) / math.sqrt(cfg.paths)
        mean_jumps[si] = float(epochs.mean())
        rej_frac[si] = float(rejects.sum() / max(epochs.sum(), 1.0))
    if dump_rows is not None:
        _write_path_dump(dump_path, dump_rows)
    return PathStats(
        start_nodes=tuple(int(s) for s in start_states),
        estimates=estimates,
        stderrs=stderrs,
        mean_jumps=mean_jumps,
        rejection_fraction=rej_frac,
        mean_exit_time=None,
        exit_time_stderr=None,
        capped_fraction=0.0,
        horizon=float(horizon),
        tail_decay=tail_decay,
        paths=cfg.paths,
        seed=cfg.seed,
        mode="neumann",
    )


def q_inf(g: Grid, chi: Field, kernels) -> float:
    """Smallest one-jump exterior (killing) mass over interior nodes."""
    J, R, G = kernels
    rows = g.interior_indices
    pad = g.padded_indices
    if len(pad) == 0:
        return 0.0
    q = phase_coupling(g, chi, J, R, G, rows, pad).sum(axis=1) * g.weight
    return float(q.min())


def estimate_u_dirichlet(f: Field, cfg: McConfig, chi: Field, kernels, dump_path=None) -> PathStats:
    """Estimate the Dirichlet solution from killed trajectories.

    Requires a positive uniform one-jump killing probability; configurations
    with q_inf == 0 are refused because escape through several jumps is not
    simulated.  Paths hitting the epoch cap are excluded and counted.
    ``dump_path`` optionally writes the raw per-path table as CSV (capped
    paths appear with an empty exit time).
    """
    g = f.grid
    _check_cfg(cfg, g)
    q_hat = q_inf(g, chi, kernels)
    if q_hat <= 0.0:
        raise RefusalError(
            "one-jump killing probability vanishes somewhere (q_inf == 0); "
            "multi-jump escape is not implemented, so this configuration is refused"
        )
    chain = build_chain(g, chi, kernels, "dirichlet")
    cap = cfg.max_jumps if cfg.max_jumps is not None else math.ceil(50.0 / q_hat)
    f_int = f.interior_values
    start_states = np.array(cfg.start_nodes, dtype=int)
    n_start = len(start_states)
    estimates = np.empty(n_start)
    stderrs = np.empty(n_start)
    mean_jumps = np.empty(n_start)
    rej_frac = np.empty(n_start)
    mean_exit = np.empty(n_start)
    exit_se = np.empty(n_start)
    capped_total = 0
    dump_rows = [] if dump_path is not None else None
    for si, s in enumerate(start_states):
        vals, exits, eps, rejs = [], [], [], []
        for p in range(cfg.paths):
            pid = si * cfg.paths + p
            stream = _path_rng(cfg.seed, pid)
            integral, t_exit, n_ep, n_rej, completed = _dirichlet_path(
                chain, f_int, int(s), cap, stream
            )
            if dump_rows is not None:
                dump_rows.append((pid, int(s), t_exit if completed else None, integral))
            if not completed:
                capped_total += 1
                continue
            vals.append(integral)
            exits.append(t_exit)
            eps.append(n_ep)
            rejs.append(n_rej)
        if not vals:
            raise SolveError("every path hit the jump cap; increase max_jumps")
        vals_a = np.asarray(vals)
        exits_a = np.asarray(exits)
        n_done = len(vals_a)
        estimates[si] = -float(vals_a.mean())
        stderrs[si] = float(vals_a.std(ddof=1)) / math.sqrt(n_done) if n_done > 1 else 0.0
        mean_jumps[si] = float(np.mean(eps))
        rej_frac[si] = float(np.sum(rejs) / max(np.sum(eps), 1.0))
        mean_exit[si] = float(exits_a.mean())
        exit_se[si] = float(exits_a.std(ddof=1)) / math.sqrt(n_done) if n_done > 1 else 0.0
    if dump_rows is not None:
        _write_path_dump(dump_path, dump_rows)
    return PathStats(
        start_nodes=tuple(int(s) for s in start_states),
        estimates=estimates,
        stderrs=stderrs,
        mean_jumps=mean_jumps,
        rejection_fraction=rej_frac,
        mean_exit_time=mean_exit,
        exit_time_stderr=exit_se,
        capped_fraction=capped_total / (n_start * cfg.paths),
        horizon=None,
        tail_decay=None,
        paths=cfg.paths,
        seed=cfg.seed,
        mode="dirichlet",
    )


@dataclass(frozen=True)
class InvariantReport:
    tv_distance: float
    threshold: float
    passed: bool
    steps: int
    nodes: int


def invariant_measure_check(cfg: McConfig, chi: Field, kernels, steps: int | None = None) -> InvariantReport:
    """Compare the long-run time-weighted occupation with the uniform measure."""
    g = chi.grid
    chain = build_chain(g, chi, kernels, "neumann")
    n_steps = int(steps if steps is not None else cfg.paths)
    start = int(cfg.start_nodes[0]) if cfg.start_nodes else chain.n_states // 2
    rng = _path_rng(cfg.seed, 0)
    occupation = np.zeros(chain.n_states)
    exps = rng.exponential(size=n_steps)
    unis = rng.random(size=2 * n_steps)
    _nb_occupation(start, n_steps, exps, unis, *_chain_args(chain), occupation)
    occupation /= occupation.sum()
    n = chain.n_states
    tv = 0.5 * float(np.abs(occupation - 1.0 / n).sum())
    threshold = 5.0 * math.sqrt(n) / math.sqrt(n_steps)
    return InvariantReport(
        tv_distance=tv, threshold=threshold, passed=tv < threshold,
        steps=n_steps, nodes=n,
    )


def clock_sample_direct(rng: np.random.Generator, rates, size: int):
    """Min-of-clocks construction: one exponential per clock, argmin labels."""
    rates = np.asarray(rates, dtype=float)
    draws = rng.exponential(size=(size, len(rates))) / rates[None, :]
    return draws.min(axis=1), draws.argmin(axis=1)


def clock_sample_shortcut(rng: np.random.Generator, rates, size: int):
    """Equivalent shortcut: one exponential at the summed rate, categorical label."""
    rates = np.asarray(rates, dtype=float)
    total = rates.sum()
    waits = rng.exponential(scale=1.0 / total, size=size)
    labels = rng.choice(len(rates), size=size, p=rates / total)
    return waits, labels


@dataclass(frozen=True)
class ClockEquivalenceReport:
    ks_statistic: float
    ks_pvalue: float
    chi2_statistic: float
    chi2_pvalue: float
    level: float

    @property
    def passed(self) -> bool:
        return self.ks_pvalue > self.level and self.chi2_pvalue > self.level


def clock_equivalence_report(seed: int, size: int = 100_000, rates=(1.0, 1.0, 1.0), level: float = 1e-3) -> ClockEquivalenceReport:
    """Test that the two clock constructions produce the same joint law."""
    rng = np.random.default_rng([seed, 0xC10C])
    w_direct, l_direct = clock_sample_direct(rng, rates, size)
    w_short, l_short = clock_sample_shortcut(rng, rates, size)
    ks = stats.ks_2samp(w_direct, w_short)
    k = len(rates)
    table = np.stack([np.bincount(l_direct, minlength=k), np.bincount(l_short, minlength=k)])
    chi2 = stats.chi2_contingency(table)
    return ClockEquivalenceReport(
        ks_statistic=float(ks.statistic),
        ks_pvalue=float(ks.pvalue),
        chi2_statistic=float(chi2.statistic),
        chi2_pvalue=float(chi2.pvalue),
        level=level,
    )


@dataclass(frozen=True, eq=False)
class GeneratorConsistencyReport:
    z_scores: np.ndarray
    max_abs_z: float
    samples: int

    @property
    def passed(self) -> bool:
        return self.max_abs_z <= 3.0


def generator_consistency_report(
    chain: ChainModel,
    op: OperatorMatrix,
    seed: int,
    n_funcs: int = 10,
    states: tuple[int, ...] = (),
    samples: int = 40_000,
) -> GeneratorConsistencyReport:
    """Check E[phi(next) - phi(x)] * total_rate(x) against the matrix rows.

    The one-step expected change, scaled by the clock-rate sum, must match
    (L phi)(x) to Monte Carlo accuracy; this ties the simulator to the
    assembled generator.
    """
    rng = np.random.default_rng([seed, 0x6E6])
    n = chain.n_states
    if not states:
        states = (n // 4, n // 2)
    phis = rng.standard_normal((n_funcs, n))
    z_scores = []
    for x in states:
        rate = float(chain.total_rate[x])
        u_label = rng.random(samples)
        u_prop = rng.random(samples)
        labels = np.searchsorted(chain.label_cdf[x], u_label).clip(max=2)
        member_x = bool(chain.member_state[x])
        for phi in phis:
            # phi extends by zero outside the box, so a killed move lands at 0
            phi_next = np.full(samples, phi[x])
            for lab in range(3):
                mask = labels == lab
                if not mask.any():
                    continue
                j = np.searchsorted(chain.prop_cdf[lab, x], u_prop[mask]).clip(
                    max=len(chain.region) - 1
                )
                member_y = chain.member_region[j]
                if lab == 0:
                    ok = member_y if member_x else np.zeros(len(j), dtype=bool)
                elif lab == 1:
                    ok = member_y != member_x
                else:
                    ok = ~member_y if not member_x else np.zeros(len(j), dtype=bool)
                inside = chain.region_interior[j]
                vals = np.full(len(j), phi[x])
                vals[ok & inside] = phi[chain.interior_pos[j[ok & inside]]]
                vals[ok & ~inside] = 0.0
                phi_next[mask] = vals
            delta = phi_next - phi[x]
            mc = delta.mean() * rate
            se = delta.std(ddof=1) / math.sqrt(samples) * rate
            exact = float(op.matrix[x] @ phi)
            z_scores.append((mc - exact) / se if se > 0 else 0.0)
    z = np.asarray(z_scores)
    return GeneratorConsistencyReport(z_scores=z, max_abs_z=float(np.abs(z).max()), samples=samples)
