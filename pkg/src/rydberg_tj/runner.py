"""Configuration-driven pipeline: sector setup, spectra, ramps, shots, reconstruction.

A run configuration is a JSON document. ``"include": [paths]`` pulls shared
blocks from other files (relative to the including file); keys in the
including document win, nested mappings merge recursively.

Blocks::

    geometry      kind, n_sites, a, h, positions (optional)
    couplings     t_up, t_dn, J_perp, J_z, a_ref, sign_mode, units ("MHz" or "rad/us")
    sector        holes: [sites], magnons: [sites]
    light_shift   delta0, delta_knee, t_knee, tau, units; enabled (default true)
    schedule      t_end, snapshots, max_step, krylov_dim, tol, method
    spectrum      k (eigenpairs), manifold (bound-manifold size), threshold
    binding       ratios | {start, stop, num}, n_sites, a, n_magnons, reference, spin_average
    measurement   bases, shots, channel (false | true | {rates})
    reconstruction invert_errors (default false)
    initmodel     region, n_shots, shots_dir, fit {...}
    seeds         named integer seeds (measure, synthetic, fit)

Every step writes into its own subdirectory of the output directory and
records file hashes plus a completion flag in ``manifest.json``.
"""
from __future__ import annotations

import hashlib
import json
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .dynamics import EvolutionSchedule, RampedHamiltonian, evolve, load_snapshots, overlap_trace, \
    product_state, save_snapshots
from .geometry import LatticeGeometry, geometry_from_dict
from .hamiltonian import CouplingSet, LightShiftProgram, RampProfile, build_tJ, mhz
from .hilbert import DOWN, HOLE, UP, SectorBasis
from .initmodel import BoltzmannModel, FitSettings, ROWS, costs, dressed_expectations, \
    empirical_from_shots, fit, sample_initial_configurations, save_model
from .measurement import BASIS_TAGS, ErrorChannel, load_shots, pair_outcomes, sample_shots, save_shots, \
    shots_from_configurations
from .observables import com_distribution, densities, relative_correlation_map, sym_pair_matrix
from .reconstruction import BASIS_ORDER, invert_error_model, measured_pair_vector, reconstruct_pair_combos
from .spectra import binding_sweep, bound_manifold, lowest_eigenpairs
from .toymodel import effective_tunneling_sign, plaquette_spectrum

__all__ = [
    "ConfigError",
    "MissingArtifactError",
    "OverwriteError",
    "RunConfig",
    "load_config",
    "validate_config",
    "Artifact",
    "STEPS",
    "run_step",
    "run",
    "synthetic_model",
]

STEPS = ("ground", "ramp", "measure", "reconstruct", "fit-init", "toycheck")


class ConfigError(ValueError):
    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


class MissingArtifactError(FileNotFoundError):
    pass


class OverwriteError(RuntimeError):
    pass


# ---------------------------------------------------------------- config

def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path, _stack=()) -> tuple[dict, list[Path]]:
    """Read a config with its includes. Returns ``(merged, files_read)``."""
    path = Path(path).resolve()
    if path in _stack:
        raise ConfigError("include", f"include cycle through {path}")
    if not path.exists():
        raise ConfigError("config", f"file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(str(path), f"invalid JSON ({e})") from None
    incs = doc.pop("include", [])
    if isinstance(incs, str):
        incs = [incs]
    merged, files = {}, []
    for inc in incs:
        sub, sub_files = load_config(path.parent / inc, _stack + (path,))
        merged = _merge(merged, sub)
        files += sub_files
    return _merge(merged, doc), files + [path]


def _amp(block, key, units):
    v = block[key]
    return mhz(v) if units == "MHz" else float(v)


@dataclass(frozen=True)
class RunConfig:
    raw: dict
    geometry: LatticeGeometry
    couplings: CouplingSet
    holes: tuple
    magnons: tuple
    program: LightShiftProgram | None
    schedule: EvolutionSchedule
    seeds: dict
    base_dir: Path = field(default=Path("."), compare=False)

    @property
    def basis(self) -> SectorBasis:
        return SectorBasis(self.geometry.n_sites, len(self.holes), len(self.magnons))

    @property
    def initial_config(self) -> np.ndarray:
        c = np.full(self.geometry.n_sites, DOWN, dtype=np.int8)
        c[list(self.holes)] = HOLE
        c[list(self.magnons)] = UP
        return c

    def block(self, name) -> dict:
        return dict(self.raw.get(name) or {})

    def seed(self, name: str) -> int:
        if name not in self.seeds:
            raise ConfigError(f"seeds.{name}", "seed required (no ambient randomness)")
        return int(self.seeds[name])

    @property
    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()


def validate_config(raw: dict, seed_override: int | None = None, base_dir=".") -> RunConfig:
    """Check every block and build the typed objects; errors name the field path."""
    raw = json.loads(json.dumps(raw))
    if seed_override is not None:
        raw["seeds"] = {k: int(seed_override) for k in (raw.get("seeds") or {"measure": 0})}
        raw["seed_override"] = int(seed_override)
    gd = raw.get("geometry")
    if not gd:
        raise ConfigError("geometry", "missing or empty geometry block")
    try:
        g = geometry_from_dict(gd)
    except (ValueError, KeyError, TypeError) as e:
        raise ConfigError("geometry", str(e)) from None
    n = g.n_sites

    cd = dict(raw.get("couplings") or {})
    try:
        c = CouplingSet.from_dict(cd)
    except (ValueError, TypeError) as e:
        raise ConfigError("couplings", str(e)) from None

    sd = raw.get("sector") or {}
    holes = tuple(int(s) for s in sd.get("holes", ()))
    magnons = tuple(int(s) for s in sd.get("magnons", ()))
    for name, sites in (("holes", holes), ("magnons", magnons)):
        bad = [s for s in sites if not 0 <= s < n]
        if bad:
            raise ConfigError(f"sector.{name}", f"sites {bad} outside 0..{n - 1}")
        if len(set(sites)) != len(sites):
            raise ConfigError(f"sector.{name}", "repeated site")
    if set(holes) & set(magnons):
        raise ConfigError("sector", "a site cannot hold both a hole and a magnon")

    ld = dict(raw.get("light_shift") or {})
    program = None
    if ld.get("enabled", True) and (holes or magnons):
        units = ld.get("units", "MHz")
        try:
            defaults = RampProfile()
            prof = RampProfile(
                delta0=_amp(ld, "delta0", units) if "delta0" in ld else defaults.delta0,
                delta_knee=_amp(ld, "delta_knee", units) if "delta_knee" in ld else defaults.delta_knee,
                t_knee=float(ld.get("t_knee", defaults.t_knee)),
                tau=float(ld.get("tau", defaults.tau)),
                sign=-1 if c.sign_mode == "negated" else 1,
            )
            program = LightShiftProgram(magnon_sites=magnons, hole_sites=holes, profile=prof)
        except (ValueError, TypeError) as e:
            raise ConfigError("light_shift", str(e)) from None

    sch = dict(raw.get("schedule") or {})
    try:
        if "snapshots" in sch:
            sch["snapshots"] = tuple(sch["snapshots"])
        sched = EvolutionSchedule(**sch)
    except (ValueError, TypeError) as e:
        raise ConfigError("schedule", str(e)) from None

    md = raw.get("measurement") or {}
    for b in md.get("bases", ()):
        if b not in BASIS_TAGS:
            raise ConfigError("measurement.bases", f"unknown basis {b!r}; choose from {sorted(BASIS_TAGS)}")
    if "shots" in md and int(md["shots"]) < 1:
        raise ConfigError("measurement.shots", "must be positive")
    ch = md.get("channel", False)
    if isinstance(ch, dict):
        try:
            ErrorChannel(**ch)
        except (ValueError, TypeError) as e:
            raise ConfigError("measurement.channel", str(e)) from None

    im = raw.get("initmodel") or {}
    reg = im.get("region", ())
    bad = [s for s in reg if not 0 <= int(s) < n]
    if bad:
        raise ConfigError("initmodel.region", f"sites {bad} outside 0..{n - 1}")

    seeds = raw.get("seeds") or {}
    for k, v in seeds.items():
        if not isinstance(v, int) or isinstance(v, bool):
            raise ConfigError(f"seeds.{k}", "seeds must be integers")
    return RunConfig(raw, g, c, holes, magnons, program, sched, dict(seeds), Path(base_dir))


def _channel(cfg: RunConfig) -> ErrorChannel | None:
    ch = cfg.block("measurement").get("channel", False)
    if ch is True:
        return ErrorChannel()
    if isinstance(ch, dict):
        return ErrorChannel(**ch)
    return None


# ---------------------------------------------------------------- artifact directory

def _sha(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Artifact:
    """Output directory with a manifest of inputs, versions and step states."""

    def __init__(self, out, cfg: RunConfig, inputs=(), force: bool = False):
        self.root = Path(out)
        self.root.mkdir(parents=True, exist_ok=True)
        self.path = self.root / "manifest.json"
        doc = json.loads(self.path.read_text()) if self.path.exists() else None
        if doc and doc.get("config_sha256") != cfg.hash:
            if not force:
                raise OverwriteError(
                    f"{self.root} holds outputs of a different config "
                    f"(sha256 {doc.get('config_sha256', '?')[:12]}); pass --force to overwrite")
            doc = None
        self.doc = doc or {
            "config_sha256": cfg.hash,
            "config": cfg.raw,
            "inputs": {},
            "versions": {"rydberg_tj": __version__, "numpy": np.__version__,
                         "scipy": scipy.__version__, "python": platform.python_version()},
            "steps": {},
        }
        for p in inputs:
            self.doc["inputs"][str(p)] = _sha(p)
        self._save()

    def _save(self):
        tmp = self.path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self.doc, indent=2, sort_keys=True))
        tmp.replace(self.path)

    def begin(self, step: str) -> Path:
        d = self.root / step
        d.mkdir(exist_ok=True)
        self.doc["steps"][step] = {"status": "running", "files": {}}
        self._save()
        return d

    def finish(self, step: str, ok: bool = True, **extra):
        d = self.root / step
        files = {str(p.relative_to(self.root)): _sha(p) for p in sorted(d.rglob("*")) if p.is_file()}
        self.doc["steps"][step] = {"status": "complete" if ok else "failed", "files": files, **extra}
        self._save()

    def require(self, step: str, name: str) -> Path:
        p = self.root / step / name
        st = self.doc["steps"].get(step, {}).get("status")
        if st != "complete" or not p.exists():
            raise MissingArtifactError(f"missing upstream artifact {p} (run the '{step}' step first)")
        return p


def _pmap(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(threads) as ex:
        return list(ex.map(fn, items))


def _write_table(path, header, rows, fmt="{:.12g}"):
    with open(path, "w") as fh:
        fh.write("# " + "\t".join(header) + "\n")
        for r in rows:
            fh.write("\t".join(str(x) if isinstance(x, (str, int, np.integer)) else fmt.format(x)
                               for x in r) + "\n")


def _write_triples(path, M):
    n = M.shape[0]
    _write_table(path, ("i", "j", "value"), [(i, j, M[i, j]) for i in range(n) for j in range(n)])


def _write_state_observables(d: Path, tag: str, psi, b: SectorBasis, cfg: RunConfig):
    g = cfg.geometry
    dens = densities(psi, b)
    _write_table(d / f"densities_{tag}.tsv", ("site", "n_down", "n_up", "n_hole"),
                 [(i, *dens[:, i]) for i in range(b.n_sites)])
    if b.n_holes and (b.n_up or 0):
        S = sym_pair_matrix(psi, b, connected=True)
        _write_triples(d / f"pairs_{tag}.tsv", S)
        relative_correlation_map(psi, b, g, pair_matrix=S).save_text(d / f"corr_{tag}.tsv")
        com = com_distribution(psi, b, g)
        xs, mass = com.profile(0)
        _write_table(d / f"com_{tag}.tsv", ("x", "mass"), list(zip(xs, mass)))


# ---------------------------------------------------------------- steps

def _step_ground(cfg, art, threads, out):
    spec = cfg.block("spectrum")
    if cfg.holes or cfg.magnons:
        b = cfg.basis
        H = build_tJ(cfg.geometry, b, cfg.couplings)
        k = min(int(spec.get("k", 10)), b.dim)
        rep = lowest_eigenpairs(H, k, seed=int(spec.get("seed", 0)))
        size = min(int(spec.get("manifold", 10)), k)
        rows = [(i, rep.eigenvalues[i], rep.residuals[i]) for i in range(k)]
        cols = ("index", "energy", "residual")
        extra = {}
        if b.n_holes == 1 and (b.n_up or 0) >= 1:
            idx, dist, ok = bound_manifold(rep, b, size, cfg.geometry,
                                           threshold=float(spec.get("threshold", 1.5)))
            rows = [r + ((dist[r[0]],) if r[0] < size else (float("nan"),)) for r in rows]
            cols += ("hole_magnon_distance",)
            extra["bound_manifold"] = bool(ok)
        _write_table(out / "spectrum.tsv", cols, rows)
        np.save(out / "eigenstates.npy", rep.eigenstates[:, :size])
        _write_state_observables(out, "ground", rep.state(0), b, cfg)
    bd = cfg.block("binding")
    if bd:
        r = bd.get("ratios", {"start": 0.0, "stop": 1.0, "num": 21})
        ratios = np.linspace(r["start"], r["stop"], int(r["num"])) if isinstance(r, dict) else np.asarray(r)
        kw = dict(n_sites=int(bd.get("n_sites", cfg.geometry.n_sites)), a=float(bd.get("a", cfg.geometry.a)),
                  c=cfg.couplings, n_magnons=int(bd.get("n_magnons", 1)),
                  reference=bd.get("reference", "nearest"), spin_average=bool(bd.get("spin_average", True)))
        rows = _pmap(lambda x: binding_sweep([x], **kw)[0], list(ratios), threads)
        _write_table(out / "binding.tsv", ("h_over_a", "E_b_over_t"), rows)
    return {}


def _step_ramp(cfg, art, threads, out):
    if cfg.program is None:
        raise ConfigError("sector", "the ramp needs hole and/or magnon sites")
    b = cfg.basis
    H0 = build_tJ(cfg.geometry, b, cfg.couplings)
    psi0 = product_state(b, cfg.initial_config)
    snaps = evolve(psi0, RampedHamiltonian(H0, cfg.program), cfg.schedule)
    save_snapshots(out / "snapshots.tsv", snaps)
    manifold = int(cfg.block("spectrum").get("manifold", 10))
    rep = lowest_eigenpairs(H0, min(manifold, b.dim))
    tr = overlap_trace(snaps, rep.eigenstates, manifold=min(manifold, b.dim))
    _write_table(out / "overlaps.tsv", ("time", "ground_overlap", "manifold_projection", "norm"),
                 [(t, tr["overlaps"][k, 0], tr["manifold"][k], st.norm) for k, (t, st) in enumerate(snaps)])
    for t, st in snaps:
        _write_state_observables(out, f"t{t:g}", st, b, cfg)
    return {"final_ground_overlap": float(tr["overlaps"][-1, 0]),
            "final_manifold_projection": float(tr["manifold"][-1])}


def _step_measure(cfg, art, threads, out):
    snap_file = art.require("ramp", "snapshots.tsv")
    b = cfg.basis
    T, psi = load_snapshots(snap_file, b)[-1]
    md = cfg.block("measurement")
    bases = md.get("bases", list(BASIS_ORDER))
    n = int(md.get("shots", 1000))
    ch = _channel(cfg)
    seed = cfg.seed("measure")
    shots_dir = out / "shots"
    shots_dir.mkdir(exist_ok=True)
    batches = _pmap(lambda tag: sample_shots(psi, b, tag, ch, n, seed), bases, threads)
    for tag, bt in zip(bases, batches):  # single collector
        save_shots(bt, shots_dir / f"{tag}.txt")
    return {"time": T, "bases": list(bases), "shots": n}


def _step_reconstruct(cfg, art, threads, out):
    batches = {tag: load_shots(art.require("measure", f"shots/{tag}.txt")) for tag in BASIS_ORDER}
    nsite = batches["up"].n_sites
    ch_doc = batches["up"].channel
    ch = ErrorChannel(**ch_doc) if ch_doc else None
    # dividing out the detection model is opt-in; raw combos are the default
    invert = bool(cfg.block("reconstruction").get("invert_errors", False)) and ch is not None
    names = ("spin_spin", "sym_hole_sz", "sym_hole_up")
    rows = []
    M = {k: np.zeros((nsite, nsite)) for k in names}
    for i in range(nsite):
        for j in range(i + 1, nsite):
            m = measured_pair_vector({t: pair_outcomes(batches[t], i, j) for t in BASIS_ORDER})
            cmb = invert_error_model(m, ch) if invert else reconstruct_pair_combos(m)
            rows.append((i, j, *(cmb[k] for k in names)))
            for k in names:
                M[k][i, j] = M[k][j, i] = cmb[k]
    _write_table(out / "pair_combos.tsv", ("i", "j") + names, rows)
    # connected symmetric hole-magnon map from the hole and up bases
    nh = 1 - batches["hole"].bits.mean(axis=0)
    nu = 1 - batches["up"].bits.mean(axis=0)
    if ch is None or invert:
        S = M["sym_hole_up"] - (np.outer(nh, nu) + np.outer(nu, nh))
        np.fill_diagonal(S, 0.0)
        _write_triples(out / "pairs_reconstructed.tsv", S)
        relative_correlation_map(None, None, cfg.geometry, pair_matrix=S).save_text(out / "corr_reconstructed.tsv")
    return {"channel_inverted": invert}


def synthetic_model(n_sites: int, region, target, seed: int, coupling_scale: float = 0.7) -> BoltzmannModel:
    """A reproducible correlated model peaked on ``target`` for round-trip tests."""
    rng = np.random.default_rng(seed)
    m0 = BoltzmannModel.zeros(n_sites, tuple(region))
    h = rng.normal(0.0, 0.5, (n_sites, 5))
    h[np.arange(n_sites), np.asarray(target)] += 3.0
    J = rng.normal(0.0, coupling_scale, m0.J.shape)
    return m0.with_params(np.concatenate([J.ravel(), h.ravel()]))


def _step_fit_init(cfg, art, threads, out):
    im = cfg.block("initmodel")
    n = cfg.geometry.n_sites
    region = tuple(int(s) for s in im.get("region") or _default_region(cfg))
    ch = _channel(cfg) or ErrorChannel()
    shots_dir = im.get("shots_dir")
    truth = None
    if shots_dir:
        base = cfg.base_dir / shots_dir
        files = {r: base / f"{r}.txt" for r in ROWS}
        missing = [str(p) for p in files.values() if not p.exists()]
        if missing:
            raise MissingArtifactError(f"missing shot files {missing}")
        batches = {r: load_shots(p) for r, p in files.items()}
    else:
        truth = synthetic_model(n, region, cfg.initial_config, cfg.seed("synthetic"))
        ns = int(im.get("n_shots", 20000))
        batches = {}
        sdir = out / "shots"
        sdir.mkdir(exist_ok=True)
        for k, r in enumerate(ROWS):
            cfgs = sample_initial_configurations(truth, ns, seed=cfg.seed("synthetic") + 1 + k)
            batches[r] = shots_from_configurations(cfgs, r, ch, seed=cfg.seed("synthetic"))
            save_shots(batches[r], sdir / f"{r}.txt")
        save_model(truth, out / "true_model.json")
    data = empirical_from_shots(batches, region)
    fs = dict(im.get("fit") or {})
    if "target" in fs and fs["target"] == "sector":
        fs["target"] = tuple(int(x) for x in cfg.initial_config)
    settings = FitSettings(**{**fs, "seed": cfg.seed("fit")})
    res = fit(data, settings, ch, n_sites=n)
    save_model(res.model, out / "model.json")
    c = costs(res.model, data, ch, settings)
    rows = [(k, c[k]) for k in ("one", "two", "lost", "target", "fit", "true")]
    summary = {"cost_true": res.cost_true, "cost_fit": res.cost_fit, "converged": res.converged}
    d_fit = dressed_expectations(res.model, ch)
    iu = np.triu_indices(len(region), 1)
    summary["max_one_error_vs_data"] = float(np.abs(d_fit["one"] - data.one).max())
    summary["max_two_error_vs_data"] = float(np.abs(d_fit["two"][:, iu[0], iu[1]]
                                                    - data.two[:, iu[0], iu[1]]).max())
    rows += [(k, summary[k]) for k in ("max_one_error_vs_data", "max_two_error_vs_data")]
    if truth is not None:
        # limited by shot noise, not by the fit
        d_true = dressed_expectations(truth, ch)
        summary["max_one_error_vs_truth"] = float(np.abs(d_fit["one"] - d_true["one"]).max())
        summary["max_two_error_vs_truth"] = float(np.abs(d_fit["two"] - d_true["two"]).max())
        rows += [("max_one_error_vs_truth", summary["max_one_error_vs_truth"]),
                 ("max_two_error_vs_truth", summary["max_two_error_vs_truth"])]
    _write_table(out / "costs.tsv", ("term", "value"), rows)
    _write_table(out / "trace.tsv", ("iteration", "cost_fit"), list(enumerate(res.trace)))
    return summary


def _default_region(cfg: RunConfig, size: int = 6):
    """The ``size`` sites closest to the intended defects."""
    defects = list(cfg.holes + cfg.magnons) or [cfg.geometry.n_sites // 2]
    d = cfg.geometry.distances[defects].min(axis=0)
    return sorted(np.argsort(d, kind="stable")[:size].tolist())


def _step_toycheck(cfg, art, threads, out, t: float = 1.0):
    rows, ok = [], True
    for sector in ("polarized", "triplet", "singlet"):
        r = plaquette_spectrum(t, sector)
        good = r.max_error < 1e-12 and r.block_leak < 1e-12
        ok &= good
        rows.append((sector, *r.energies, *r.analytic, r.max_error, "ok" if good else "MISMATCH"))
    _write_table(out / "plaquette.tsv",
                 ("sector", "e0", "e1", "e2", "analytic0", "analytic1", "analytic2", "max_error", "status"), rows)
    signs = {p: effective_tunneling_sign(p, t) for p in ("triplet", "singlet")}
    ok &= abs(signs["triplet"] - t) < 1e-12 and abs(signs["singlet"] + t) < 1e-12
    _write_table(out / "tunneling.tsv", ("pair", "matrix_element", "expected"),
                 [("triplet", signs["triplet"], t), ("singlet", signs["singlet"], -t)])
    return {"ok": bool(ok)}


_STEP_FUN = {"ground": _step_ground, "ramp": _step_ramp, "measure": _step_measure,
             "reconstruct": _step_reconstruct, "fit-init": _step_fit_init, "toycheck": _step_toycheck}


def run_step(step: str, cfg: RunConfig, art: Artifact, threads: int = 1) -> dict:
    if step not in _STEP_FUN:
        raise ValueError(f"unknown step {step!r}; choose from {STEPS}")
    out = art.begin(step)
    try:
        info = _STEP_FUN[step](cfg, art, max(1, int(threads)), out)
    except BaseException:
        art.finish(step, ok=False)
        raise
    art.finish(step, ok=info.get("ok", True), summary=info)
    return info


def run(config, out, steps=None, threads: int = 1, seed_override: int | None = None,
        force: bool = False) -> Path:
    """Run ``steps`` (default: the whole pipeline the config supports) into ``out``."""
    if isinstance(config, (str, Path)):
        raw, files = load_config(config)
        base = Path(config).resolve().parent
    else:
        raw, files, base = dict(config), [], Path(".")
    cfg = validate_config(raw, seed_override, base)
    art = Artifact(out, cfg, files, force)
    if steps is None:
        steps = ["ground"]
        if cfg.program is not None:
            steps += ["ramp"]
            if cfg.block("measurement"):
                steps += ["measure", "reconstruct"]
        if cfg.block("initmodel"):
            steps += ["fit-init"]
    for s in steps:
        run_step(s, cfg, art, threads)
    return art.root

